#pragma once

#include <Eigen/Dense>
#include <complex>
#include <deque>
#include <optional>
#include <variant>
#include <vector>

#include "gsfg/errors.hpp"
#include "gsfg/expr.hpp"

namespace gsfg {

enum class Scheme { Euler, RK4 };

// --- node dynamics kinds ----------------------------------------------------

struct Identity {};

/// y = f(u); the expression may reference only `u`.
struct StaticFunction {
    expr::AstPtr f;
};

/// Transfer function with descending-power coefficients, e.g. num=[1],
/// den=[1,6,11,6] is 1/(s^3+6s^2+11s+6). The single admitted improper form is
/// c*s (num=[c,0], den=[d]), realized as a backward difference.
struct LinearTF {
    std::vector<double> num;
    std::vector<double> den;
};

struct LinearSS {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;

    int order() const { return static_cast<int>(A.rows()); }
};

/// dx/dt = f(x, u), y = h(x, u); expressions over x1..xn and u.
struct NonlinearODE {
    std::vector<expr::AstPtr> f;
    expr::AstPtr h;
};

struct Delay {
    double tau = 0.0;
};

using DynamicsKind =
    std::variant<Identity, StaticFunction, LinearTF, LinearSS, NonlinearODE, Delay>;

// --- Fréchet strategies -----------------------------------------------------

struct DcGain {};

struct StepResponseHorizon {
    double horizon = 1.0;
};

struct TrajectoryLinearization {};

struct ConstantFrechet {
    double value = 1.0;
};

using FrechetStrategy =
    std::variant<DcGain, StepResponseHorizon, TrajectoryLinearization, ConstantFrechet>;

struct NodeSpec {
    NodeId id = 0;
    DynamicsKind dynamics = Identity{};
    std::optional<FrechetStrategy> frechet;  // unset: default for the kind
};

// --- operations ---------------------------------------------------------------

/// Controllable-canonical realization. Throws SemanticError for an empty or
/// leading-zero denominator and for improper ratios (the pure-derivative form
/// is handled by the stepping layer, not here).
LinearSS tf_to_ss(const std::vector<double>& num, const std::vector<double>& den);

/// True when the transfer function is the admitted improper form c*s.
bool is_pure_derivative(const LinearTF& tf);

/// Steady-state gain. Throws PoleAtOrigin when den(0)=0 / A is singular.
double dc_gain(const LinearTF& tf);
double dc_gain(const LinearSS& ss);

/// Dispatch over a node's dynamics: Identity and Delay give 1; static
/// functions and nonlinear ODEs have no frequency response and are rejected
/// with SemanticError.
double dc_gain_of(const DynamicsKind& dynamics, NodeId node = -1);

/// Jacobian linearization of an ODE node at (x0, u0) by central differences.
LinearSS linearize(const NonlinearODE& ode, const Eigen::VectorXd& x0, double u0,
                   NodeId node = -1);

/// Roots of den(s), via the companion-matrix eigenvalues.
std::vector<std::complex<double>> poles_of(const std::vector<double>& den);

/// A node prepared for fixed-step simulation: transfer functions realized,
/// expressions bound, the delay ring sized to round(tau/dt).
class NodeSim {
public:
    NodeSim(NodeSpec spec, double dt);

    /// Output at the current state; `u` matters only for feedthrough kinds.
    double output(double u) const;

    /// Advance the state one dt with `u` held (zero-order hold).
    void advance(double u, Scheme scheme);

    /// Self-contained step: advance-then-emit for stateful kinds, emit for
    /// feedthrough kinds, push/pop for the delay line.
    double step(double u, Scheme scheme);

    /// Output depends algebraically on the same-instant input.
    bool feedthrough() const { return feedthrough_; }

    bool state_finite() const;
    void reset();

    const NodeSpec& spec() const { return spec_; }
    const Eigen::VectorXd& state() const { return x_; }
    void set_state(const Eigen::VectorXd& x);
    double dt() const { return dt_; }

    /// The realized linear system, when the node is LinearTF or LinearSS.
    const LinearSS* realization() const;

    double static_derivative(double u) const;  // f'(u) for StaticFunction
    double ode_rhs(int i, std::span<const double> xu) const;  // bound f_i

private:
    void derivs(const Eigen::VectorXd& x, double u, Eigen::VectorXd& dx) const;

    NodeSpec spec_;
    double dt_;
    bool feedthrough_ = false;
    bool derivative_ = false;     // backward-difference c*s node
    double deriv_gain_ = 1.0;
    double prev_u_ = 0.0;
    std::optional<LinearSS> ss_;  // realization for TF/SS nodes
    std::vector<expr::BoundExpr> f_;
    expr::BoundExpr h_;
    bool h_uses_u_ = false;
    Eigen::VectorXd x_;
    std::deque<double> ring_;
    mutable Eigen::VectorXd k1_, k2_, k3_, k4_, xtmp_;
};

/// Unit-step response value p(T), simulated from zero state at step dt.
/// Throws Diverged when |y| exceeds `blowup` on the way.
double step_response_value(const DynamicsKind& dynamics, double T, double dt,
                           double blowup = 1e12, NodeId node = -1);

/// One Fréchet-derivative value per the node's strategy. `u` is the current
/// node input and `x` the current state (used by trajectory linearization and
/// static-function derivatives). Throws PoleAtOrigin / Diverged with the node
/// id; the caller owns any fallback.
double frechet_value(const NodeSpec& node, double u, const Eigen::VectorXd& x,
                     double dt);

}  // namespace gsfg
