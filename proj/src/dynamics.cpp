#include "gsfg/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace gsfg {

namespace {

std::string node_tag(NodeId node) {
    return node >= 0 ? " (node " + std::to_string(node) + ")" : "";
}

std::vector<std::string> state_variable_names(int n) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
    names.push_back("u");
    return names;
}

}  // namespace

LinearSS tf_to_ss(const std::vector<double>& num, const std::vector<double>& den) {
    if (den.empty()) throw SemanticError("empty denominator");
    if (den.front() == 0.0)
        throw SemanticError("denominator leading coefficient is zero");
    if (num.size() > den.size())
        throw SemanticError("improper transfer function (deg num > deg den)");

    const int n = static_cast<int>(den.size()) - 1;
    const double scale = den.front();

    // monic denominator s^n + a1 s^(n-1) + ... + an
    std::vector<double> a(den.size());
    for (std::size_t i = 0; i < den.size(); ++i) a[i] = den[i] / scale;

    std::vector<double> b(den.size(), 0.0);  // numerator, aligned to den
    const std::size_t pad = den.size() - num.size();
    for (std::size_t i = 0; i < num.size(); ++i) b[pad + i] = num[i] / scale;

    LinearSS ss;
    ss.D = b[0];

    ss.A = Eigen::MatrixXd::Zero(n, n);
    ss.B = Eigen::VectorXd::Zero(n);
    ss.C = Eigen::RowVectorXd::Zero(n);
    if (n == 0) return ss;

    for (int i = 0; i + 1 < n; ++i) ss.A(i, i + 1) = 1.0;
    for (int j = 0; j < n; ++j) ss.A(n - 1, j) = -a[static_cast<std::size_t>(n - j)];
    ss.B(n - 1) = 1.0;
    // remainder of num / den; the quotient became D
    for (int j = 0; j < n; ++j) {
        const std::size_t i = static_cast<std::size_t>(n - j);
        ss.C(j) = b[i] - ss.D * a[i];
    }
    return ss;
}

bool is_pure_derivative(const LinearTF& tf) {
    return tf.den.size() == 1 && tf.den.front() != 0.0 && tf.num.size() == 2 &&
           tf.num[1] == 0.0 && tf.num[0] != 0.0;
}

double dc_gain(const LinearTF& tf) {
    if (tf.den.empty()) throw SemanticError("empty denominator");
    if (tf.den.back() == 0.0)
        throw PoleAtOrigin("dc gain undefined: pole at the origin (den(0)=0)");
    return (tf.num.empty() ? 0.0 : tf.num.back()) / tf.den.back();
}

double dc_gain(const LinearSS& ss) {
    if (ss.order() == 0) return ss.D;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(-ss.A);
    if (!lu.isInvertible())
        throw PoleAtOrigin("dc gain undefined: state matrix has a zero eigenvalue");
    return ss.C * lu.solve(ss.B) + ss.D;
}

double dc_gain_of(const DynamicsKind& dynamics, NodeId node) {
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Identity>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, Delay>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, LinearTF>) {
                try {
                    return dc_gain(d);
                } catch (const PoleAtOrigin& e) {
                    throw PoleAtOrigin(e.what() + node_tag(node), node);
                }
            } else if constexpr (std::is_same_v<T, LinearSS>) {
                try {
                    return dc_gain(d);
                } catch (const PoleAtOrigin& e) {
                    throw PoleAtOrigin(e.what() + node_tag(node), node);
                }
            } else {
                throw SemanticError("dc gain requires linear dynamics" + node_tag(node));
            }
        },
        dynamics);
}

LinearSS linearize(const NonlinearODE& ode, const Eigen::VectorXd& x0, double u0,
                   NodeId node) {
    const int n = static_cast<int>(ode.f.size());
    if (x0.size() != n)
        throw SemanticError("linearize: state dimension mismatch" + node_tag(node));

    const auto names = state_variable_names(n);
    std::vector<expr::BoundExpr> f;
    f.reserve(ode.f.size());
    for (const auto& fi : ode.f) f.emplace_back(fi, names);
    expr::BoundExpr h(ode.h, names);

    std::vector<double> base(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) base[static_cast<std::size_t>(i)] = x0(i);
    base[static_cast<std::size_t>(n)] = u0;

    LinearSS ss;
    ss.A = Eigen::MatrixXd::Zero(n, n);
    ss.B = Eigen::VectorXd::Zero(n);
    ss.C = Eigen::RowVectorXd::Zero(n);

    auto column = [&](int var) {
        const double h_fd =
            std::max(1e-6, 1e-6 * std::fabs(base[static_cast<std::size_t>(var)]));
        std::vector<double> hi = base, lo = base;
        hi[static_cast<std::size_t>(var)] += h_fd;
        lo[static_cast<std::size_t>(var)] -= h_fd;
        Eigen::VectorXd col(n);
        for (int i = 0; i < n; ++i) {
            const double d =
                (f[static_cast<std::size_t>(i)].eval(hi) -
                 f[static_cast<std::size_t>(i)].eval(lo)) /
                (2.0 * h_fd);
            if (!std::isfinite(d))
                throw LinearizationFault(
                    "linearization failed: non-finite derivative" + node_tag(node),
                    node);
            col(i) = d;
        }
        const double dh = (h.eval(hi) - h.eval(lo)) / (2.0 * h_fd);
        if (!std::isfinite(dh))
            throw LinearizationFault(
                "linearization failed: non-finite output derivative" + node_tag(node),
                node);
        return std::make_pair(col, dh);
    };

    for (int j = 0; j < n; ++j) {
        auto [col, dh] = column(j);
        ss.A.col(j) = col;
        ss.C(j) = dh;
    }
    auto [bcol, dd] = column(n);
    ss.B = bcol;
    ss.D = dd;
    return ss;
}

std::vector<std::complex<double>> poles_of(const std::vector<double>& den) {
    if (den.empty()) throw SemanticError("empty denominator");
    if (den.front() == 0.0)
        throw SemanticError("denominator leading coefficient is zero");
    const int n = static_cast<int>(den.size()) - 1;
    if (n == 0) return {};

    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) companion(i, i + 1) = 1.0;
    for (int j = 0; j < n; ++j)
        companion(n - 1, j) = -den[static_cast<std::size_t>(n - j)] / den.front();

    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    std::vector<std::complex<double>> poles(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) poles[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    std::sort(poles.begin(), poles.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return poles;
}

// --- NodeSim ----------------------------------------------------------------

NodeSim::NodeSim(NodeSpec spec, double dt) : spec_(std::move(spec)), dt_(dt) {
    if (!(dt > 0.0)) throw SemanticError("dt must be positive");
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Identity>) {
                feedthrough_ = true;
            } else if constexpr (std::is_same_v<T, StaticFunction>) {
                const std::vector<std::string> names{"u"};
                h_ = expr::BoundExpr(d.f, names);
                feedthrough_ = true;
            } else if constexpr (std::is_same_v<T, LinearTF>) {
                if (is_pure_derivative(d)) {
                    derivative_ = true;
                    deriv_gain_ = d.num[0] / d.den[0];
                    feedthrough_ = true;
                } else {
                    ss_ = tf_to_ss(d.num, d.den);
                    x_ = Eigen::VectorXd::Zero(ss_->order());
                    feedthrough_ = ss_->D != 0.0;
                }
            } else if constexpr (std::is_same_v<T, LinearSS>) {
                if (d.A.rows() != d.A.cols() || d.B.size() != d.A.rows() ||
                    d.C.size() != d.A.rows())
                    throw SemanticError("state-space dimensions disagree" +
                                        node_tag(spec_.id));
                ss_ = d;
                x_ = Eigen::VectorXd::Zero(ss_->order());
                feedthrough_ = ss_->D != 0.0;
            } else if constexpr (std::is_same_v<T, NonlinearODE>) {
                const int n = static_cast<int>(d.f.size());
                if (n == 0)
                    throw SemanticError("ode node has no state equations" +
                                        node_tag(spec_.id));
                const auto names = state_variable_names(n);
                for (const auto& fi : d.f) f_.emplace_back(fi, names);
                h_ = expr::BoundExpr(d.h, names);
                const auto hvars = expr::variables(*d.h);
                h_uses_u_ =
                    std::find(hvars.begin(), hvars.end(), "u") != hvars.end();
                feedthrough_ = h_uses_u_;
                x_ = Eigen::VectorXd::Zero(n);
            } else if constexpr (std::is_same_v<T, Delay>) {
                const long len = std::lround(d.tau / dt_);
                if (len < 1)
                    throw SemanticError(
                        "delay of " + std::to_string(d.tau) +
                        " s is shorter than half a step at dt=" + std::to_string(dt_) +
                        node_tag(spec_.id));
                ring_.assign(static_cast<std::size_t>(len), 0.0);
            }
        },
        spec_.dynamics);
    const int n = static_cast<int>(x_.size());
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    xtmp_.resize(n);
}

double NodeSim::output(double u) const {
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Identity>) {
                return u;
            } else if constexpr (std::is_same_v<T, StaticFunction>) {
                const double v[] = {u};
                return h_.eval(v);
            } else if constexpr (std::is_same_v<T, LinearTF> ||
                                 std::is_same_v<T, LinearSS>) {
                if (derivative_) return deriv_gain_ * (u - prev_u_) / dt_;
                if (ss_->order() == 0) return ss_->D * u;
                return ss_->C * x_ + ss_->D * u;
            } else if constexpr (std::is_same_v<T, NonlinearODE>) {
                std::vector<double> xu(static_cast<std::size_t>(x_.size()) + 1);
                for (int i = 0; i < x_.size(); ++i)
                    xu[static_cast<std::size_t>(i)] = x_(i);
                xu.back() = u;
                return h_.eval(xu);
            } else {
                return ring_.front();
            }
        },
        spec_.dynamics);
}

void NodeSim::derivs(const Eigen::VectorXd& x, double u, Eigen::VectorXd& dx) const {
    if (ss_) {
        dx.noalias() = ss_->A * x;
        dx.noalias() += ss_->B * u;
        return;
    }
    std::vector<double> xu(static_cast<std::size_t>(x.size()) + 1);
    for (int i = 0; i < x.size(); ++i) xu[static_cast<std::size_t>(i)] = x(i);
    xu.back() = u;
    for (std::size_t i = 0; i < f_.size(); ++i) dx(static_cast<int>(i)) = f_[i].eval(xu);
}

void NodeSim::advance(double u, Scheme scheme) {
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Identity> ||
                          std::is_same_v<T, StaticFunction>) {
                // stateless
            } else if constexpr (std::is_same_v<T, Delay>) {
                ring_.push_back(u);
                ring_.pop_front();
            } else {
                if (derivative_) {
                    prev_u_ = u;
                    return;
                }
                if (x_.size() == 0) return;
                if (scheme == Scheme::Euler) {
                    derivs(x_, u, k1_);
                    x_ += dt_ * k1_;
                    return;
                }
                derivs(x_, u, k1_);
                xtmp_ = x_ + (dt_ / 2.0) * k1_;
                derivs(xtmp_, u, k2_);
                xtmp_ = x_ + (dt_ / 2.0) * k2_;
                derivs(xtmp_, u, k3_);
                xtmp_ = x_ + dt_ * k3_;
                derivs(xtmp_, u, k4_);
                x_ += (dt_ / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
            }
        },
        spec_.dynamics);
}

double NodeSim::step(double u, Scheme scheme) {
    if (std::holds_alternative<Delay>(spec_.dynamics)) {
        ring_.push_back(u);
        const double y = ring_.front();
        ring_.pop_front();
        return y;
    }
    if (feedthrough_) {
        const double y = output(u);
        advance(u, scheme);
        return y;
    }
    advance(u, scheme);
    return output(u);
}

bool NodeSim::state_finite() const {
    return x_.allFinite() && std::isfinite(prev_u_);
}

void NodeSim::reset() {
    x_.setZero();
    prev_u_ = 0.0;
    std::fill(ring_.begin(), ring_.end(), 0.0);
}

void NodeSim::set_state(const Eigen::VectorXd& x) {
    if (x.size() != x_.size())
        throw SemanticError("state dimension mismatch" + node_tag(spec_.id));
    x_ = x;
}

const LinearSS* NodeSim::realization() const { return ss_ ? &*ss_ : nullptr; }

double NodeSim::static_derivative(double u) const {
    const double v[] = {u};
    return h_.eval_dual(v, 0).deriv;
}

double NodeSim::ode_rhs(int i, std::span<const double> xu) const {
    return f_[static_cast<std::size_t>(i)].eval(xu);
}

double step_response_value(const DynamicsKind& dynamics, double T, double dt,
                           double blowup, NodeId node) {
    if (!(T > 0.0)) throw SemanticError("step-response horizon must be positive");
    NodeSpec spec;
    spec.id = node;
    spec.dynamics = dynamics;
    NodeSim sim(std::move(spec), dt);
    const long steps = std::max(1L, std::lround(T / dt));
    double y = 0.0;
    for (long k = 0; k < steps; ++k) {
        y = sim.step(1.0, Scheme::RK4);
        if (!std::isfinite(y) || std::fabs(y) > blowup)
            throw Diverged("step response diverged at t=" +
                               std::to_string(static_cast<double>(k + 1) * dt) +
                               node_tag(node),
                           node, static_cast<double>(k + 1) * dt);
    }
    return y;
}

namespace {

FrechetStrategy default_frechet(const DynamicsKind& dynamics) {
    if (std::holds_alternative<NonlinearODE>(dynamics))
        return TrajectoryLinearization{};
    return DcGain{};
}

}  // namespace

double frechet_value(const NodeSpec& node, double u, const Eigen::VectorXd& x,
                     double dt) {
    const FrechetStrategy strategy =
        node.frechet ? *node.frechet : default_frechet(node.dynamics);

    if (const auto* c = std::get_if<ConstantFrechet>(&strategy)) return c->value;

    if (std::holds_alternative<Identity>(node.dynamics)) return 1.0;

    if (const auto* sf = std::get_if<StaticFunction>(&node.dynamics)) {
        return expr::eval_dual(*sf->f, {{"u", u}}, "u").deriv;
    }

    if (const auto* ode = std::get_if<NonlinearODE>(&node.dynamics)) {
        if (std::holds_alternative<StepResponseHorizon>(strategy)) {
            const double T = std::get<StepResponseHorizon>(strategy).horizon;
            return step_response_value(node.dynamics, T, dt, 1e12, node.id);
        }
        if (std::holds_alternative<DcGain>(strategy))
            throw SemanticError(
                "dc_gain strategy needs linear dynamics; use linearize or "
                "step_response" +
                node_tag(node.id));
        try {
            return dc_gain(linearize(*ode, x, u, node.id));
        } catch (const PoleAtOrigin& e) {
            throw PoleAtOrigin(e.what() + node_tag(node.id), node.id);
        }
    }

    // linear dynamics and the delay line
    if (std::holds_alternative<TrajectoryLinearization>(strategy))
        throw SemanticError("linearize strategy is for ode nodes" + node_tag(node.id));
    if (const auto* sr = std::get_if<StepResponseHorizon>(&strategy))
        return step_response_value(node.dynamics, sr->horizon, dt, 1e12, node.id);
    return dc_gain_of(node.dynamics, node.id);
}

}  // namespace gsfg
