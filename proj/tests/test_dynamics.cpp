#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gsfg/dynamics.hpp"
#include "oracles.hpp"

using namespace gsfg;
using namespace gsfg::testfix;

namespace {

void check_coefficients(const std::vector<double>& got,
                        const std::vector<double>& expected, double tol) {
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max(1.0, std::fabs(expected[i]));
        CHECK(std::fabs(got[i] - expected[i]) / scale <= tol);
    }
}

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

// random Hurwitz denominator: real roots and conjugate pairs in the left
// half-plane, expanded into coefficients
std::vector<double> random_stable_poly(std::mt19937& rng, int degree) {
    std::uniform_real_distribution<double> re(0.3, 3.0);
    std::uniform_real_distribution<double> im(0.1, 2.0);
    std::vector<double> poly{1.0};
    int remaining = degree;
    while (remaining > 0) {
        if (remaining >= 2 && rng() % 2 == 0) {
            const double a = re(rng), b = im(rng);
            poly = poly_mul(poly, {1.0, 2.0 * a, a * a + b * b});
            remaining -= 2;
        } else {
            poly = poly_mul(poly, {1.0, re(rng)});
            remaining -= 1;
        }
    }
    return poly;
}

}  // namespace

TEST_CASE("tf_to_ss builds the companion form of the stable plant") {
    const auto ss = tf_to_ss({1.0}, {1.0, 6.0, 11.0, 6.0});
    REQUIRE(ss.order() == 3);
    CHECK(ss.A(0, 0) == 0.0);
    CHECK(ss.A(0, 1) == 1.0);
    CHECK(ss.A(0, 2) == 0.0);
    CHECK(ss.A(1, 2) == 1.0);
    CHECK(ss.A(2, 0) == -6.0);
    CHECK(ss.A(2, 1) == -11.0);
    CHECK(ss.A(2, 2) == -6.0);
    CHECK(ss.B(0) == 0.0);
    CHECK(ss.B(1) == 0.0);
    CHECK(ss.B(2) == 1.0);
    CHECK(ss.C(0) == 1.0);
    CHECK(ss.C(1) == 0.0);
    CHECK(ss.C(2) == 0.0);
    CHECK(ss.D == 0.0);
}

TEST_CASE("tf_to_ss handles a pure gain") {
    const auto ss = tf_to_ss({1.0}, {1.0});
    CHECK(ss.order() == 0);
    CHECK(ss.D == 1.0);
}

TEST_CASE("tf_to_ss rejects bad denominators and improper ratios") {
    CHECK_THROWS_AS(tf_to_ss({1.0}, {}), SemanticError);
    CHECK_THROWS_AS(tf_to_ss({1.0}, {0.0, 1.0}), SemanticError);
    CHECK_THROWS_AS(tf_to_ss({1.0, 0.0}, {1.0}), SemanticError);
    CHECK_THROWS_AS(tf_to_ss({1.0, 0.0, 0.0}, {1.0, 1.0}), SemanticError);
}

TEST_CASE("reference model realization round-trips through the resolvent") {
    const auto tf = reference_tf();
    const auto ss = tf_to_ss(tf.num, tf.den);
    REQUIRE(ss.order() == 5);
    const auto back = oracles::ss_to_tf(ss.A, ss.B, ss.C, ss.D);
    check_coefficients(back.den, tf.den, 1e-9);
    check_coefficients(back.num, tf.num, 1e-9);
}

TEST_CASE("tf_to_ss round trip on random stable systems") {
    std::mt19937 rng(90125);
    std::uniform_real_distribution<double> coeff(0.5, 2.0);
    for (int trial = 0; trial < 60; ++trial) {
        const int degree = 1 + static_cast<int>(rng() % 6);
        const auto den = random_stable_poly(rng, degree);
        std::vector<double> num(1 + rng() % den.size());
        for (auto& c : num) c = coeff(rng);

        const auto ss = tf_to_ss(num, den);
        const auto back = oracles::ss_to_tf(ss.A, ss.B, ss.C, ss.D);
        check_coefficients(back.den, den, 1e-9);
        check_coefficients(back.num, num, 1e-9);
    }
}

TEST_CASE("is_pure_derivative") {
    CHECK(is_pure_derivative(LinearTF{{1.0, 0.0}, {1.0}}));
    CHECK(is_pure_derivative(LinearTF{{2.0, 0.0}, {4.0}}));
    CHECK_FALSE(is_pure_derivative(LinearTF{{1.0, 0.0}, {0.01, 1.0}}));
    CHECK_FALSE(is_pure_derivative(LinearTF{{1.0}, {1.0, 0.0}}));
}

TEST_CASE("step: identity returns its input") {
    NodeSim sim(node(1, Identity{}), 0.01);
    CHECK(sim.step(3.5, Scheme::RK4) == 3.5);
    CHECK(sim.feedthrough());
}

TEST_CASE("step: delay line shifts by round(tau/dt) samples") {
    NodeSim sim(node(1, Delay{0.03}), 0.01);
    CHECK_FALSE(sim.feedthrough());
    CHECK(sim.step(1.0, Scheme::RK4) == 0.0);
    CHECK(sim.step(2.0, Scheme::RK4) == 0.0);
    CHECK(sim.step(3.0, Scheme::RK4) == 0.0);
    CHECK(sim.step(4.0, Scheme::RK4) == 1.0);
}

TEST_CASE("delay output equals the input stream shifted") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    NodeSim sim(node(1, Delay{0.05}), 0.01);  // 5 samples
    std::vector<double> in, out;
    for (int k = 0; k < 200; ++k) {
        in.push_back(val(rng));
        out.push_back(sim.step(in.back(), Scheme::RK4));
    }
    for (int k = 0; k < 200; ++k)
        CHECK(out[static_cast<std::size_t>(k)] ==
              (k < 5 ? 0.0 : in[static_cast<std::size_t>(k - 5)]));
}

TEST_CASE("delay shorter than half a step is rejected") {
    CHECK_THROWS_AS(NodeSim(node(1, Delay{0.003}), 0.01), SemanticError);
    CHECK_THROWS_AS(NodeSim(node(1, Delay{0.0}), 0.01), SemanticError);
}

TEST_CASE("step: nonlinear plant stays at the origin equilibrium") {
    NodeSim sim(node(4, nonlinear_plant_ode()), 1e-3);
    for (int k = 0; k < 100; ++k) CHECK(sim.step(0.0, Scheme::RK4) == 0.0);
    CHECK(sim.state().norm() == 0.0);
    CHECK_FALSE(sim.feedthrough());  // y = x3 has no direct u term
}

TEST_CASE("dc gains of the paper systems") {
    CHECK(dc_gain(stable_plant_tf()) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(dc_gain(unstable_plant_tf()) == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
    CHECK(dc_gain(reference_tf()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dc_gain_of(Delay{0.03}) == 1.0);
    CHECK(dc_gain_of(Identity{}) == 1.0);
    CHECK_THROWS_AS(dc_gain(LinearTF{{1.0}, {1.0, 0.0}}), PoleAtOrigin);
    // the derivative node c*s has zero steady-state gain
    CHECK(dc_gain(LinearTF{{1.0, 0.0}, {1.0}}) == 0.0);
}

TEST_CASE("dc gain of a state-space realization") {
    const auto ss = tf_to_ss({1.0}, {1.0, 6.0, 11.0, 6.0});
    CHECK(dc_gain(ss) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    LinearSS integrator = tf_to_ss({1.0}, {1.0, 0.0});
    CHECK_THROWS_AS(dc_gain(integrator), PoleAtOrigin);
}

TEST_CASE("step response values") {
    SUBCASE("integrator accumulates the unit step") {
        CHECK(step_response_value(LinearTF{{1.0}, {1.0, 0.0}}, 2.0, 1e-3) ==
              doctest::Approx(2.0).epsilon(1e-6));
    }
    SUBCASE("delay has settled after one second") {
        CHECK(step_response_value(Delay{0.03}, 1.0, 1e-3) == 1.0);
    }
    SUBCASE("stable plant approaches its dc gain") {
        CHECK(step_response_value(stable_plant_tf(), 20.0, 1e-3) ==
              doctest::Approx(1.0 / 6.0).epsilon(6e-4));
    }
    SUBCASE("unstable plant diverges eventually") {
        CHECK_THROWS_AS(step_response_value(unstable_plant_tf(), 100.0, 1e-3),
                        Diverged);
    }
}

TEST_CASE("step response converges to dc gain on random stable systems") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coeff(0.5, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> den = random_stable_poly(rng, 2 + static_cast<int>(rng() % 2));
        // keep the slowest pole comfortably fast for a 30 s horizon
        const LinearTF tf{{coeff(rng)}, den};
        const double expected = dc_gain(tf);
        const double p = step_response_value(tf, 30.0, 1e-3);
        CHECK(p == doctest::Approx(expected).epsilon(1e-4));
    }
}

TEST_CASE("linearize the nonlinear plant at the origin") {
    const auto ode = nonlinear_plant_ode();
    const auto lin = linearize(ode, Eigen::Vector3d::Zero(), 0.0, 4);

    CHECK(lin.A(0, 0) == doctest::Approx(-0.5).epsilon(1e-8));
    CHECK(lin.A(1, 1) == doctest::Approx(-2.0).epsilon(1e-8));
    CHECK(lin.A(2, 2) == doctest::Approx(-3.2).epsilon(1e-8));
    CHECK(lin.A(1, 0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(lin.A(2, 1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(lin.A(0, 1) == doctest::Approx(0.0));
    CHECK(lin.A(0, 2) == doctest::Approx(0.0));
    CHECK(lin.B(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(lin.B(1) == doctest::Approx(0.0));
    CHECK(lin.B(2) == doctest::Approx(0.0));
    CHECK(lin.C(0) == doctest::Approx(0.0));
    CHECK(lin.C(1) == doctest::Approx(0.0));
    CHECK(lin.C(2) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(lin.D == doctest::Approx(0.0));

    CHECK(dc_gain(lin) == doctest::Approx(0.3125).epsilon(1e-8));
}

TEST_CASE("linearize recovers a linear system exactly") {
    NonlinearODE ode;
    ode.f = {expr::parse("x2"), expr::parse("-2*x1 - 3*x2 + u")};
    ode.h = expr::parse("x1");
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> point(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::Vector2d x0(point(rng), point(rng));
        const auto lin = linearize(ode, x0, point(rng));
        CHECK(lin.A(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(lin.A(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(lin.A(1, 0) == doctest::Approx(-2.0).epsilon(1e-6));
        CHECK(lin.A(1, 1) == doctest::Approx(-3.0).epsilon(1e-6));
        CHECK(lin.B(1) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(lin.C(0) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("rk4 matches the matrix exponential at fourth order") {
    Eigen::Matrix2d A;
    A << 0.0, 1.0, -2.0, -3.0;
    Eigen::Vector2d B(0.0, 1.0);

    LinearSS ss;
    ss.A = A;
    ss.B = B;
    ss.C = Eigen::RowVector2d(1.0, 0.0);
    ss.D = 0.0;

    auto terminal_error = [&](double dt) {
        NodeSim sim(node(1, ss), dt);
        const long steps = std::lround(1.0 / dt);
        for (long k = 0; k < steps; ++k) sim.step(1.0, Scheme::RK4);
        const Eigen::Vector2d exact = oracles::lti_step_state(A, B, 1.0, 1.0);
        return (sim.state() - exact).norm();
    };

    const double e1 = terminal_error(0.05);
    const double e2 = terminal_error(0.025);
    const double ratio = e1 / e2;
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("euler scheme is first order") {
    Eigen::Matrix2d A;
    A << 0.0, 1.0, -2.0, -3.0;
    Eigen::Vector2d B(0.0, 1.0);
    LinearSS ss;
    ss.A = A;
    ss.B = B;
    ss.C = Eigen::RowVector2d(1.0, 0.0);
    ss.D = 0.0;

    auto terminal_error = [&](double dt) {
        NodeSim sim(node(1, ss), dt);
        const long steps = std::lround(1.0 / dt);
        for (long k = 0; k < steps; ++k) sim.step(1.0, Scheme::Euler);
        return (sim.state() - oracles::lti_step_state(A, B, 1.0, 1.0)).norm();
    };
    const double ratio = terminal_error(0.01) / terminal_error(0.005);
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
}

TEST_CASE("backward-difference derivative node") {
    NodeSim sim(node(3, LinearTF{{1.0, 0.0}, {1.0}}), 0.1);
    CHECK(sim.feedthrough());
    CHECK(sim.step(0.5, Scheme::RK4) == doctest::Approx(5.0));   // (0.5-0)/0.1
    CHECK(sim.step(0.7, Scheme::RK4) == doctest::Approx(2.0));   // (0.7-0.5)/0.1
    CHECK(sim.step(0.7, Scheme::RK4) == doctest::Approx(0.0));
}

TEST_CASE("filtered derivative is a proper feedthrough system") {
    const LinearTF filtered{{1.0, 0.0}, {0.01, 1.0}};
    CHECK(dc_gain(filtered) == 0.0);
    NodeSim sim(node(3, filtered), 1e-3);
    CHECK(sim.feedthrough());
    // a unit step decays toward zero output
    double y = 0.0;
    for (int k = 0; k < 200; ++k) y = sim.step(1.0, Scheme::RK4);
    CHECK(std::fabs(y) < 1e-6);
}

TEST_CASE("frechet_value dispatch") {
    const Eigen::VectorXd none;
    SUBCASE("identity is one") {
        CHECK(frechet_value(node(1, Identity{}), 7.0, none, 1e-3) == 1.0);
    }
    SUBCASE("sigmoid slope at zero") {
        const auto spec = node(2, StaticFunction{expr::parse("1/(1+exp(-u))")});
        CHECK(frechet_value(spec, 0.0, none, 1e-3) == doctest::Approx(0.25));
    }
    SUBCASE("stable plant dc gain") {
        CHECK(frechet_value(node(4, stable_plant_tf()), 0.0, none, 1e-3) ==
              doctest::Approx(1.0 / 6.0));
    }
    SUBCASE("constant override wins") {
        CHECK(frechet_value(node(4, stable_plant_tf(), ConstantFrechet{0.42}), 0.0,
                            none, 1e-3) == 0.42);
    }
    SUBCASE("step-response horizon on the plant") {
        CHECK(frechet_value(node(4, stable_plant_tf(), StepResponseHorizon{20.0}), 0.0,
                            none, 1e-3) == doctest::Approx(1.0 / 6.0).epsilon(6e-4));
    }
    SUBCASE("integrator reports its origin pole") {
        CHECK_THROWS_AS(
            frechet_value(node(1, LinearTF{{1.0}, {1.0, 0.0}}), 0.0, none, 1e-3),
            PoleAtOrigin);
    }
    SUBCASE("trajectory linearization of the nonlinear plant at the origin") {
        const auto spec = node(4, nonlinear_plant_ode(), TrajectoryLinearization{});
        CHECK(frechet_value(spec, 0.0, Eigen::Vector3d::Zero(), 1e-3) ==
              doctest::Approx(0.3125).epsilon(1e-8));
    }
    SUBCASE("dc gain strategy on an ode is rejected") {
        const auto spec = node(4, nonlinear_plant_ode(), DcGain{});
        CHECK_THROWS_AS(frechet_value(spec, 0.0, Eigen::Vector3d::Zero(), 1e-3),
                        SemanticError);
    }
}

TEST_CASE("poles of the paper reference model") {
    const auto poles = poles_of(reference_tf().den);
    REQUIRE(poles.size() == 5);
    // sorted by real part: the fast real pole first, then the two pairs
    CHECK(poles[0].real() == doctest::Approx(-93.7698).epsilon(1e-4));
    CHECK(std::fabs(poles[0].imag()) < 1e-6);
    CHECK(poles[1].real() == doctest::Approx(-1.7941).epsilon(1e-3));
    CHECK(poles[1].imag() == doctest::Approx(-0.7362).epsilon(1e-3));
    CHECK(poles[2].real() == doctest::Approx(-1.7941).epsilon(1e-3));
    CHECK(poles[2].imag() == doctest::Approx(0.7362).epsilon(1e-3));
    CHECK(poles[3].real() == doctest::Approx(-1.3210).epsilon(1e-3));
    CHECK(poles[3].imag() == doctest::Approx(-0.8984).epsilon(1e-3));
    CHECK(poles[4].real() == doctest::Approx(-1.3210).epsilon(1e-3));
    CHECK(poles[4].imag() == doctest::Approx(0.8984).epsilon(1e-3));
}

TEST_CASE("ss node accepts matrices directly") {
    LinearSS ss;
    ss.A = Eigen::MatrixXd::Zero(2, 2);
    ss.A << 0.0, 1.0, -2.0, -3.0;
    ss.B = Eigen::Vector2d(0.0, 1.0);
    ss.C = Eigen::RowVector2d(1.0, 0.0);
    ss.D = 0.5;
    NodeSim sim(node(1, ss), 1e-3);
    CHECK(sim.feedthrough());  // D != 0
    CHECK(sim.output(2.0) == doctest::Approx(1.0));
}
