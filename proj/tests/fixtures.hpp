#pragma once

// Graph builders and constants shared across the test suites.

#include <random>

#include "gsfg/graph.hpp"
#include "gsfg/simulator.hpp"

namespace gsfg::testfix {

inline LinearTF stable_plant_tf() { return LinearTF{{1.0}, {1.0, 6.0, 11.0, 6.0}}; }

inline LinearTF unstable_plant_tf() { return LinearTF{{1.0}, {1.0, 6.0, 11.0, -6.0}}; }

inline LinearTF reference_tf() {
    return LinearTF{{1.0, 1200.0, 900.0}, {1.0, 100.0, 600.0, 1500.0, 1800.0, 900.0}};
}

inline NonlinearODE nonlinear_plant_ode() {
    NonlinearODE ode;
    ode.f = {expr::parse("-x1 + 0.5*sin(x1) + u"), expr::parse("-2*x2 - x2^3 + x1"),
             expr::parse("-3*x3 - 0.2*tan(x3) + x2")};
    ode.h = expr::parse("x3");
    return ode;
}

inline NodeSpec node(NodeId id, DynamicsKind dynamics,
                     std::optional<FrechetStrategy> frechet = std::nullopt) {
    NodeSpec spec;
    spec.id = id;
    spec.dynamics = std::move(dynamics);
    spec.frechet = std::move(frechet);
    return spec;
}

inline Branch branch(NodeId from, NodeId to, double weight, bool adaptive = false) {
    Branch b;
    b.from = from;
    b.to = to;
    b.weight = weight;
    b.initial_weight = weight;
    b.adaptive = adaptive;
    return b;
}

/// The eight-node PID loop: command source 5 -> error node 6 -> distribution
/// node 7 -> integral 1 / proportional 2 / derivative 3 -> plant 4 (-1
/// feedback to 6, unit tap to 8). Gains into the plant are the adaptive PID
/// gains, initialized to K_P=12, K_I=8, K_D=4.
inline GsfgGraph pid_graph(DynamicsKind plant,
                           std::optional<FrechetStrategy> plant_frechet = std::nullopt,
                           bool filtered_derivative = false) {
    GsfgGraph g;
    g.nodes.push_back(node(1, LinearTF{{1.0}, {1.0, 0.0}}));  // integral part
    g.nodes.push_back(node(2, Identity{}));                   // proportional part
    if (filtered_derivative)
        g.nodes.push_back(node(3, LinearTF{{1.0, 0.0}, {0.01, 1.0}}));
    else
        g.nodes.push_back(node(3, LinearTF{{1.0, 0.0}, {1.0}}));
    g.nodes.push_back(node(4, std::move(plant), std::move(plant_frechet)));
    g.nodes.push_back(node(5, Identity{}));
    g.nodes.push_back(node(6, Identity{}));
    g.nodes.push_back(node(7, Identity{}));
    g.nodes.push_back(node(8, Identity{}));

    g.branches.push_back(branch(5, 6, 1.0));
    g.branches.push_back(branch(4, 6, -1.0));
    g.branches.push_back(branch(6, 7, 1.0));
    g.branches.push_back(branch(7, 1, 1.0));
    g.branches.push_back(branch(7, 2, 1.0));
    g.branches.push_back(branch(7, 3, 1.0));
    g.branches.push_back(branch(1, 4, 8.0, true));   // K_I
    g.branches.push_back(branch(2, 4, 12.0, true));  // K_P
    g.branches.push_back(branch(3, 4, 4.0, true));   // K_D
    g.branches.push_back(branch(4, 8, 1.0));

    g.output_nodes = {4};
    return g;
}

inline Scenario pid_scenario(DynamicsKind plant, double gamma,
                             std::optional<FrechetStrategy> plant_frechet = std::nullopt,
                             bool filtered_derivative = false) {
    Scenario s;
    s.name = "pid";
    s.graph = pid_graph(std::move(plant), std::move(plant_frechet), filtered_derivative);
    s.reference = ReferenceModel{reference_tf()};
    s.input.kind = SignalKind::Square;
    s.input.amplitude = 1.0;
    s.input.period = 20.0;
    s.learning.gamma = gamma;
    s.branch_labels[{1, 4}] = "K_I";
    s.branch_labels[{2, 4}] = "K_P";
    s.branch_labels[{3, 4}] = "K_D";
    s.log_nodes = {4, 6};
    return s;
}

/// Random feedforward sigmoid network with <= max_nodes nodes. Output nodes
/// are sinks, weights are moderate so no firing rate gets near the y floor.
inline GsfgGraph random_sigmoid_network(std::mt19937& rng, int max_nodes = 8) {
    std::uniform_int_distribution<int> size_dist(3, max_nodes);
    std::uniform_real_distribution<double> weight_dist(-1.0, 1.0);
    const int n = size_dist(rng);

    GsfgGraph g;
    for (int id = 1; id <= n; ++id) {
        if (id <= 2)
            g.nodes.push_back(node(id, Identity{}));  // inputs stay identity
        else
            g.nodes.push_back(node(id, StaticFunction{expr::parse("1/(1+exp(-u))")}));
    }
    for (int to = 3; to <= n; ++to)
        for (int from = 1; from < to; ++from)
            if (rng() % 100 < 65)
                g.branches.push_back(branch(from, to, weight_dist(rng), true));
    // keep every node reachable so the net is connected
    for (int to = 3; to <= n; ++to)
        if (!std::any_of(g.branches.begin(), g.branches.end(),
                         [to](const Branch& b) { return b.to == to; }))
            g.branches.push_back(branch(to - 1, to, weight_dist(rng), true));

    for (int id = 1; id <= n; ++id)
        if (!std::any_of(g.branches.begin(), g.branches.end(),
                         [id](const Branch& b) { return b.from == id; }) &&
            id > 2)
            g.output_nodes.insert(id);
    if (g.output_nodes.empty()) g.output_nodes.insert(n);
    return g;
}

/// Random acyclic static graph (identity and tanh nodes); only sink nodes are
/// marked as outputs, so the truncated recursion and the full solve agree.
inline GsfgGraph random_static_dag(std::mt19937& rng, int max_nodes = 8) {
    std::uniform_int_distribution<int> size_dist(3, max_nodes);
    std::uniform_real_distribution<double> weight_dist(-1.5, 1.5);
    const int n = size_dist(rng);

    GsfgGraph g;
    for (int id = 1; id <= n; ++id) {
        if (id <= 2 || rng() % 3 == 0)
            g.nodes.push_back(node(id, Identity{}));
        else
            g.nodes.push_back(node(id, StaticFunction{expr::parse("tanh(u) + 0.1*u")}));
    }
    for (int to = 2; to <= n; ++to)
        for (int from = 1; from < to; ++from)
            if (rng() % 100 < 55)
                g.branches.push_back(branch(from, to, weight_dist(rng), rng() % 2 == 0));
    for (int to = 3; to <= n; ++to)
        if (!std::any_of(g.branches.begin(), g.branches.end(),
                         [to](const Branch& b) { return b.to == to; }))
            g.branches.push_back(branch(1, to, weight_dist(rng), true));

    for (int id = 1; id <= n; ++id)
        if (!std::any_of(g.branches.begin(), g.branches.end(),
                         [id](const Branch& b) { return b.from == id; }))
            g.output_nodes.insert(id);
    return g;
}

}  // namespace gsfg::testfix
