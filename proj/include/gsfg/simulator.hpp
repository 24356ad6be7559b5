#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsfg/graph.hpp"
#include "gsfg/learning.hpp"

namespace gsfg {

/// Tracking target generator; the same transfer function drives the desired
/// output of every output node.
struct ReferenceModel {
    LinearTF tf;
};

enum class SignalKind { Step, Square, Sawtooth, Sine, ExprOfT };

struct SignalSpec {
    SignalKind kind = SignalKind::Step;
    double amplitude = 1.0;
    double period = 0.0;     // Square, Sawtooth
    double frequency = 0.0;  // Sine, in Hz
    expr::AstPtr expr;       // ExprOfT, over t
};

/// Square: +A on the first half period; Sawtooth: ramp -A..A per period;
/// Sine: A sin(2 pi f t).
double signal(const SignalSpec& spec, double t);

struct Scenario {
    std::string name;
    GsfgGraph graph;
    std::optional<ReferenceModel> reference;
    SignalSpec input;
    double duration = 200.0;
    double dt = 1e-3;
    Scheme scheme = Scheme::RK4;
    LearningConfig learning;
    int frechet_stride = 1;
    std::map<NodeId, double> static_targets;  // used when no reference model
    std::map<NodeId, double> fixed_inputs;    // per-node drive for static graphs
    std::vector<NodeId> log_nodes;            // empty: output nodes
    std::vector<BranchKey> log_branches;      // empty: adaptive branches
    std::map<BranchKey, std::string> branch_labels;
    double converge_ratio = 0.10;  // summary pass threshold on final/first rms

    std::vector<NodeId> effective_log_nodes() const;
    std::vector<BranchKey> effective_log_branches() const;
    std::string branch_label(const BranchKey& key) const;
};

struct Fault {
    enum class Kind { Diverged, Singular, WeightBlowup };
    Kind kind = Kind::Diverged;
    std::string message;
    NodeId node = -1;
    double t = 0.0;
};

struct SimulationTrace {
    std::vector<double> t;
    std::vector<NodeId> logged_nodes;
    std::vector<BranchKey> logged_branches;
    std::vector<std::vector<double>> node_u;   // [logged node][step]
    std::vector<std::vector<double>> node_y;   // [logged node][step]
    std::vector<std::vector<double>> frechet;  // [logged node][step]
    std::vector<std::vector<double>> weights;  // [logged branch][step], post-update
    std::vector<double> error;                 // least-squares error E
    std::vector<double> target;                // reference output in effect
    std::vector<std::string> diagnostics;
    std::optional<Fault> fault;

    std::size_t steps() const { return t.size(); }
};

/// Fixed-step co-simulation of graph, reference model, input signal, and the
/// weight-adaptation flow. Numeric faults end the run early and are recorded
/// on the trace; structural problems (algebraic loops, unsupported truncated
/// topologies, bad configs) throw.
SimulationTrace run(const Scenario& scenario);

struct Metrics {
    double rms_error = 0.0;
    double max_abs_error = 0.0;
    double max_abs_error_time = 0.0;
    std::map<BranchKey, double> final_weights;
    std::map<BranchKey, double> mean_abs_rate;
};

/// Tracking statistics over a time window [t_a, t_b] of the trace.
Metrics metrics(const SimulationTrace& trace, double t_a, double t_b);

}  // namespace gsfg
