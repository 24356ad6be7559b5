#include "gsfg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace gsfg {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string node_name(NodeId id) { return "node " + std::to_string(id); }

}  // namespace

double signal(const SignalSpec& spec, double t) {
    switch (spec.kind) {
        case SignalKind::Step:
            return spec.amplitude;
        case SignalKind::Square: {
            const double phase = std::fmod(t, spec.period);
            return phase < spec.period / 2.0 ? spec.amplitude : -spec.amplitude;
        }
        case SignalKind::Sawtooth: {
            const double phase = std::fmod(t, spec.period);
            return spec.amplitude * (2.0 * phase / spec.period - 1.0);
        }
        case SignalKind::Sine:
            return spec.amplitude * std::sin(2.0 * kPi * spec.frequency * t);
        case SignalKind::ExprOfT:
            return expr::eval(*spec.expr, {{"t", t}});
    }
    return 0.0;
}

std::vector<NodeId> Scenario::effective_log_nodes() const {
    if (!log_nodes.empty()) return log_nodes;
    return {graph.output_nodes.begin(), graph.output_nodes.end()};
}

std::vector<BranchKey> Scenario::effective_log_branches() const {
    if (!log_branches.empty()) return log_branches;
    std::vector<BranchKey> keys;
    for (const auto& b : graph.branches)
        if (b.adaptive) keys.push_back({b.from, b.to});
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::string Scenario::branch_label(const BranchKey& key) const {
    auto it = branch_labels.find(key);
    if (it != branch_labels.end()) return it->second;
    return "w_" + std::to_string(key.first) + "_" + std::to_string(key.second);
}

namespace {

// Per-node Fréchet evaluation with caching: strategies that do not depend on
// the trajectory are computed once; trajectory linearization refreshes every
// `stride` steps.
class FrechetEvaluator {
public:
    FrechetEvaluator(const NodeSpec& spec, double dt, int stride,
                     std::vector<std::string>& diagnostics)
        : spec_(spec), dt_(dt), stride_(std::max(1, stride)) {
        const FrechetStrategy strategy =
            spec.frechet ? *spec.frechet
                         : (std::holds_alternative<NonlinearODE>(spec.dynamics)
                                ? FrechetStrategy{TrajectoryLinearization{}}
                                : FrechetStrategy{DcGain{}});

        per_step_ = std::holds_alternative<StaticFunction>(spec.dynamics);
        trajectory_ = !per_step_ &&
                      std::holds_alternative<TrajectoryLinearization>(strategy) &&
                      std::holds_alternative<NonlinearODE>(spec.dynamics);
        if (per_step_ || trajectory_) return;

        try {
            cached_ = frechet_value(spec, 0.0, Eigen::VectorXd(), dt);
        } catch (const PoleAtOrigin&) {
            // integrator-style node: fall back to the 1 s step-response value
            cached_ = step_response_value(spec.dynamics, 1.0, dt, 1e12, spec.id);
            diagnostics.push_back(node_name(spec.id) +
                                  ": dc gain has a pole at the origin; using the"
                                  " step-response value p(1)");
        }
    }

    double value(double u, const Eigen::VectorXd& x, long step,
                 std::vector<std::string>& diagnostics) {
        if (per_step_) return frechet_value(spec_, u, x, dt_);
        if (trajectory_) {
            if (step % stride_ == 0 || !have_cache_) {
                try {
                    cached_ = frechet_value(spec_, u, x, dt_);
                } catch (const PoleAtOrigin&) {
                    const auto* ode = std::get_if<NonlinearODE>(&spec_.dynamics);
                    LinearSS lin = linearize(*ode, x, u, spec_.id);
                    DynamicsKind as_linear = lin;
                    cached_ = step_response_value(as_linear, 1.0, dt_, 1e12, spec_.id);
                    if (!warned_) {
                        diagnostics.push_back(
                            node_name(spec_.id) +
                            ": linearization has a pole at the origin; using its"
                            " step-response value p(1)");
                        warned_ = true;
                    }
                }
                have_cache_ = true;
            }
            return cached_;
        }
        return cached_;
    }

private:
    NodeSpec spec_;
    double dt_;
    int stride_;
    bool per_step_ = false;
    bool trajectory_ = false;
    bool have_cache_ = false;
    bool warned_ = false;
    double cached_ = 1.0;
};

struct LoggedIndex {
    std::vector<NodeId> nodes;
    std::vector<BranchKey> branches;
    std::map<NodeId, std::size_t> node_slot;
};

}  // namespace

SimulationTrace run(const Scenario& scenario) {
    const auto report = validate(scenario.graph);
    if (!report.ok()) {
        std::string msg = "invalid graph:";
        for (const auto& v : report.violations) msg += " [" + v + "]";
        throw SemanticError(msg);
    }
    if (!(scenario.dt > 0.0)) throw SemanticError("dt must be positive");
    if (scenario.duration < scenario.dt)
        throw SemanticError("duration must be at least dt");

    GsfgGraph graph = scenario.graph;  // weights evolve on this copy

    // node runtimes, keyed by id
    std::map<NodeId, NodeSim> sims;
    for (const auto& node : graph.nodes) sims.emplace(node.id, NodeSim(node, scenario.dt));

    std::optional<NodeSim> reference;
    if (scenario.reference) {
        NodeSpec ref_spec;
        ref_spec.id = 0;
        ref_spec.dynamics = scenario.reference->tf;
        reference.emplace(std::move(ref_spec), scenario.dt);
    }

    const std::set<NodeId> inputs = input_nodes(graph);

    if (!graph.output_nodes.empty() && !scenario.reference &&
        scenario.static_targets.empty())
        throw SemanticError("output nodes need a reference model or fixed targets");
    for (NodeId out : graph.output_nodes)
        if (!scenario.reference && !scenario.static_targets.count(out))
            throw SemanticError("no target for output node " + std::to_string(out));

    // evaluation order of feedthrough nodes; a cycle here has no solution
    std::vector<NodeId> feed_order;
    {
        std::map<NodeId, int> pending;
        for (const auto& node : graph.nodes)
            if (sims.at(node.id).feedthrough() && !inputs.count(node.id))
                pending[node.id] = 0;
        for (const auto& b : graph.branches) {
            if (!pending.count(b.to)) continue;
            if (pending.count(b.from) ||
                (sims.at(b.from).feedthrough() && !inputs.count(b.from)))
                ++pending[b.to];
        }
        std::deque<NodeId> ready;
        for (const auto& [id, count] : pending)
            if (count == 0) ready.push_back(id);
        while (!ready.empty()) {
            const NodeId id = ready.front();
            ready.pop_front();
            feed_order.push_back(id);
            for (const Branch* b : graph.branches_from(id))
                if (pending.count(b->to) && --pending[b->to] == 0)
                    ready.push_back(b->to);
        }
        if (feed_order.size() != pending.size()) {
            std::string loop;
            for (const auto& [id, count] : pending) {
                if (count == 0) continue;
                if (!loop.empty()) loop += ", ";
                loop += std::to_string(id);
            }
            throw AlgebraicLoop(
                "algebraic loop: direct-feedthrough cycle through nodes {" + loop +
                "}");
        }
    }

    SimulationTrace trace;
    trace.logged_nodes = scenario.effective_log_nodes();
    trace.logged_branches = scenario.effective_log_branches();
    for (NodeId id : trace.logged_nodes)
        if (!graph.find_node(id))
            throw SemanticError("log node " + std::to_string(id) + " unknown");
    for (const auto& key : trace.logged_branches)
        if (!graph.find_branch(key.first, key.second))
            throw SemanticError("log branch " + std::to_string(key.first) + "->" +
                                std::to_string(key.second) + " unknown");
    trace.node_u.resize(trace.logged_nodes.size());
    trace.node_y.resize(trace.logged_nodes.size());
    trace.frechet.resize(trace.logged_nodes.size());
    trace.weights.resize(trace.logged_branches.size());

    std::map<NodeId, FrechetEvaluator> frechet_eval;
    for (const auto& node : graph.nodes)
        frechet_eval.emplace(
            node.id, FrechetEvaluator(node, scenario.dt, scenario.frechet_stride,
                                      trace.diagnostics));

    const long total_steps = std::lround(scenario.duration / scenario.dt);
    const double blowup = scenario.learning.blowup_threshold;
    const bool learning_active =
        std::any_of(graph.branches.begin(), graph.branches.end(),
                    [](const Branch& b) { return b.adaptive; });

    std::map<NodeId, double> y, u, frechet;
    LearningState learning_state;

    for (long k = 0; k < total_steps; ++k) {
        const double t = static_cast<double>(k) * scenario.dt;
        const double v = signal(scenario.input, t);

        double target = 0.0;
        if (reference) {
            reference->advance(v, scenario.scheme);
            target = reference->output(v);
        }

        // signal propagation: stateful outputs first, then feedthrough order
        y.clear();
        u.clear();
        for (const auto& node : graph.nodes) {
            if (inputs.count(node.id))
                y[node.id] = v;
            else if (!sims.at(node.id).feedthrough())
                y[node.id] = sims.at(node.id).output(0.0);
        }
        auto input_sum = [&](NodeId id) {
            double sum = 0.0;
            for (const Branch* b : graph.branches_into(id)) sum += b->weight * y.at(b->from);
            return sum;
        };
        for (NodeId id : feed_order) {
            const double un = input_sum(id);
            u[id] = un;
            y[id] = sims.at(id).output(un);
        }
        for (const auto& node : graph.nodes)
            if (!u.count(node.id)) u[node.id] = input_sum(node.id);

        // fault scan before anything is recorded
        {
            std::optional<Fault> fault;
            for (const auto& node : graph.nodes) {
                const double yn = y.at(node.id);
                const double un = u.at(node.id);
                if (!std::isfinite(yn) || !std::isfinite(un) ||
                    !sims.at(node.id).state_finite()) {
                    fault = Fault{Fault::Kind::Diverged,
                                  node_name(node.id) + " produced a non-finite value at t=" +
                                      std::to_string(t),
                                  node.id, t};
                    break;
                }
                if (std::fabs(yn) > blowup || std::fabs(un) > blowup) {
                    fault = Fault{Fault::Kind::Diverged,
                                  node_name(node.id) + " exceeded the blow-up threshold at t=" +
                                      std::to_string(t),
                                  node.id, t};
                    break;
                }
            }
            if (fault) {
                trace.fault = std::move(fault);
                break;
            }
        }

        std::map<NodeId, double> targets;
        for (NodeId out : graph.output_nodes)
            targets[out] = scenario.reference
                               ? target
                               : scenario.static_targets.at(out);
        auto [error, partials] = error_and_partials(y, targets);
        learning_state.error_value = error;

        frechet.clear();
        for (const auto& node : graph.nodes)
            frechet[node.id] = frechet_eval.at(node.id).value(
                u.at(node.id), sims.at(node.id).state(), k, trace.diagnostics);

        if (learning_active) {
            try {
                if (scenario.learning.mode == LearningMode::Truncated) {
                    learning_state.rates = weight_rates_truncated(
                        graph, y, frechet, partials, scenario.learning);
                } else {
                    const PhiSystem system = assemble_phi(
                        graph, y, frechet, scenario.learning.gamma, partials,
                        scenario.learning.y_floor, PhiForm::Full);
                    learning_state.rates = weight_rates_full(system, scenario.learning);
                }
            } catch (const SingularSystem& e) {
                trace.fault = Fault{Fault::Kind::Singular, e.what(), -1, t};
                break;
            }
        }

        for (auto& [id, sim] : sims) sim.advance(u.at(id), scenario.scheme);

        if (learning_active) {
            try {
                apply_rates(graph, learning_state.rates, scenario.dt, blowup, t);
            } catch (const WeightBlowup& e) {
                trace.fault = Fault{Fault::Kind::WeightBlowup, e.what(), -1, t};
                break;
            }
        }

        trace.t.push_back(t);
        trace.error.push_back(error);
        trace.target.push_back(target);
        for (std::size_t i = 0; i < trace.logged_nodes.size(); ++i) {
            const NodeId id = trace.logged_nodes[i];
            trace.node_u[i].push_back(u.at(id));
            trace.node_y[i].push_back(y.at(id));
            trace.frechet[i].push_back(frechet.at(id));
        }
        for (std::size_t i = 0; i < trace.logged_branches.size(); ++i) {
            const auto& key = trace.logged_branches[i];
            trace.weights[i].push_back(graph.find_branch(key.first, key.second)->weight);
        }
    }

    return trace;
}

Metrics metrics(const SimulationTrace& trace, double t_a, double t_b) {
    if (trace.t.empty()) throw SemanticError("empty trace");
    const double slack = 1e-12;
    std::size_t lo = trace.t.size(), hi = 0;
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
        if (trace.t[k] >= t_a - slack && trace.t[k] <= t_b + slack) {
            lo = std::min(lo, k);
            hi = std::max(hi, k);
        }
    }
    if (lo > hi) throw SemanticError("empty metrics window");

    Metrics result;
    double sum_sq = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double abs_err = std::sqrt(2.0 * trace.error[k]);
        sum_sq += 2.0 * trace.error[k];
        if (abs_err > result.max_abs_error) {
            result.max_abs_error = abs_err;
            result.max_abs_error_time = trace.t[k];
        }
    }
    result.rms_error = std::sqrt(sum_sq / static_cast<double>(hi - lo + 1));

    const double dt = trace.t.size() > 1 ? trace.t[1] - trace.t[0] : 1.0;
    for (std::size_t i = 0; i < trace.logged_branches.size(); ++i) {
        const auto& key = trace.logged_branches[i];
        result.final_weights[key] = trace.weights[i][hi];
        double sum_rate = 0.0;
        std::size_t count = 0;
        for (std::size_t k = lo; k + 1 <= hi; ++k) {
            sum_rate += std::fabs(trace.weights[i][k + 1] - trace.weights[i][k]) / dt;
            ++count;
        }
        result.mean_abs_rate[key] = count ? sum_rate / static_cast<double>(count) : 0.0;
    }
    return result;
}

}  // namespace gsfg
