#include "gsfg/learning.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <deque>

namespace gsfg {

namespace {

double map_at(const std::map<NodeId, double>& values, NodeId node, const char* what) {
    auto it = values.find(node);
    if (it == values.end())
        throw SemanticError(std::string(what) + " missing for node " +
                            std::to_string(node));
    return it->second;
}

double partial_at(const std::map<NodeId, double>& partials, NodeId node) {
    auto it = partials.find(node);
    return it == partials.end() ? 0.0 : it->second;
}

std::vector<BranchKey> ordered_branches(const GsfgGraph& graph) {
    std::vector<BranchKey> order;
    order.reserve(graph.branches.size());
    for (const auto& b : graph.branches) order.push_back({b.from, b.to});
    std::sort(order.begin(), order.end(), [](const BranchKey& a, const BranchKey& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    return order;
}

std::string describe_cycle(const std::vector<BranchKey>& cycle) {
    std::string out;
    for (const auto& [from, to] : cycle) {
        if (!out.empty()) out += ", ";
        out += "w(" + std::to_string(from) + "," + std::to_string(to) + ")";
    }
    return out;
}

// Finds a directed cycle over branch indices given an adjacency functor.
template <typename Adjacency>
std::vector<int> find_cycle(int count, Adjacency&& adjacent) {
    std::vector<int> color(static_cast<std::size_t>(count), 0);  // 0 new, 1 open, 2 done
    std::vector<int> stack, cycle;

    auto dfs = [&](auto&& self, int v) -> bool {
        color[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
        for (int w : adjacent(v)) {
            if (color[static_cast<std::size_t>(w)] == 1) {
                auto it = std::find(stack.begin(), stack.end(), w);
                cycle.assign(it, stack.end());
                return true;
            }
            if (color[static_cast<std::size_t>(w)] == 0 && self(self, w)) return true;
        }
        stack.pop_back();
        color[static_cast<std::size_t>(v)] = 2;
        return false;
    };

    for (int v = 0; v < count; ++v)
        if (color[static_cast<std::size_t>(v)] == 0 && dfs(dfs, v)) return cycle;
    return {};
}

}  // namespace

std::pair<double, std::map<NodeId, double>> error_and_partials(
    const std::map<NodeId, double>& y, const std::map<NodeId, double>& targets) {
    double error = 0.0;
    std::map<NodeId, double> partials;
    for (const auto& [node, target] : targets) {
        const double diff = map_at(y, node, "output value") - target;
        error += 0.5 * diff * diff;
        partials[node] = diff;
    }
    return {error, partials};
}

RateMap weight_rates_truncated(const GsfgGraph& graph,
                               const std::map<NodeId, double>& y,
                               const std::map<NodeId, double>& frechet,
                               const std::map<NodeId, double>& error_partials,
                               const LearningConfig& config) {
    const auto order = ordered_branches(graph);
    const int L = static_cast<int>(order.size());

    std::map<BranchKey, int> index_of;
    for (int l = 0; l < L; ++l) index_of[order[static_cast<std::size_t>(l)]] = l;

    // branch (i,j) waits for every branch leaving j, unless j is an output node
    std::vector<std::vector<int>> needed_by(static_cast<std::size_t>(L));
    std::vector<int> pending(static_cast<std::size_t>(L), 0);
    for (int l = 0; l < L; ++l) {
        const auto [i, j] = order[static_cast<std::size_t>(l)];
        if (graph.output_nodes.count(j)) continue;
        for (const Branch* out : graph.branches_from(j)) {
            const int m = index_of.at({out->from, out->to});
            needed_by[static_cast<std::size_t>(m)].push_back(l);
            ++pending[static_cast<std::size_t>(l)];
        }
    }

    std::vector<double> rate(static_cast<std::size_t>(L), 0.0);
    std::deque<int> ready;
    for (int l = 0; l < L; ++l)
        if (pending[static_cast<std::size_t>(l)] == 0) ready.push_back(l);

    int done = 0;
    while (!ready.empty()) {
        const int l = ready.front();
        ready.pop_front();
        const auto [i, j] = order[static_cast<std::size_t>(l)];
        const double yi = map_at(y, i, "output value");
        const double gj = map_at(frechet, j, "Frechet value");
        if (graph.output_nodes.count(j)) {
            rate[static_cast<std::size_t>(l)] =
                -config.gamma * yi * gj * partial_at(error_partials, j);
        } else {
            double downstream = 0.0;
            for (const Branch* out : graph.branches_from(j)) {
                const int m = index_of.at({out->from, out->to});
                downstream += out->weight * rate[static_cast<std::size_t>(m)];
            }
            const double yj = floor_guard(map_at(y, j, "output value"), config.y_floor);
            rate[static_cast<std::size_t>(l)] = gj * (yi / yj) * downstream;
        }
        ++done;
        for (int upstream : needed_by[static_cast<std::size_t>(l)])
            if (--pending[static_cast<std::size_t>(upstream)] == 0)
                ready.push_back(upstream);
    }

    if (done < L) {
        auto adjacent = [&](int l) {
            std::vector<int> next;
            const auto [i, j] = order[static_cast<std::size_t>(l)];
            if (!graph.output_nodes.count(j))
                for (const Branch* out : graph.branches_from(j))
                    next.push_back(index_of.at({out->from, out->to}));
            return next;
        };
        std::vector<BranchKey> cycle;
        for (int l : find_cycle(L, adjacent)) cycle.push_back(order[static_cast<std::size_t>(l)]);
        throw CycleBeyondOutput(
            "rate recursion has a cycle that avoids every output node: " +
            describe_cycle(cycle) + "; use the full-solve mode");
    }

    RateMap rates;
    for (int l = 0; l < L; ++l)
        rates[order[static_cast<std::size_t>(l)]] = rate[static_cast<std::size_t>(l)];
    return rates;
}

RateMap weight_rates_full(const PhiSystem& system, const LearningConfig& config) {
    const int L = static_cast<int>(system.phi.rows());
    const double tol = config.resolved_det_tol(L);

    const UniquenessResult unique = uniqueness_check(system, tol);
    if (!unique.unique) {
        auto adjacent = [&](int l) {
            std::vector<int> next;
            for (int m = 0; m < L; ++m)
                if (system.phi(l, m) != 0.0) next.push_back(m);
            return next;
        };
        std::vector<BranchKey> cycle;
        for (int l : find_cycle(L, adjacent))
            cycle.push_back(system.branch_order[static_cast<std::size_t>(l)]);
        std::string msg = "singular adaptation system: det(I-Phi) = " +
                          std::to_string(unique.det) + ", tolerance " +
                          std::to_string(tol);
        if (!cycle.empty()) msg += "; coupled cycle " + describe_cycle(cycle);
        throw SingularSystem(msg, unique.det);
    }

    Eigen::MatrixXd m =
        Eigen::MatrixXd::Identity(L, L) - system.phi;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    Eigen::VectorXd rates = lu.solve(system.mu);

    const double mu_norm = L == 0 ? 0.0 : system.mu.lpNorm<Eigen::Infinity>();
    const double residual =
        L == 0 ? 0.0 : (m * rates - system.mu).lpNorm<Eigen::Infinity>();
    if (residual > 1e-9 * (1.0 + mu_norm))
        throw SingularSystem("rate solve residual " + std::to_string(residual) +
                                 " exceeds bound; system nearly singular",
                             unique.det);

    RateMap out;
    for (int l = 0; l < L; ++l)
        out[system.branch_order[static_cast<std::size_t>(l)]] = rates(l);
    return out;
}

RateMap nn_weight_rates(const GsfgGraph& network, const std::map<NodeId, double>& r,
                        const std::map<NodeId, double>& p,
                        const std::map<NodeId, double>& targets, double gamma) {
    const auto inputs = input_nodes(network);
    std::map<NodeId, double> frechet;
    for (const auto& node : network.nodes) {
        if (inputs.count(node.id) || std::holds_alternative<Identity>(node.dynamics)) {
            frechet[node.id] = 1.0;
        } else if (const auto* sf = std::get_if<StaticFunction>(&node.dynamics)) {
            frechet[node.id] =
                expr::eval_dual(*sf->f, {{"u", map_at(p, node.id, "potential")}}, "u")
                    .deriv;
        } else {
            throw SemanticError("network node " + std::to_string(node.id) +
                                " is not a static node");
        }
    }
    auto [error, partials] = error_and_partials(r, targets);
    (void)error;
    LearningConfig config;
    config.gamma = gamma;
    return weight_rates_truncated(network, r, frechet, partials, config);
}

void apply_rates(GsfgGraph& graph, const RateMap& rates, double dt,
                 double blowup_threshold, double t) {
    for (auto& b : graph.branches) {
        if (!b.adaptive) continue;
        auto it = rates.find({b.from, b.to});
        if (it == rates.end())
            throw SemanticError("rate missing for branch " + std::to_string(b.from) +
                                "->" + std::to_string(b.to));
        b.weight += it->second * dt;
        if (!std::isfinite(b.weight) || std::fabs(b.weight) > blowup_threshold)
            throw WeightBlowup("weight " + std::to_string(b.from) + "->" +
                                   std::to_string(b.to) + " blew up at t=" +
                                   std::to_string(t),
                               t);
    }
}

StaticSignals forward_static(const GsfgGraph& graph,
                             const std::map<NodeId, double>& inputs) {
    for (const auto& node : graph.nodes)
        if (!std::holds_alternative<Identity>(node.dynamics) &&
            !std::holds_alternative<StaticFunction>(node.dynamics))
            throw SemanticError("node " + std::to_string(node.id) +
                                " is not a static node");

    const auto input_set = input_nodes(graph);

    std::map<NodeId, int> pending;
    for (const auto& node : graph.nodes) pending[node.id] = 0;
    for (const auto& b : graph.branches) ++pending[b.to];

    std::deque<NodeId> ready;
    for (const auto& [id, count] : pending)
        if (count == 0) ready.push_back(id);

    StaticSignals signals;
    std::size_t done = 0;
    while (!ready.empty()) {
        const NodeId id = ready.front();
        ready.pop_front();
        ++done;
        const NodeSpec* node = graph.find_node(id);

        double u = 0.0;
        for (const Branch* b : graph.branches_into(id))
            u += b->weight * signals.y.at(b->from);
        signals.u[id] = u;

        double y;
        if (input_set.count(id)) {
            y = map_at(inputs, id, "input value");
        } else if (const auto* sf = std::get_if<StaticFunction>(&node->dynamics)) {
            y = expr::eval(*sf->f, {{"u", u}});
        } else {
            y = u;
        }
        signals.y[id] = y;

        for (const Branch* b : graph.branches_from(id))
            if (--pending[b->to] == 0) ready.push_back(b->to);
    }

    if (done < graph.nodes.size())
        throw SemanticError("static graph has a cycle");
    return signals;
}

GradcheckReport gradcheck(const GsfgGraph& graph,
                          const std::map<NodeId, double>& inputs,
                          const std::map<NodeId, double>& targets, double gamma,
                          double h) {
    const auto signals = forward_static(graph, inputs);
    auto [error, partials] = error_and_partials(signals.y, targets);

    const auto input_set = input_nodes(graph);
    std::map<NodeId, double> frechet;
    for (const auto& node : graph.nodes) {
        if (!input_set.count(node.id)) {
            if (const auto* sf = std::get_if<StaticFunction>(&node.dynamics)) {
                frechet[node.id] =
                    expr::eval_dual(*sf->f, {{"u", signals.u.at(node.id)}}, "u").deriv;
                continue;
            }
        }
        frechet[node.id] = 1.0;
    }

    LearningConfig config;
    config.gamma = gamma;
    const RateMap engine = weight_rates_truncated(graph, signals.y, frechet,
                                                  partials, config);

    auto error_with = [&](GsfgGraph perturbed) {
        return error_and_partials(forward_static(perturbed, inputs).y, targets).first;
    };

    GradcheckReport report;
    report.error_value = error;
    for (const auto& key : ordered_branches(graph)) {
        const Branch* b = graph.find_branch(key.first, key.second);
        if (!b->adaptive) continue;

        GsfgGraph hi = graph, lo = graph;
        hi.find_branch(key.first, key.second)->weight += h;
        lo.find_branch(key.first, key.second)->weight -= h;
        const double gradient = (error_with(hi) - error_with(lo)) / (2.0 * h);

        GradcheckEntry entry;
        entry.branch = key;
        entry.engine_rate = engine.at(key);
        entry.fd_rate = -gamma * gradient;
        const double denom =
            std::max(std::fabs(entry.engine_rate), std::fabs(entry.fd_rate));
        entry.rel_error =
            denom < 1e-12 ? 0.0 : std::fabs(entry.engine_rate - entry.fd_rate) / denom;
        report.entries.push_back(entry);
        report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    }
    return report;
}

}  // namespace gsfg
