#include "gsfg/graph.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

namespace gsfg {

namespace {

std::string branch_name(NodeId from, NodeId to) {
    return std::to_string(from) + "->" + std::to_string(to);
}

double value_at(const std::map<NodeId, double>& values, NodeId node,
                const char* what) {
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

}  // namespace

const NodeSpec* GsfgGraph::find_node(NodeId id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const Branch* GsfgGraph::find_branch(NodeId from, NodeId to) const {
    for (const auto& b : branches)
        if (b.from == from && b.to == to) return &b;
    return nullptr;
}

Branch* GsfgGraph::find_branch(NodeId from, NodeId to) {
    for (auto& b : branches)
        if (b.from == from && b.to == to) return &b;
    return nullptr;
}

std::vector<const Branch*> GsfgGraph::branches_from(NodeId node) const {
    std::vector<const Branch*> out;
    for (const auto& b : branches)
        if (b.from == node) out.push_back(&b);
    return out;
}

std::vector<const Branch*> GsfgGraph::branches_into(NodeId node) const {
    std::vector<const Branch*> out;
    for (const auto& b : branches)
        if (b.to == node) out.push_back(&b);
    return out;
}

ValidationReport validate(const GsfgGraph& graph) {
    ValidationReport report;
    auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

    const int n = static_cast<int>(graph.nodes.size());
    std::set<NodeId> ids;
    for (const auto& node : graph.nodes) {
        if (!ids.insert(node.id).second)
            fail("node id " + std::to_string(node.id) + " repeated");
        if (node.id < 1 || node.id > n)
            fail("node id " + std::to_string(node.id) + " outside 1.." +
                 std::to_string(n));
        if (const auto* tf = std::get_if<LinearTF>(&node.dynamics)) {
            if (tf->den.empty())
                fail("node " + std::to_string(node.id) + ": empty denominator");
            else if (tf->den.front() == 0.0)
                fail("node " + std::to_string(node.id) +
                     ": denominator leading coefficient is zero");
            else if (tf->num.size() > tf->den.size() && !is_pure_derivative(*tf))
                fail("node " + std::to_string(node.id) +
                     ": improper transfer function");
        }
    }

    std::set<BranchKey> seen;
    for (const auto& b : graph.branches) {
        if (!ids.count(b.from))
            fail("branch " + branch_name(b.from, b.to) + ": unknown node " +
                 std::to_string(b.from));
        if (!ids.count(b.to))
            fail("branch " + branch_name(b.from, b.to) + ": unknown node " +
                 std::to_string(b.to));
        if (!seen.insert({b.from, b.to}).second)
            fail("duplicate branch (" + std::to_string(b.from) + "," +
                 std::to_string(b.to) + ")");
        if (!b.adaptive && b.weight != b.initial_weight)
            fail("branch " + branch_name(b.from, b.to) +
                 ": non-adaptive weight drifted from its fixed value");
    }

    for (NodeId out : graph.output_nodes)
        if (!ids.count(out)) fail("output node " + std::to_string(out) + " unknown");

    const bool has_adaptive =
        std::any_of(graph.branches.begin(), graph.branches.end(),
                    [](const Branch& b) { return b.adaptive; });
    if (has_adaptive && graph.output_nodes.empty())
        fail("adaptive branches present but no output nodes");

    return report;
}

std::set<NodeId> input_nodes(const GsfgGraph& graph) {
    std::set<NodeId> result;
    for (const auto& node : graph.nodes) result.insert(node.id);
    for (const auto& b : graph.branches) result.erase(b.to);
    return result;
}

double floor_guard(double y, double y_floor) {
    const double sign = y < 0.0 ? -1.0 : 1.0;
    return sign * std::max(std::fabs(y), y_floor);
}

PhiSystem assemble_phi(const GsfgGraph& graph, const std::map<NodeId, double>& y,
                       const std::map<NodeId, double>& frechet, double gamma,
                       const std::map<NodeId, double>& error_partials,
                       double y_floor, PhiForm form) {
    PhiSystem system;
    system.branch_order.reserve(graph.branches.size());
    for (const auto& b : graph.branches) system.branch_order.push_back({b.from, b.to});
    std::sort(system.branch_order.begin(), system.branch_order.end(),
              [](const BranchKey& a, const BranchKey& b) {
                  if (a.second != b.second) return a.second < b.second;
                  return a.first < b.first;
              });

    const int L = static_cast<int>(system.branch_order.size());
    system.phi = Eigen::MatrixXd::Zero(L, L);
    system.mu = Eigen::VectorXd::Zero(L);

    std::map<BranchKey, int> row_of;
    for (int l = 0; l < L; ++l) row_of[system.branch_order[static_cast<std::size_t>(l)]] = l;

    for (int l = 0; l < L; ++l) {
        const auto [i, j] = system.branch_order[static_cast<std::size_t>(l)];
        const double yi = value_at(y, i, "output value");
        const double gj = value_at(frechet, j, "Frechet value");

        // the y_j division cancels in the mu term, so no guard is needed here
        system.mu(l) = -gamma * yi * gj * partial_at(error_partials, j);

        if (form == PhiForm::TruncateAtOutputs && graph.output_nodes.count(j))
            continue;
        const double yj = floor_guard(value_at(y, j, "output value"), y_floor);
        for (const Branch* out : graph.branches_from(j)) {
            const int m = row_of.at({out->from, out->to});
            system.phi(l, m) = gj * (yi / yj) * out->weight;
        }
    }
    return system;
}

UniquenessResult uniqueness_check(const PhiSystem& system, double tol) {
    const int L = static_cast<int>(system.phi.rows());
    if (system.phi.cols() != L)
        throw SemanticError("Phi must be square");
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(L, L) - system.phi;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    UniquenessResult result;
    result.det = L == 0 ? 1.0 : lu.determinant();
    result.unique = std::fabs(result.det) > tol;
    return result;
}

}  // namespace gsfg
