#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gsfg/dynamics.hpp"
#include "gsfg/errors.hpp"

namespace gsfg {

using BranchKey = std::pair<NodeId, NodeId>;  // (from, to)

struct Branch {
    NodeId from = 0;
    NodeId to = 0;
    double weight = 0.0;          // current gain
    double initial_weight = 0.0;  // fixed gain for non-adaptive branches
    bool adaptive = false;
};

/// Nodes, weighted branches partitioned into adaptive / non-adaptive, and the
/// output set entering the error function.
struct GsfgGraph {
    std::vector<NodeSpec> nodes;
    std::vector<Branch> branches;
    std::set<NodeId> output_nodes;

    const NodeSpec* find_node(NodeId id) const;
    const Branch* find_branch(NodeId from, NodeId to) const;
    Branch* find_branch(NodeId from, NodeId to);
    std::vector<const Branch*> branches_from(NodeId node) const;
    std::vector<const Branch*> branches_into(NodeId node) const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant; violations are data, not exceptions.
ValidationReport validate(const GsfgGraph& graph);

/// Nodes with no incoming branch; they carry the external input signal.
std::set<NodeId> input_nodes(const GsfgGraph& graph);

/// The linear system rates = Phi * rates + mu, rows ordered by (to, from).
struct PhiSystem {
    Eigen::MatrixXd phi;
    Eigen::VectorXd mu;
    std::vector<BranchKey> branch_order;
};

enum class PhiForm {
    Full,               // every coupling term
    TruncateAtOutputs,  // rows whose head is an output node keep only mu
};

/// Denominator guard: sign(y) * max(|y|, floor), with sign(0) taken as +1.
double floor_guard(double y, double y_floor);

PhiSystem assemble_phi(const GsfgGraph& graph, const std::map<NodeId, double>& y,
                       const std::map<NodeId, double>& frechet, double gamma,
                       const std::map<NodeId, double>& error_partials,
                       double y_floor = 1e-6, PhiForm form = PhiForm::Full);

struct UniquenessResult {
    double det = 0.0;  // det(I - Phi)
    bool unique = false;
};

/// LU with partial pivoting on I - Phi; unique iff |det| > tol.
UniquenessResult uniqueness_check(const PhiSystem& system, double tol);

}  // namespace gsfg
