#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gsfg/graph.hpp"

namespace gsfg {

enum class LearningMode { Truncated, FullSolve };

struct LearningConfig {
    double gamma = 0.0;
    LearningMode mode = LearningMode::Truncated;
    double y_floor = 1e-6;
    double det_tol = -1.0;  // negative: use 1e-9 * L
    double blowup_threshold = 1e12;

    double resolved_det_tol(int L) const {
        return det_tol >= 0.0 ? det_tol : 1e-9 * static_cast<double>(L);
    }
};

using RateMap = std::map<BranchKey, double>;

/// Weight rates for every branch plus the error value of the step. Rates of
/// non-adaptive branches are carried because upstream rates consume them;
/// they are never applied.
struct LearningState {
    RateMap rates;
    double error_value = 0.0;
};

/// Least-squares error over the target nodes and its partials. Nodes absent
/// from `targets` contribute nothing and have zero partials.
std::pair<double, std::map<NodeId, double>> error_and_partials(
    const std::map<NodeId, double>& y, const std::map<NodeId, double>& targets);

/// Rate recursion that stops at output nodes: branches into an output node
/// take the pure gradient term; interior branches fold in the already-known
/// downstream rates. Throws CycleBeyondOutput when no evaluation order exists.
RateMap weight_rates_truncated(const GsfgGraph& graph,
                               const std::map<NodeId, double>& y,
                               const std::map<NodeId, double>& frechet,
                               const std::map<NodeId, double>& error_partials,
                               const LearningConfig& config);

/// Solves (I - Phi) rates = mu by LU with partial pivoting. Throws
/// SingularSystem when |det(I - Phi)| is below the tolerance.
RateMap weight_rates_full(const PhiSystem& system, const LearningConfig& config);

/// The original neural-network law: sigmoid nodes with firing rates `r` and
/// membrane potentials `p`. Defers to the truncated recursion with the
/// static-function derivatives as Fréchet values.
RateMap nn_weight_rates(const GsfgGraph& network,
                        const std::map<NodeId, double>& r,
                        const std::map<NodeId, double>& p,
                        const std::map<NodeId, double>& targets, double gamma);

/// Explicit Euler on adaptive weights only. Throws WeightBlowup past the
/// threshold; `t` labels the fault.
void apply_rates(GsfgGraph& graph, const RateMap& rates, double dt,
                 double blowup_threshold, double t = 0.0);

struct StaticSignals {
    std::map<NodeId, double> u;
    std::map<NodeId, double> y;
};

/// Evaluates an acyclic graph of identity / static-function nodes. Input
/// nodes take their value from `inputs`.
StaticSignals forward_static(const GsfgGraph& graph,
                             const std::map<NodeId, double>& inputs);

struct GradcheckEntry {
    BranchKey branch;
    double engine_rate = 0.0;
    double fd_rate = 0.0;  // -gamma times the central-difference gradient
    double rel_error = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double max_rel_error = 0.0;
    double error_value = 0.0;
};

/// Central-difference verification of the learning rule on a static graph:
/// perturbs each adaptive weight by +-h and compares the engine rate against
/// -gamma dE/dw.
GradcheckReport gradcheck(const GsfgGraph& graph,
                          const std::map<NodeId, double>& inputs,
                          const std::map<NodeId, double>& targets, double gamma,
                          double h = 1e-5);

}  // namespace gsfg
