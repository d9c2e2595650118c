#pragma once

#include "mapclust/miqp.hpp"
#include "mapclust/qp.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mapclust {

enum class Branching { MostInfeasible, MostIntegral };
enum class BnbStatus { OptimalWithinEps, Feasible, Infeasible };

struct BnbOptions {
  double epsilon = 1e-4;          // relative gap target
  double time_limit = 1e18;       // seconds
  size_t node_limit = static_cast<size_t>(-1);
  Branching strategy = Branching::MostInfeasible;
  int workers = 1;
  bool deterministic = false;     // forces a single worker
  uint64_t seed = 0;
  double integrality_tol = 1e-6;
  double fathom_slack = 1e-9;     // nodes with bound > UBD - slack are cut
  QpSettings qp;
};

struct TraceRecord {
  double t = 0.0;  // seconds since start
  double ubd = 0.0;
  double glbd = 0.0;
  size_t nodes = 0;
  size_t queue_len = 0;
};

struct BnbResult {
  MapSolution incumbent;  // incumbent.feasible == false when none was found
  double ubd = 0.0;       // true-objective value of the incumbent
  double glbd = 0.0;      // lower bound in the chordal-model space
  double true_glbd = 0.0; // after true_bound_correction
  double gap = 0.0;       // (ubd - glbd) / max(1, |ubd|)
  size_t nodes_explored = 0;
  size_t nodes_fathomed = 0;
  std::vector<TraceRecord> trace;
  BnbStatus status = BnbStatus::Feasible;
  double wall_seconds = 0.0;
  double e_max = 0.0;
};

/// Best-first branch-and-bound over the binary z variables: pop the node
/// with the smallest parent bound (FIFO among ties), propagate, solve the
/// relaxation, then fathom / accept an incumbent / branch z_ik = 0|1 (the
/// one-child is explored first among equal keys). Incumbents are polished
/// and re-evaluated under the true objective, so UBD is valid for the
/// original problem; true_glbd carries the chordal correction.
BnbResult solve(const Dataset& data, const ProblemSpec& spec,
                const std::vector<SideConstraint>& constraints,
                const BnbOptions& options);

/// Branch-variable choice among the free z columns of an optimal relaxation:
/// MostInfeasible picks the fraction closest to 0.5, MostIntegral the
/// fractional value closest to 1 (integral-within-tolerance values are not
/// candidates). Ties break on smallest (i, k); none when z is integral.
std::optional<std::pair<int, int>> select_branch_var(const QpSolution& sol,
                                                     Branching strategy,
                                                     const MiqpModel& model,
                                                     const FixMatrix& fixings,
                                                     double integrality_tol = 1e-6);

/// Per-row argmax rounding of a relaxed solution (ties to the smaller
/// component) followed by greedy constraint repair; none if repair fails.
std::optional<MapSolution> round_and_repair(const QpSolution& sol,
                                            const std::vector<SideConstraint>& constraints,
                                            const MiqpModel& model, const Dataset& data,
                                            const ProblemSpec& spec);

/// Alternating descent on the biconvex structure: closed-form parameters for
/// fixed assignments, then single-sample constraint-respecting reassignment,
/// until no improvement. The objective never increases.
MapSolution local_polish(const MapSolution& start, const Dataset& data,
                         const ProblemSpec& spec,
                         const std::vector<SideConstraint>& constraints);

}  // namespace mapclust
