#pragma once

#include "mapclust/constraints.hpp"
#include "mapclust/types.hpp"

#include <cstdint>
#include <vector>

namespace mapclust {

struct SoftSolution {
  Matrix responsibilities;          // n x K, rows on the simplex
  Params params;
  std::vector<double> loglik_trace; // observed-data log posterior, non-decreasing
};

/// Lloyd iterations from seeded farthest-point starts; deterministic given
/// the seed. Throws when n < K.
Assignment kmeans_init(const Dataset& data, int K, uint64_t seed);

struct EmResult {
  SoftSolution soft;
  MapSolution rounded;  // argmax rounding plus constraint repair
};

/// Soft EM on the relaxed memberships with the spec's box/floor M-step.
/// Constraints are not enforced during the iterations; they only drive the
/// final rounding repair.
EmResult em(const Dataset& data, const ProblemSpec& spec, const Params& init,
            int max_iter = 500, double tol = 1e-8,
            const std::vector<SideConstraint>& repair_constraints = {});

/// Best rounded solution over `restarts` EM runs: the first starts from
/// kmeans_init, the rest from uniform parameter draws.
MapSolution em_multistart(const Dataset& data, const ProblemSpec& spec, int restarts,
                          uint64_t seed,
                          const std::vector<SideConstraint>& repair_constraints = {});

struct SaSchedule {
  double t0 = 0.0;      // <= 0 calibrates from the initial move spread
  double decay = 0.995;
  int steps = 50000;
};

/// Annealing over feasible assignments with single-sample moves; objective
/// deltas use closed-form conditional parameters. Throws when no feasible
/// initial assignment can be constructed (the message names the blocking
/// constraints).
MapSolution simulated_annealing(const Dataset& data, const ProblemSpec& spec,
                                const std::vector<SideConstraint>& constraints,
                                SaSchedule schedule, uint64_t seed);

}  // namespace mapclust
