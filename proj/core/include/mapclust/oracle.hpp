#pragma once

#include "mapclust/constraints.hpp"
#include "mapclust/types.hpp"

#include <vector>

namespace mapclust {

/// Certified global optimum by enumeration of all K^n assignments with
/// closed-form conditional parameters and semantic constraint evaluation
/// (independent of the compiled rows). Among objective ties within 1e-12 the
/// lexicographically smallest assignment wins. Returns feasible == false when
/// no assignment satisfies the constraints; throws when K^n exceeds 2^20.
MapSolution brute_force(const Dataset& data, const ProblemSpec& spec,
                        const std::vector<SideConstraint>& constraints);

}  // namespace mapclust
