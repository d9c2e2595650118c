#pragma once

#include "mapclust/types.hpp"

namespace mapclust {

/// Negative log posterior of a hard clustering, up to assignment-independent
/// constants: for d = 1 this is
///     eta * sum_i sum_k z_ik (y_i - mu_k)^2 - sum_i sum_k z_ik log pi_k,
/// for d > 1 the quadratic term is 1/2 (y_i - mu_k)' P (y_i - mu_k), and a
/// GaussianRidge prior adds 1/2 sum_k mu_k' Lambda mu_k. Smaller is better.
///
/// Throws std::invalid_argument on shape mismatch and std::domain_error when
/// any pi_k <= 0.
double evaluate_objective(const Dataset& data, const ProblemSpec& spec,
                          const Assignment& a, const Params& p);

/// Same objective with relaxed memberships r in [0,1]^{n x K} (rows summing
/// to one); linear in r for fixed params.
double evaluate_objective_soft(const Dataset& data, const ProblemSpec& spec,
                               const Matrix& responsibilities, const Params& p);

/// Maximizer of sum_k w_k log pi_k over the simplex intersected with
/// pi >= pi_floor (water-filling); w is a nonnegative weight vector.
Vector floor_simplex(const Vector& weights, double pi_floor);

/// Minimizer of the objective over (mu, pi) for a fixed assignment, on the
/// box/floored-simplex domain: component means are clamped to their boxes,
/// mixing weights are the counts n_k/n water-filled against the floor
/// pi >= pi_floor. Empty components get the box midpoint (uniform prior) and
/// the floor weight. Exact whenever no clamp binds.
Params conditional_params(const Dataset& data, const ProblemSpec& spec,
                          const Assignment& a);

/// Lower Cholesky-type factor L with P = L L^T for a symmetric PSD matrix;
/// tolerates zero pivots. Throws NotPsdError naming the offending leading
/// minor otherwise.
Matrix cholesky_factor(const Matrix& P);

struct WhitenResult {
  Dataset data;      // y_tilde = L^T y per sample
  Matrix transform;  // L^T
  bool diagonal;     // true when bounds could be carried through
  Matrix mu_lower;   // transformed bounds when diagonal, original otherwise
  Matrix mu_upper;
};

/// Reduces the shared-precision quadratic form to a Euclidean one:
/// 1/2 (y - mu)' P (y - mu) = 1/2 || L^T y - L^T mu ||^2. Mean boxes are
/// transformed only when L is diagonal; otherwise they stay on the original
/// mu coordinates and formulations must keep mu explicit.
WhitenResult whiten(const Dataset& data, const ProblemSpec& spec);

struct SolutionMetrics {
  double pi_sup = 0.0;       // sup_k |pi_hat - pi| after alignment
  double mu_l2 = 0.0;        // Frobenius distance of aligned mean stacks
  double z_mismatch = 0.0;   // (1/n) sum_i sup_k |z_hat_ik - z_ik|
  std::vector<int> matched;  // matched[k] = truth component for estimate k
};

/// Comparison metrics with estimated components aligned to the truth by
/// minimum-cost perfect matching on || mu_hat_k - mu_l ||_2.
SolutionMetrics solution_metrics(const MapSolution& est, const MapSolution& truth,
                                 const ProblemSpec& spec);

/// Per-sample cost of putting sample i into component k under fixed params
/// (the objective splits into a sum of these plus the ridge term).
double point_component_cost(const Dataset& data, const ProblemSpec& spec,
                            const Params& p, int i, int k);

/// The assignment-independent constant dropped from evaluate_objective:
/// full -log posterior = evaluate_objective + normalization_offset.
double normalization_offset(const Dataset& data, const ProblemSpec& spec);

}  // namespace mapclust
