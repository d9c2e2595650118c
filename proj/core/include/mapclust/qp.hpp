#pragma once

#include "mapclust/constraints.hpp"
#include "mapclust/miqp.hpp"

#include <string>

namespace mapclust {

struct QpSettings {
  double eps_abs = 1e-7;      // absolute primal/dual residual tolerance
  int max_iter = 200000;
  int check_interval = 25;    // residual checks (keeps iterations cheap)
  double sigma = 1e-6;        // proximal regularization
  double alpha = 1.6;         // over-relaxation
  double rho = 0.1;           // initial step; equality rows use 1e3 * rho
  bool adaptive_rho = true;
  double eps_infeas = 1e-7;   // infeasibility certificate tolerance
  double margin_scale = 100.0;
  bool polish = true;
};

enum class QpStatus { Optimal, Infeasible, IterLimit };

struct QpSolution {
  Vector primal;  // full model column space; fixed binaries hold their values
  double objective = 0.0;
  /// Valid bound for the node subproblem:
  ///   lower_bound = objective - margin_scale * (r_p * max(1, ||y||_inf)
  ///                                           + r_d * max(1, ||x||_inf)).
  /// The margin is residual-proportional; its validity is verified against
  /// the brute-force oracle by the test suite.
  double lower_bound = -std::numeric_limits<double>::infinity();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  QpStatus status = QpStatus::IterLimit;
  std::string certificate;  // inconsistency description when Infeasible
  int iterations = 0;
};

/// Solves the continuous relaxation (z in [0,1]) of the model with the given
/// fixings substituted out (column elimination). Operator-splitting ADMM with
/// Ruiz equilibration, a sparse quasi-definite KKT factorization, iterative
/// refinement, and an active-set polish step. Deterministic for identical
/// inputs and settings.
QpSolution solve_relaxation(const MiqpModel& model, const FixMatrix& fixings,
                            const Vector* warm_primal, const QpSettings& settings);

}  // namespace mapclust
