#pragma once

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapclust {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n observation units of dimension d, with optional sample ids and an
/// optional partial labelling (sample index -> component, 0-based).
struct Dataset {
  Matrix points;                    // n x d
  std::vector<std::string> ids;     // empty or size n
  std::map<int, int> known_labels;  // 0-based component per labelled sample
  int missing_filled = 0;           // blank numeric cells replaced by 0 at load

  int n() const { return static_cast<int>(points.rows()); }
  int d() const { return static_cast<int>(points.cols()); }
};

enum class PriorKind { Uniform, GaussianRidge };

struct Prior {
  PriorKind kind = PriorKind::Uniform;
  Vector ridge;  // per-dimension strength, size d when kind == GaussianRidge
};

/// Problem definition: component count, fixed precision, mean boxes, prior,
/// mixing-weight floor and the piecewise-linear breakpoint count.
///
/// The precision is either a scalar eta (d = 1, quadratic penalty
/// eta * (y - mu)^2) or a shared symmetric PSD matrix P (penalty
/// 1/2 (y - mu)' P (y - mu)). Internally `precision` always holds the d x d
/// quadratic-form matrix; for scalar input it is the 1x1 matrix [2 * eta].
struct ProblemSpec {
  int K = 1;
  bool scalar_precision = true;
  double eta = 0.5;   // meaningful when scalar_precision
  Matrix precision;   // d x d, PSD
  Matrix mu_lower;    // K x d
  Matrix mu_upper;    // K x d
  Prior prior;
  double pi_floor = 1e-3;
  int breakpoints = 32;

  void validate(int d) const;
};

/// Builds a d=1 spec with precision eta and default per-dimension mean
/// bounds [min(y), max(y)].
ProblemSpec make_scalar_spec(const Dataset& data, int K, double eta,
                             double pi_floor = 1e-3, int breakpoints = 32);

/// Builds a spec with a shared precision matrix and default mean bounds.
ProblemSpec make_matrix_spec(const Dataset& data, int K, const Matrix& precision,
                             double pi_floor = 1e-3, int breakpoints = 32);

/// Hard assignment of every sample to exactly one component. Storing the
/// component index per sample makes the row-sum-one invariant structural.
struct Assignment {
  std::vector<int> labels;  // size n, values in [0, K)
  int K = 0;

  int n() const { return static_cast<int>(labels.size()); }
  double z(int i, int k) const { return labels[i] == k ? 1.0 : 0.0; }

  bool operator==(const Assignment& o) const = default;
};

struct Params {
  Matrix mu;  // K x d
  Vector pi;  // K, on the floored simplex
};

struct MapSolution {
  Assignment assignment;
  Params params;
  double objective = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

/// Thrown when a symmetric matrix fails its PSD factorization; carries the
/// 1-based order of the offending leading principal minor.
struct NotPsdError : std::runtime_error {
  int leading_minor;
  explicit NotPsdError(int minor)
      : std::runtime_error("matrix is not positive semidefinite: leading minor of order " +
                           std::to_string(minor) + " is negative"),
        leading_minor(minor) {}
};

}  // namespace mapclust
