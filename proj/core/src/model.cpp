#include "mapclust/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mapclust {

void ProblemSpec::validate(int d) const {
  if (K < 1) throw std::invalid_argument("spec: K must be >= 1");
  if (pi_floor <= 0.0 || pi_floor > 1.0 / K + 1e-15)
    throw std::invalid_argument("spec: need 0 < pi_floor <= 1/K");
  if (breakpoints < 1) throw std::invalid_argument("spec: breakpoints must be >= 1");
  if (scalar_precision) {
    if (d != 1) throw std::invalid_argument("spec: scalar precision requires d = 1");
    if (!(eta > 0.0)) throw std::invalid_argument("spec: eta must be positive");
  } else {
    if (precision.rows() != d || precision.cols() != d)
      throw std::invalid_argument("spec: precision must be d x d");
    if (!precision.isApprox(precision.transpose(), 1e-10))
      throw std::invalid_argument("spec: precision must be symmetric");
    cholesky_factor(precision);  // throws NotPsdError if indefinite
  }
  if (mu_lower.rows() != K || mu_lower.cols() != d || mu_upper.rows() != K ||
      mu_upper.cols() != d)
    throw std::invalid_argument("spec: mean bounds must be K x d");
  if (((mu_upper - mu_lower).array() < 0).any())
    throw std::invalid_argument("spec: mu_lower must be <= mu_upper");
  if (prior.kind == PriorKind::GaussianRidge) {
    if (prior.ridge.size() != d)
      throw std::invalid_argument("spec: ridge strength must have one entry per dimension");
    if ((prior.ridge.array() < 0).any())
      throw std::invalid_argument("spec: ridge strength must be nonnegative");
  }
}

namespace {

Matrix default_bounds_row(const Dataset& data, int K, bool upper) {
  Vector b = upper ? Vector(data.points.colwise().maxCoeff())
                   : Vector(data.points.colwise().minCoeff());
  return b.transpose().replicate(K, 1);
}

void check_dataset(const Dataset& data, int K) {
  if (data.n() < 1 || data.d() < 1)
    throw std::invalid_argument("dataset: need n >= 1 and d >= 1");
  if (!data.points.allFinite())
    throw std::invalid_argument("dataset: all entries must be finite");
  for (const auto& [i, k] : data.known_labels) {
    if (i < 0 || i >= data.n() || k < 0 || k >= K)
      throw std::invalid_argument("dataset: known label out of range");
  }
}

}  // namespace

ProblemSpec make_scalar_spec(const Dataset& data, int K, double eta,
                             double pi_floor, int breakpoints) {
  ProblemSpec s;
  s.K = K;
  s.scalar_precision = true;
  s.eta = eta;
  s.precision = Matrix::Constant(1, 1, 2.0 * eta);
  s.mu_lower = default_bounds_row(data, K, false);
  s.mu_upper = default_bounds_row(data, K, true);
  s.pi_floor = pi_floor;
  s.breakpoints = breakpoints;
  check_dataset(data, K);
  s.validate(data.d());
  return s;
}

ProblemSpec make_matrix_spec(const Dataset& data, int K, const Matrix& precision,
                             double pi_floor, int breakpoints) {
  ProblemSpec s;
  s.K = K;
  s.scalar_precision = false;
  s.precision = precision;
  s.mu_lower = default_bounds_row(data, K, false);
  s.mu_upper = default_bounds_row(data, K, true);
  s.pi_floor = pi_floor;
  s.breakpoints = breakpoints;
  check_dataset(data, K);
  s.validate(data.d());
  return s;
}

namespace {

void check_shapes(const Dataset& data, const ProblemSpec& spec, int n_assign,
                  int K_assign, const Params& p) {
  if (n_assign != data.n()) throw std::invalid_argument("assignment/dataset size mismatch");
  if (K_assign != spec.K) throw std::invalid_argument("assignment/spec K mismatch");
  if (p.mu.rows() != spec.K || p.mu.cols() != data.d())
    throw std::invalid_argument("params: mu must be K x d");
  if (p.pi.size() != spec.K) throw std::invalid_argument("params: pi must have K entries");
}

double ridge_term(const ProblemSpec& spec, const Params& p) {
  if (spec.prior.kind != PriorKind::GaussianRidge) return 0.0;
  double r = 0.0;
  for (int k = 0; k < spec.K; ++k)
    r += 0.5 * (p.mu.row(k).transpose().array().square() * spec.prior.ridge.array()).sum();
  return r;
}

double quad_penalty(const Dataset& data, const ProblemSpec& spec, int i, int k,
                    const Params& p) {
  if (spec.scalar_precision) {
    double r = data.points(i, 0) - p.mu(k, 0);
    return spec.eta * r * r;
  }
  Vector r = data.points.row(i) - p.mu.row(k);
  return 0.5 * r.dot(spec.precision * r);
}

}  // namespace

double evaluate_objective(const Dataset& data, const ProblemSpec& spec,
                          const Assignment& a, const Params& p) {
  check_shapes(data, spec, a.n(), a.K, p);
  for (int k = 0; k < spec.K; ++k)
    if (!(p.pi(k) > 0.0)) throw std::domain_error("params: pi_k must be positive");
  double obj = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    int k = a.labels[i];
    obj += quad_penalty(data, spec, i, k, p) - std::log(p.pi(k));
  }
  return obj + ridge_term(spec, p);
}

double evaluate_objective_soft(const Dataset& data, const ProblemSpec& spec,
                               const Matrix& r, const Params& p) {
  if (r.rows() != data.n() || r.cols() != spec.K)
    throw std::invalid_argument("responsibilities must be n x K");
  check_shapes(data, spec, data.n(), spec.K, p);
  for (int k = 0; k < spec.K; ++k)
    if (!(p.pi(k) > 0.0)) throw std::domain_error("params: pi_k must be positive");
  double obj = 0.0;
  for (int i = 0; i < data.n(); ++i)
    for (int k = 0; k < spec.K; ++k)
      if (r(i, k) != 0.0)
        obj += r(i, k) * (quad_penalty(data, spec, i, k, p) - std::log(p.pi(k)));
  return obj + ridge_term(spec, p);
}

Vector floor_simplex(const Vector& weights, double pi_floor) {
  const int K = static_cast<int>(weights.size());
  Vector pi(K);
  std::vector<bool> floored(K, false);
  // Water-filling: repeatedly pin coordinates that fall below the floor and
  // redistribute proportionally over the rest.
  while (true) {
    int m = 0;
    double unfloored_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      if (floored[k]) ++m;
      else unfloored_sum += weights(k);
    }
    double remaining = 1.0 - m * pi_floor;
    for (int k = 0; k < K; ++k) {
      if (floored[k]) pi(k) = pi_floor;
      else pi(k) = unfloored_sum > 0.0 ? weights(k) / unfloored_sum * remaining
                                       : remaining / (K - m);
    }
    bool changed = false;
    for (int k = 0; k < K; ++k) {
      if (!floored[k] && pi(k) < pi_floor - 1e-15) {
        floored[k] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  double s = pi.sum();
  if (s > 0.0) pi /= s;
  return pi;
}

Params conditional_params(const Dataset& data, const ProblemSpec& spec,
                          const Assignment& a) {
  if (a.n() != data.n() || a.K != spec.K)
    throw std::invalid_argument("assignment/spec shape mismatch");
  const int K = spec.K, d = data.d();
  Params p;
  p.mu = Matrix::Zero(K, d);
  Vector counts = Vector::Zero(K);
  Matrix sums = Matrix::Zero(K, d);
  for (int i = 0; i < data.n(); ++i) {
    counts(a.labels[i]) += 1.0;
    sums.row(a.labels[i]) += data.points.row(i);
  }
  const bool ridge = spec.prior.kind == PriorKind::GaussianRidge;
  for (int k = 0; k < K; ++k) {
    Vector mu_k;
    if (counts(k) == 0.0) {
      mu_k = ridge ? Vector(Vector::Zero(d))
                   : Vector(0.5 * (spec.mu_lower.row(k) + spec.mu_upper.row(k)).transpose());
    } else if (!ridge) {
      mu_k = sums.row(k).transpose() / counts(k);
    } else {
      // (n_k P + Lambda) mu = P sum_i y_i
      Matrix lhs = counts(k) * spec.precision;
      lhs.diagonal() += spec.prior.ridge;
      mu_k = lhs.ldlt().solve(spec.precision * sums.row(k).transpose());
    }
    for (int j = 0; j < d; ++j)
      p.mu(k, j) = std::clamp(mu_k(j), spec.mu_lower(k, j), spec.mu_upper(k, j));
  }
  p.pi = floor_simplex(counts / static_cast<double>(data.n()), spec.pi_floor);
  return p;
}

Matrix cholesky_factor(const Matrix& P) {
  const int d = static_cast<int>(P.rows());
  if (P.cols() != d) throw std::invalid_argument("cholesky: matrix must be square");
  Matrix L = Matrix::Zero(d, d);
  const double tol = 1e-12 * std::max(1.0, P.diagonal().cwiseAbs().maxCoeff());
  for (int j = 0; j < d; ++j) {
    double diag = P(j, j) - L.row(j).head(j).squaredNorm();
    if (diag < -tol) throw NotPsdError(j + 1);
    if (diag <= tol) {
      // Semidefinite pivot: the whole column must vanish for PSD to hold.
      for (int i = j + 1; i < d; ++i) {
        double off = P(i, j) - L.row(i).head(j).dot(L.row(j).head(j));
        if (std::abs(off) > 1e-8 * std::max(1.0, std::abs(P(i, j))))
          throw NotPsdError(j + 1);
      }
      L(j, j) = 0.0;
      continue;
    }
    L(j, j) = std::sqrt(diag);
    for (int i = j + 1; i < d; ++i)
      L(i, j) = (P(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  return L;
}

WhitenResult whiten(const Dataset& data, const ProblemSpec& spec) {
  if (spec.scalar_precision)
    throw std::invalid_argument("whiten: spec must carry a precision matrix");
  Matrix L = cholesky_factor(spec.precision);
  WhitenResult w;
  w.transform = L.transpose();
  w.data = data;
  w.data.points = data.points * L;  // rows y_i -> (L^T y_i)^T = y_i^T L
  w.diagonal = true;
  const int d = data.d();
  for (int i = 0; i < d && w.diagonal; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j && L(i, j) != 0.0) { w.diagonal = false; break; }
  if (w.diagonal) {
    // Diagonal scaling with nonnegative factors maps box corners to corners.
    w.mu_lower = spec.mu_lower * L.diagonal().asDiagonal();
    w.mu_upper = spec.mu_upper * L.diagonal().asDiagonal();
  } else {
    w.mu_lower = spec.mu_lower;
    w.mu_upper = spec.mu_upper;
  }
  return w;
}

SolutionMetrics solution_metrics(const MapSolution& est, const MapSolution& truth,
                                 const ProblemSpec& spec) {
  const int K = spec.K;
  if (est.params.mu.rows() != K || truth.params.mu.rows() != K ||
      est.assignment.K != K || truth.assignment.K != K)
    throw std::invalid_argument("metrics: component count mismatch");
  if (est.assignment.n() != truth.assignment.n())
    throw std::invalid_argument("metrics: sample count mismatch");
  if (K > 10) throw std::invalid_argument("metrics: exact matching supports K <= 10");

  Matrix cost(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      cost(k, l) = (est.params.mu.row(k) - truth.params.mu.row(l)).norm();

  std::vector<int> perm(K), best(K);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int k = 0; k < K; ++k) c += cost(k, perm[k]);
    if (c < best_cost - 1e-15) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  SolutionMetrics m;
  m.matched = best;
  double mu_sq = 0.0;
  for (int k = 0; k < K; ++k) {
    m.pi_sup = std::max(m.pi_sup, std::abs(est.params.pi(k) - truth.params.pi(best[k])));
    mu_sq += (est.params.mu.row(k) - truth.params.mu.row(best[k])).squaredNorm();
  }
  m.mu_l2 = std::sqrt(mu_sq);
  const int n = est.assignment.n();
  int mismatched = 0;
  for (int i = 0; i < n; ++i)
    if (best[est.assignment.labels[i]] != truth.assignment.labels[i]) ++mismatched;
  m.z_mismatch = static_cast<double>(mismatched) / n;
  return m;
}

double point_component_cost(const Dataset& data, const ProblemSpec& spec,
                            const Params& p, int i, int k) {
  return quad_penalty(data, spec, i, k, p) - std::log(p.pi(k));
}

double normalization_offset(const Dataset& data, const ProblemSpec& spec) {
  const int d = data.d();
  Matrix L = cholesky_factor(spec.precision);
  double logdet = 0.0;
  for (int j = 0; j < d; ++j)
    logdet += 2.0 * std::log(std::max(L(j, j), std::numeric_limits<double>::min()));
  return data.n() * (0.5 * d * std::log(2.0 * M_PI) - 0.5 * logdet);
}

}  // namespace mapclust
