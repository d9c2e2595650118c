#include "mapclust/heuristics.hpp"

#include "mapclust/model.hpp"
#include "mapclust/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mapclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Dataset& data, int i, const Vector& center) {
  return (data.points.row(i).transpose() - center).squaredNorm();
}

// Canonicalize + verify + evaluate; mirrors the incumbent path of the engine.
MapSolution finish_assignment(Assignment a, const Dataset& data, const ProblemSpec& spec,
                              const std::vector<SideConstraint>& cs) {
  Params p = conditional_params(data, spec, a);
  if (component_symmetric(cs, spec.K) &&
      std::any_of(cs.begin(), cs.end(), [](const SideConstraint& c) {
        return c.kind == ConstraintKind::OrderPi;
      })) {
    a = sort_components_by_pi(a, p);
    p = conditional_params(data, spec, a);
  }
  MapSolution s;
  s.feasible = satisfies_all(cs, a, p);
  s.objective = evaluate_objective(data, spec, a, p);
  s.assignment = std::move(a);
  s.params = std::move(p);
  return s;
}

}  // namespace

Assignment kmeans_init(const Dataset& data, int K, uint64_t seed) {
  const int n = data.n();
  if (n < K) throw std::invalid_argument("kmeans_init: need n >= K");
  Rng rng(seed);

  // Farthest-point seeding from a random first center.
  std::vector<int> centers;
  centers.push_back(rng.uniform_int(n));
  std::vector<double> dist(n, kInf);
  while (static_cast<int>(centers.size()) < K) {
    int last = centers.back();
    for (int i = 0; i < n; ++i)
      dist[i] = std::min(dist[i], (data.points.row(i) - data.points.row(last)).squaredNorm());
    int far = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i)
      if (dist[i] > best + 1e-15) {
        best = dist[i];
        far = i;
      }
    centers.push_back(far);
  }
  Matrix mu(K, data.d());
  for (int k = 0; k < K; ++k) mu.row(k) = data.points.row(centers[k]);

  Assignment a;
  a.K = K;
  a.labels.assign(n, 0);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double best = kInf;
      for (int k = 0; k < K; ++k) {
        double d2 = sq_dist(data, i, mu.row(k).transpose());
        if (d2 < best - 1e-15) {
          best = d2;
          arg = k;
        }
      }
      if (arg != a.labels[i]) {
        a.labels[i] = arg;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(K, data.d());
    Vector counts = Vector::Zero(K);
    for (int i = 0; i < n; ++i) {
      sums.row(a.labels[i]) += data.points.row(i);
      counts(a.labels[i]) += 1.0;
    }
    for (int k = 0; k < K; ++k)
      if (counts(k) > 0) mu.row(k) = sums.row(k) / counts(k);
    if (!changed) break;
  }
  return a;
}

namespace {

double observed_loglik(const Dataset& data, const ProblemSpec& spec, const Params& p) {
  // log prod_i sum_k pi_k exp(-penalty_ik) up to the shared Gaussian
  // constants; point_component_cost is exactly -log of one summand.
  double ll = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    Vector logw(spec.K);
    double m = -kInf;
    for (int k = 0; k < spec.K; ++k) {
      logw(k) = -point_component_cost(data, spec, p, i, k);
      m = std::max(m, logw(k));
    }
    double s = 0.0;
    for (int k = 0; k < spec.K; ++k) s += std::exp(logw(k) - m);
    ll += m + std::log(s);
  }
  if (spec.prior.kind == PriorKind::GaussianRidge)
    for (int k = 0; k < spec.K; ++k)
      ll -= 0.5 * (p.mu.row(k).transpose().array().square() * spec.prior.ridge.array()).sum();
  return ll;
}

}  // namespace

EmResult em(const Dataset& data, const ProblemSpec& spec, const Params& init,
            int max_iter, double tol, const std::vector<SideConstraint>& repair_constraints) {
  const int n = data.n(), K = spec.K;
  EmResult res;
  Params p = init;
  Matrix r(n, K);
  res.soft.loglik_trace.clear();
  double prev = -kInf;
  for (int it = 0; it < max_iter; ++it) {
    double ll = observed_loglik(data, spec, p);
    res.soft.loglik_trace.push_back(ll);
    // E-step: r_ik proportional to pi_k exp(-penalty).
    for (int i = 0; i < n; ++i) {
      Vector logw(K);
      double m = -kInf;
      for (int k = 0; k < K; ++k) {
        logw(k) = -point_component_cost(data, spec, p, i, k);
        m = std::max(m, logw(k));
      }
      double s = 0.0;
      for (int k = 0; k < K; ++k) {
        r(i, k) = std::exp(logw(k) - m);
        s += r(i, k);
      }
      r.row(i) /= s;
    }
    // M-step with the same box/floor domain as the exact conditionals.
    Vector counts = r.colwise().sum();
    p.pi = floor_simplex(counts / static_cast<double>(n), spec.pi_floor);
    for (int k = 0; k < K; ++k) {
      Vector sum = Vector::Zero(data.d());
      for (int i = 0; i < n; ++i) sum += r(i, k) * data.points.row(i).transpose();
      Vector mu_k;
      if (counts(k) <= 1e-300) {
        mu_k = 0.5 * (spec.mu_lower.row(k) + spec.mu_upper.row(k)).transpose();
      } else if (spec.prior.kind == PriorKind::GaussianRidge) {
        Matrix lhs = counts(k) * spec.precision;
        lhs.diagonal() += spec.prior.ridge;
        mu_k = lhs.ldlt().solve(spec.precision * sum);
      } else {
        mu_k = sum / counts(k);
      }
      for (int j = 0; j < data.d(); ++j)
        p.mu(k, j) = std::clamp(mu_k(j), spec.mu_lower(k, j), spec.mu_upper(k, j));
    }
    if (it > 0 && ll - prev < tol) break;
    prev = ll;
  }
  res.soft.responsibilities = r;
  res.soft.params = p;

  // Rounding: per-row argmax (ties to the smaller component), then repair.
  Assignment a;
  a.K = K;
  a.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    double best = -kInf;
    for (int k = 0; k < K; ++k)
      if (r(i, k) > best + 1e-12) {
        best = r(i, k);
        arg = k;
      }
    a.labels[i] = arg;
  }
  res.rounded = finish_assignment(std::move(a), data, spec, repair_constraints);
  if (!res.rounded.feasible && !repair_constraints.empty()) {
    // Greedy repair: move the sample that hurts the objective least until
    // the assignment constraints hold (best effort, <= n passes).
    Assignment cur = res.rounded.assignment;
    for (int pass = 0; pass <= n; ++pass) {
      Params cp = conditional_params(data, spec, cur);
      if (satisfies_all(repair_constraints, cur, cp)) break;
      double best_delta = kInf;
      int bi = -1, bk = -1;
      size_t cur_viol = 0;
      for (const auto& c : repair_constraints)
        cur_viol += satisfies(c, cur, cp) ? 0 : 1;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) {
          if (k == cur.labels[i]) continue;
          Assignment trial = cur;
          trial.labels[i] = k;
          Params tp = conditional_params(data, spec, trial);
          size_t viol = 0;
          for (const auto& c : repair_constraints)
            viol += satisfies(c, trial, tp) ? 0 : 1;
          if (viol >= cur_viol) continue;
          double delta = evaluate_objective(data, spec, trial, tp) -
                         evaluate_objective(data, spec, cur, cp);
          if (delta < best_delta - 1e-15) {
            best_delta = delta;
            bi = i;
            bk = k;
          }
        }
      if (bi < 0) break;
      cur.labels[bi] = bk;
    }
    res.rounded = finish_assignment(std::move(cur), data, spec, repair_constraints);
  }
  return res;
}

MapSolution em_multistart(const Dataset& data, const ProblemSpec& spec, int restarts,
                          uint64_t seed,
                          const std::vector<SideConstraint>& repair_constraints) {
  if (restarts < 1) throw std::invalid_argument("em_multistart: need a positive budget");
  Rng rng(seed);
  MapSolution best;
  for (int t = 0; t < restarts; ++t) {
    Params init;
    if (t == 0) {
      Assignment a = kmeans_init(data, spec.K, seed);
      init = conditional_params(data, spec, a);
    } else {
      init.mu = Matrix(spec.K, data.d());
      for (int k = 0; k < spec.K; ++k)
        for (int j = 0; j < data.d(); ++j)
          init.mu(k, j) = rng.uniform(spec.mu_lower(k, j), spec.mu_upper(k, j));
      Vector w(spec.K);
      for (int k = 0; k < spec.K; ++k) w(k) = rng.uniform();
      init.pi = floor_simplex(w / w.sum(), spec.pi_floor);
    }
    EmResult r = em(data, spec, init, 500, 1e-9, repair_constraints);
    if (r.rounded.feasible &&
        (!best.feasible || r.rounded.objective < best.objective - 1e-12))
      best = r.rounded;
  }
  return best;
}

MapSolution simulated_annealing(const Dataset& data, const ProblemSpec& spec,
                                const std::vector<SideConstraint>& constraints,
                                SaSchedule schedule, uint64_t seed) {
  const int n = data.n(), K = spec.K;
  Rng rng(seed);

  auto report = validate(constraints, data, K);
  if (!report.ok) {
    std::ostringstream os;
    os << "simulated_annealing: no feasible state;";
    for (const auto& c : report.conflicts) os << " " << c;
    throw std::runtime_error(os.str());
  }
  const auto& cs = report.effective;
  const bool symmetric = component_symmetric(cs, K);
  std::vector<SideConstraint> move_cs;
  for (const auto& c : cs)
    if (!(symmetric && c.kind == ConstraintKind::OrderPi)) move_cs.push_back(c);

  // Initial state: k-means, then repair against the assignment constraints.
  Assignment cur = kmeans_init(data, K, seed);
  {
    auto prop = propagate(FixMatrix(n, K), cs);
    if (prop.infeasible)
      throw std::runtime_error("simulated_annealing: no feasible state; " + prop.reason);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < K; ++k)
        if (prop.fixed.get(i, k) == 1) cur.labels[i] = k;
  }
  for (int pass = 0; pass <= n; ++pass) {
    Params cp = conditional_params(data, spec, cur);
    if (satisfies_all(move_cs, cur, cp)) break;
    bool moved = false;
    for (int i = 0; i < n && !moved; ++i)
      for (int k = 0; k < K && !moved; ++k) {
        if (k == cur.labels[i]) continue;
        Assignment trial = cur;
        trial.labels[i] = k;
        Params tp = conditional_params(data, spec, trial);
        size_t before = 0, after = 0;
        for (const auto& c : move_cs) {
          before += satisfies(c, cur, cp) ? 0 : 1;
          after += satisfies(c, trial, tp) ? 0 : 1;
        }
        if (after < before) {
          cur = trial;
          moved = true;
        }
      }
    if (!moved) {
      Params cp2 = conditional_params(data, spec, cur);
      if (!satisfies_all(move_cs, cur, cp2)) {
        std::ostringstream os;
        os << "simulated_annealing: could not reach a feasible state; blocking:";
        for (const auto& c : move_cs)
          if (!satisfies(c, cur, cp2)) os << " " << c.describe();
        throw std::runtime_error(os.str());
      }
      break;
    }
  }

  double cur_obj = evaluate_objective(data, spec, cur, conditional_params(data, spec, cur));
  MapSolution best = finish_assignment(cur, data, spec, cs);

  // Calibrate T0 from the spread of the first proposed deltas.
  double t = schedule.t0;
  if (t <= 0.0) {
    double spread = 0.0;
    Rng probe(seed ^ 0x9e3779b97f4a7c15ull);
    for (int s = 0; s < 16; ++s) {
      int i = probe.uniform_int(n);
      int k = probe.uniform_int(K);
      if (k == cur.labels[i]) continue;
      Assignment trial = cur;
      trial.labels[i] = k;
      Params tp = conditional_params(data, spec, trial);
      if (!satisfies_all(move_cs, trial, tp)) continue;
      spread = std::max(spread,
                        std::abs(evaluate_objective(data, spec, trial, tp) - cur_obj));
    }
    t = spread > 0.0 ? spread : 1.0;
  }

  for (int step = 0; step < schedule.steps; ++step) {
    int i = rng.uniform_int(n);
    int k = rng.uniform_int(K);
    if (k != cur.labels[i]) {
      Assignment trial = cur;
      trial.labels[i] = k;
      Params tp = conditional_params(data, spec, trial);
      if (satisfies_all(move_cs, trial, tp)) {
        double obj = evaluate_objective(data, spec, trial, tp);
        double delta = obj - cur_obj;
        if (delta <= 0.0 || rng.uniform() < std::exp(-delta / std::max(t, 1e-300))) {
          cur = std::move(trial);
          cur_obj = obj;
          if (cur_obj < best.objective - 1e-12) {
            MapSolution cand = finish_assignment(cur, data, spec, cs);
            if (cand.feasible && cand.objective < best.objective - 1e-12) best = cand;
          }
        }
      }
    }
    t *= schedule.decay;
  }
  return best;
}

}  // namespace mapclust
