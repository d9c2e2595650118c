#include "mapclust/oracle.hpp"

#include "mapclust/model.hpp"

#include <algorithm>
#include <cmath>

namespace mapclust {

MapSolution brute_force(const Dataset& data, const ProblemSpec& spec,
                        const std::vector<SideConstraint>& constraints) {
  const int n = data.n(), K = spec.K;
  double count = std::pow(static_cast<double>(K), n);
  if (count > static_cast<double>(1 << 20))
    throw std::invalid_argument("brute_force: K^n exceeds the 2^20 guard");

  auto report = validate(constraints, data, K);
  const auto& cs = report.ok ? report.effective : constraints;
  if (!report.ok) {
    MapSolution s;
    s.feasible = false;
    return s;
  }

  // With an active ordering constraint and an otherwise component-symmetric
  // set, enumerate one representative per relabeling orbit (canonical
  // first-appearance order) and sort components by pi afterwards.
  bool order_pi = std::any_of(cs.begin(), cs.end(), [](const SideConstraint& c) {
    return c.kind == ConstraintKind::OrderPi;
  });
  const bool skip_orbits = order_pi && component_symmetric(cs, K);

  Assignment a;
  a.K = K;
  a.labels.assign(n, 0);
  MapSolution best;
  best.feasible = false;

  auto consider = [&](const Assignment& cand) {
    Params p = conditional_params(data, spec, cand);
    const Assignment* eval = &cand;
    Assignment sorted;
    if (skip_orbits) {
      sorted = sort_components_by_pi(cand, p);
      p = conditional_params(data, spec, sorted);
      eval = &sorted;
    }
    if (!satisfies_all(cs, *eval, p)) return;
    double obj = evaluate_objective(data, spec, *eval, p);
    if (!best.feasible || obj < best.objective - 1e-12) {
      best.assignment = *eval;
      best.params = std::move(p);
      best.objective = obj;
      best.feasible = true;
    }
  };

  // Odometer enumeration in lexicographic order (sample 0 most significant),
  // so the first optimum seen is the lexicographically smallest.
  for (;;) {
    bool canonical = true;
    if (skip_orbits) {
      // First-appearance order must be 0, 1, 2, ...
      int next = 0;
      for (int i = 0; i < n; ++i) {
        if (a.labels[i] > next) {
          canonical = false;
          break;
        }
        if (a.labels[i] == next) ++next;
      }
    }
    if (canonical) consider(a);
    int pos = n - 1;
    while (pos >= 0 && a.labels[pos] == K - 1) {
      a.labels[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++a.labels[pos];
  }
  return best;
}

}  // namespace mapclust
