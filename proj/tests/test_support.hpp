#pragma once

#include "mapclust/model.hpp"
#include "mapclust/rng.hpp"
#include "mapclust/types.hpp"

#include <vector>

namespace mapclust::testing {

inline Dataset dataset_1d(std::initializer_list<double> ys) {
  Dataset d;
  d.points = Matrix(ys.size(), 1);
  int i = 0;
  for (double y : ys) d.points(i++, 0) = y;
  return d;
}

inline Assignment labels(std::initializer_list<int> ls, int K) {
  Assignment a;
  a.labels = ls;
  a.K = K;
  return a;
}

/// Random 1-d mixture instance: K well-scattered means in [-4, 4], points
/// drawn with the model's own noise scale.
struct RandomInstance {
  Dataset data;
  ProblemSpec spec;
};

inline RandomInstance random_instance(Rng& rng, int n, int K, double eta,
                                      double pi_floor = 1e-3, int breakpoints = 32) {
  double sigma = std::sqrt(1.0 / (2.0 * eta));
  std::vector<double> means(K);
  for (int k = 0; k < K; ++k) means[k] = rng.uniform(-4.0, 4.0);
  Dataset d;
  d.points = Matrix(n, 1);
  for (int i = 0; i < n; ++i) {
    int k = rng.uniform_int(K);
    d.points(i, 0) = means[k] + sigma * rng.normal();
    d.known_labels[i] = k;
  }
  RandomInstance inst{std::move(d), {}};
  inst.spec = make_scalar_spec(inst.data, K, eta, pi_floor, breakpoints);
  return inst;
}

/// Random params on the feasible domain (means in the box, floored simplex).
inline Params random_params(Rng& rng, const ProblemSpec& spec, int d) {
  Params p;
  p.mu = Matrix(spec.K, d);
  for (int k = 0; k < spec.K; ++k)
    for (int j = 0; j < d; ++j)
      p.mu(k, j) = rng.uniform(spec.mu_lower(k, j), spec.mu_upper(k, j));
  Vector w(spec.K);
  for (int k = 0; k < spec.K; ++k) w(k) = rng.uniform() + 1e-9;
  p.pi = floor_simplex(w / w.sum(), spec.pi_floor);
  return p;
}

}  // namespace mapclust::testing
