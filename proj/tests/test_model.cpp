#include "mapclust/model.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace mapclust;
using namespace mapclust::testing;

TEST_CASE("objective vanishes on a centered singleton") {
  Dataset d = dataset_1d({0.0});
  ProblemSpec spec = make_scalar_spec(d, 1, 0.5);
  spec.mu_lower(0, 0) = -1.0;
  spec.mu_upper(0, 0) = 1.0;
  Params p{Matrix::Zero(1, 1), Vector::Ones(1)};
  CHECK(evaluate_objective(d, spec, labels({0}, 1), p) == doctest::Approx(0.0));
}

TEST_CASE("objective on a perfectly matched pair is 2 ln 2") {
  Dataset d = dataset_1d({0.0, 1.0});
  for (double eta : {0.5, 1.0, 3.0}) {
    ProblemSpec spec = make_scalar_spec(d, 2, eta);
    Params p;
    p.mu = Matrix(2, 1);
    p.mu << 0.0, 1.0;
    p.pi = Vector(2);
    p.pi << 0.5, 0.5;
    CHECK(evaluate_objective(d, spec, labels({0, 1}, 2), p) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("objective contract errors") {
  Dataset d = dataset_1d({0.0, 1.0});
  ProblemSpec spec = make_scalar_spec(d, 2, 0.5);
  Params p;
  p.mu = Matrix(2, 1);
  p.mu << 0.0, 1.0;
  p.pi = Vector(2);
  p.pi << 0.5, 0.5;
  SUBCASE("dimension mismatch") {
    Params bad = p;
    bad.mu = Matrix::Zero(3, 1);
    CHECK_THROWS_AS(evaluate_objective(d, spec, labels({0, 1}, 2), bad),
                    std::invalid_argument);
  }
  SUBCASE("nonpositive pi") {
    Params bad = p;
    bad.pi(0) = 0.0;
    CHECK_THROWS_AS(evaluate_objective(d, spec, labels({0, 1}, 2), bad),
                    std::domain_error);
  }
}

TEST_CASE("conditional params: means, counts and clamping") {
  SUBCASE("single component mean") {
    Dataset d = dataset_1d({0.0, 2.0});
    ProblemSpec spec = make_scalar_spec(d, 1, 0.5);
    Params p = conditional_params(d, spec, labels({0, 0}, 1));
    CHECK(p.mu(0, 0) == doctest::Approx(1.0));
    CHECK(p.pi(0) == doctest::Approx(1.0));
  }
  SUBCASE("split with counts") {
    Dataset d = dataset_1d({-1.0, -1.0, 3.0});
    ProblemSpec spec = make_scalar_spec(d, 2, 0.5);
    Params p = conditional_params(d, spec, labels({0, 0, 1}, 2));
    CHECK(p.mu(0, 0) == doctest::Approx(-1.0));
    CHECK(p.mu(1, 0) == doctest::Approx(3.0));
    CHECK(p.pi(0) == doctest::Approx(2.0 / 3.0));
    CHECK(p.pi(1) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("upper bound clamps the mean") {
    Dataset d = dataset_1d({-1.0, -1.0, 3.0});
    ProblemSpec spec = make_scalar_spec(d, 2, 0.5);
    spec.mu_upper(1, 0) = 2.0;
    Params p = conditional_params(d, spec, labels({0, 0, 1}, 2));
    CHECK(p.mu(1, 0) == doctest::Approx(2.0));
  }
}

TEST_CASE("conditional params minimize over the feasible domain") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 8, 2, 1.0, 1e-6);
    Assignment a;
    a.K = 2;
    a.labels.resize(8);
    for (int i = 0; i < 8; ++i) a.labels[i] = rng.uniform_int(2);
    Params star = conditional_params(inst.data, inst.spec, a);
    double best = evaluate_objective(inst.data, inst.spec, a, star);
    for (int s = 0; s < 200; ++s) {
      Params p = random_params(rng, inst.spec, 1);
      CHECK(best <= evaluate_objective(inst.data, inst.spec, a, p) + 1e-9);
    }
  }
}

TEST_CASE("objective is linear in relaxed memberships") {
  Rng rng(7);
  auto inst = random_instance(rng, 6, 3, 2.0);
  Params p = random_params(rng, inst.spec, 1);
  Assignment a1, a2;
  a1.K = a2.K = 3;
  for (int i = 0; i < 6; ++i) {
    a1.labels.push_back(rng.uniform_int(3));
    a2.labels.push_back(rng.uniform_int(3));
  }
  auto resp = [&](const Assignment& a) {
    Matrix r = Matrix::Zero(6, 3);
    for (int i = 0; i < 6; ++i) r(i, a.labels[i]) = 1.0;
    return r;
  };
  double f1 = evaluate_objective(inst.data, inst.spec, a1, p);
  double f2 = evaluate_objective(inst.data, inst.spec, a2, p);
  for (double lam : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    Matrix mix = lam * resp(a1) + (1.0 - lam) * resp(a2);
    CHECK(evaluate_objective_soft(inst.data, inst.spec, mix, p) ==
          doctest::Approx(lam * f1 + (1.0 - lam) * f2).epsilon(1e-12));
  }
}

TEST_CASE("whitening reduces the quadratic form to Euclidean distance") {
  SUBCASE("identity precision is a no-op") {
    Dataset d;
    d.points = Matrix(2, 3);
    d.points << 1, 2, 3, 4, 5, 6;
    ProblemSpec spec = make_matrix_spec(d, 2, Matrix::Identity(3, 3));
    auto w = whiten(d, spec);
    CHECK(w.data.points.isApprox(d.points));
    CHECK(w.transform.isIdentity(1e-12));
    CHECK(w.diagonal);
  }
  SUBCASE("diagonal scaling") {
    Dataset d;
    d.points = Matrix(2, 1);
    d.points << 1.0, -2.0;
    ProblemSpec spec = make_matrix_spec(d, 1, Matrix::Constant(1, 1, 4.0));
    auto w = whiten(d, spec);
    CHECK(w.data.points(0, 0) == doctest::Approx(2.0));
    CHECK(w.data.points(1, 0) == doctest::Approx(-4.0));
    CHECK(w.mu_lower(0, 0) == doctest::Approx(-4.0));
  }
  SUBCASE("random PSD matrix reproduces the quadratic form") {
    Rng rng(11);
    Matrix B(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) B(i, j) = rng.normal();
    Matrix P = B * B.transpose() + 0.1 * Matrix::Identity(3, 3);
    Dataset d;
    d.points = Matrix(4, 3);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) d.points(i, j) = rng.normal();
    ProblemSpec spec = make_matrix_spec(d, 2, P);
    auto w = whiten(d, spec);
    for (int trial = 0; trial < 100; ++trial) {
      Vector y(3), mu(3);
      for (int j = 0; j < 3; ++j) {
        y(j) = rng.uniform(-3, 3);
        mu(j) = rng.uniform(-3, 3);
      }
      double direct = 0.5 * (y - mu).dot(P * (y - mu));
      double white = 0.5 * (w.transform * y - w.transform * mu).squaredNorm();
      CHECK(direct == doctest::Approx(white).epsilon(1e-10));
    }
  }
  SUBCASE("indefinite matrix names the offending minor") {
    Dataset d;
    d.points = Matrix(2, 2);
    d.points << 0, 0, 1, 1;
    Matrix P(2, 2);
    P << 1.0, 2.0, 2.0, 1.0;  // second leading minor is negative
    CHECK_THROWS_AS(make_matrix_spec(d, 1, P), NotPsdError);
    try {
      cholesky_factor(P);
    } catch (const NotPsdError& e) {
      CHECK(e.leading_minor == 2);
    }
  }
}

TEST_CASE("whitened objective equals direct evaluation") {
  Rng rng(13);
  Matrix B(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) B(i, j) = rng.normal();
  Matrix P = B * B.transpose() + 0.2 * Matrix::Identity(2, 2);
  Dataset d;
  d.points = Matrix(6, 2);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) d.points(i, j) = rng.uniform(-2, 2);
  ProblemSpec spec = make_matrix_spec(d, 2, P);
  auto w = whiten(d, spec);
  ProblemSpec wspec = make_matrix_spec(w.data, 2, Matrix::Identity(2, 2));
  Assignment a = labels({0, 1, 0, 1, 0, 1}, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Params p = random_params(rng, spec, 2);
    Params wp = p;
    wp.mu = p.mu * w.transform.transpose();  // rows mu_k -> (L^T mu_k)^T
    double direct = evaluate_objective(d, spec, a, p);
    double white = evaluate_objective(w.data, wspec, a, wp);
    CHECK(direct == doctest::Approx(white).epsilon(1e-9));
  }
}

TEST_CASE("solution metrics") {
  ProblemSpec spec;
  spec.K = 2;
  auto sol = [](std::initializer_list<int> ls, std::initializer_list<double> mus,
                std::initializer_list<double> pis) {
    MapSolution s;
    s.assignment.labels = ls;
    s.assignment.K = 2;
    s.params.mu = Matrix(2, 1);
    int k = 0;
    for (double m : mus) s.params.mu(k++, 0) = m;
    s.params.pi = Vector(2);
    k = 0;
    for (double p : pis) s.params.pi(k++) = p;
    s.feasible = true;
    return s;
  };
  SUBCASE("identical solutions have zero metrics") {
    auto s = sol({0, 1, 0}, {-1.0, 1.0}, {0.5, 0.5});
    auto m = solution_metrics(s, s, spec);
    CHECK(m.pi_sup == 0.0);
    CHECK(m.mu_l2 == 0.0);
    CHECK(m.z_mismatch == 0.0);
  }
  SUBCASE("pi sup distance") {
    auto est = sol({0, 1}, {-1.0, 1.0}, {0.5, 0.5});
    auto truth = sol({0, 1}, {-1.0, 1.0}, {0.4, 0.6});
    CHECK(solution_metrics(est, truth, spec).pi_sup == doctest::Approx(0.1));
  }
  SUBCASE("component permutation is aligned away") {
    auto est = sol({1, 0, 1}, {2.0, -2.0}, {0.6, 0.4});
    auto truth = sol({0, 1, 0}, {-2.0, 2.0}, {0.4, 0.6});
    auto m = solution_metrics(est, truth, spec);
    CHECK(m.pi_sup == doctest::Approx(0.0));
    CHECK(m.mu_l2 == doctest::Approx(0.0));
    CHECK(m.z_mismatch == doctest::Approx(0.0));
  }
  SUBCASE("K mismatch is a contract violation") {
    auto est = sol({0, 1}, {-1.0, 1.0}, {0.5, 0.5});
    MapSolution truth3 = est;
    truth3.params.mu = Matrix::Zero(3, 1);
    truth3.assignment.K = 3;
    CHECK_THROWS_AS(solution_metrics(est, truth3, spec), std::invalid_argument);
  }
}

TEST_CASE("normalization offset matches the dropped Gaussian constants") {
  Dataset d = dataset_1d({0.0, 1.0, 2.0});
  double sigma = 0.4;
  ProblemSpec spec = make_scalar_spec(d, 2, 1.0 / (2.0 * sigma * sigma));
  double expect = 3.0 * (0.5 * std::log(2.0 * M_PI) + std::log(sigma));
  CHECK(normalization_offset(d, spec) == doctest::Approx(expect).epsilon(1e-12));
}
