#include "mapclust/bnb.hpp"
#include "mapclust/heuristics.hpp"
#include "mapclust/miqp.hpp"
#include "mapclust/model.hpp"
#include "mapclust/qp.hpp"
#include "mapclust/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace mapclust;

Dataset make_data(int n, uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.points = Matrix(n, 1);
  for (int i = 0; i < n; ++i) {
    int k = rng.uniform_int(3);
    d.points(i, 0) = (k - 1) * 3.0 + 0.5 * rng.normal();
  }
  return d;
}

void BM_PwlChords(benchmark::State& state) {
  for (auto _ : state) {
    auto res = pwl_chords(1e-3, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(res.e_max);
  }
}
BENCHMARK(BM_PwlChords)->Arg(8)->Arg(64)->Arg(512);

void BM_BuildMiqp(benchmark::State& state) {
  Dataset d = make_data(static_cast<int>(state.range(0)), 1);
  ProblemSpec spec = make_scalar_spec(d, 3, 2.0, 1e-3, 32);
  for (auto _ : state) {
    MiqpModel m = build_miqp(d, spec, {});
    benchmark::DoNotOptimize(m.cols);
  }
}
BENCHMARK(BM_BuildMiqp)->Arg(16)->Arg(64);

void BM_RootRelaxation(benchmark::State& state) {
  Dataset d = make_data(static_cast<int>(state.range(0)), 2);
  ProblemSpec spec = make_scalar_spec(d, 3, 2.0, 1e-3, 32);
  MiqpModel m = build_miqp(d, spec, {});
  FixMatrix fix(m.n, m.K);
  QpSettings qp;
  for (auto _ : state) {
    QpSolution sol = solve_relaxation(m, fix, nullptr, qp);
    benchmark::DoNotOptimize(sol.objective);
  }
}
BENCHMARK(BM_RootRelaxation)->Arg(10)->Arg(20)->Arg(45)->Unit(benchmark::kMillisecond);

void BM_BnbTiny(benchmark::State& state) {
  Dataset d = make_data(8, 3);
  ProblemSpec spec = make_scalar_spec(d, 2, 2.0, 1e-3, 32);
  BnbOptions opt;
  opt.epsilon = 1e-6;
  for (auto _ : state) {
    BnbResult res = solve(d, spec, {}, opt);
    benchmark::DoNotOptimize(res.ubd);
  }
}
BENCHMARK(BM_BnbTiny)->Unit(benchmark::kMillisecond);

void BM_EmRun(benchmark::State& state) {
  Dataset d = make_data(static_cast<int>(state.range(0)), 4);
  ProblemSpec spec = make_scalar_spec(d, 3, 2.0);
  Assignment a = kmeans_init(d, 3, 0);
  Params init = conditional_params(d, spec, a);
  for (auto _ : state) {
    EmResult r = em(d, spec, init);
    benchmark::DoNotOptimize(r.rounded.objective);
  }
}
BENCHMARK(BM_EmRun)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
