// Command-line front end: global MAP clustering via branch-and-bound plus the
// EM / simulated-annealing baselines and the exhaustive oracle.

#include "mapclust/bnb.hpp"
#include "mapclust/heuristics.hpp"
#include "mapclust/io.hpp"
#include "mapclust/model.hpp"
#include "mapclust/oracle.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace mapclust;

struct CommonOpts {
  std::string data_path;
  int K = 2;
  double sigma = 0.0;
  std::string precision_file;
  std::string precision_mode;  // "avg-labels"
  std::string constraints_path;
  int breakpoints = 32;
  double pi_min = 1e-3;
  uint64_t seed = 0;
  std::string out_path = "result.json";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_model = true) {
  cmd->add_option("--data", o.data_path, "input CSV")->required();
  cmd->add_option("--out", o.out_path, "result JSON path");
  if (!need_model) return;
  cmd->add_option("--k", o.K, "component count")->required();
  auto* sig = cmd->add_option("--sigma", o.sigma, "shared std dev (d=1; eta = 1/(2 sigma^2))");
  auto* pfile = cmd->add_option("--precision-file", o.precision_file,
                                "file with the d x d precision matrix");
  auto* pmode = cmd->add_option("--precision", o.precision_mode,
                                "precision source: avg-labels");
  sig->excludes(pfile)->excludes(pmode);
  pfile->excludes(pmode);
  cmd->add_option("--constraints", o.constraints_path, "constraint JSON file");
  cmd->add_option("--breakpoints", o.breakpoints, "piecewise-linear pieces for -log pi");
  cmd->add_option("--pi-min", o.pi_min, "mixing-weight floor");
  cmd->add_option("--seed", o.seed, "random seed");
}

Matrix load_precision_file(const std::string& path, int d) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) {
    std::replace(tok.begin(), tok.end(), ',', ' ');
    std::istringstream ts(tok);
    double v;
    while (ts >> v) vals.push_back(v);
  }
  if (static_cast<int>(vals.size()) != d * d)
    throw ParseError(path + ": expected " + std::to_string(d * d) + " entries");
  Matrix P(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) P(i, j) = vals[i * d + j];
  return P;
}

struct Instance {
  Dataset data;
  ProblemSpec spec;
  std::vector<SideConstraint> constraints;
  std::map<std::string, std::string> config;
};

Instance load_instance(const CommonOpts& o) {
  Instance inst;
  inst.data = load_csv(o.data_path);
  const int d = inst.data.d();
  if (o.sigma > 0.0) {
    if (d != 1) throw std::invalid_argument("--sigma requires 1-d data");
    inst.spec = make_scalar_spec(inst.data, o.K, 1.0 / (2.0 * o.sigma * o.sigma),
                                 o.pi_min, o.breakpoints);
  } else if (!o.precision_file.empty()) {
    inst.spec = make_matrix_spec(inst.data, o.K, load_precision_file(o.precision_file, d),
                                 o.pi_min, o.breakpoints);
  } else if (o.precision_mode == "avg-labels") {
    inst.spec = make_matrix_spec(inst.data, o.K, average_label_precision(inst.data),
                                 o.pi_min, o.breakpoints);
  } else {
    throw std::invalid_argument(
        "one of --sigma, --precision-file or --precision avg-labels is required");
  }
  if (!o.constraints_path.empty())
    inst.constraints = load_constraints_json(o.constraints_path, inst.data.n(), o.K);

  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  inst.config["data"] = o.data_path;
  inst.config["k"] = std::to_string(o.K);
  if (o.sigma > 0.0) inst.config["sigma"] = fmt(o.sigma);
  if (!o.precision_file.empty()) inst.config["precision_file"] = o.precision_file;
  if (!o.precision_mode.empty()) inst.config["precision"] = o.precision_mode;
  if (!o.constraints_path.empty()) inst.config["constraints"] = o.constraints_path;
  inst.config["breakpoints"] = std::to_string(o.breakpoints);
  inst.config["pi_min"] = fmt(o.pi_min);
  inst.config["seed"] = std::to_string(o.seed);
  return inst;
}

ResultFile result_from_solution(const Instance& inst, const MapSolution& s,
                                const std::string& status, double wall, uint64_t seed) {
  ResultFile r;
  r.status = status;
  r.objective_ubd = s.feasible ? s.objective : std::numeric_limits<double>::infinity();
  if (s.feasible) {
    r.assignment = s.assignment.labels;
    r.mu = s.params.mu;
    r.pi = s.params.pi;
  }
  r.wall_seconds = wall;
  r.seed = seed;
  r.objective_offset = normalization_offset(inst.data, inst.spec);
  r.config = inst.config;
  return r;
}

int exit_code_for(const std::string& status, bool has_incumbent) {
  if (status == "infeasible") return 2;
  if (status == "feasible" && !has_incumbent) return 3;
  return 0;
}

int cmd_solve(const CommonOpts& o, const BnbOptions& opts_in, const std::string& trace_path) {
  Instance inst = load_instance(o);
  BnbOptions opts = opts_in;
  opts.seed = o.seed;
  BnbResult res = solve(inst.data, inst.spec, inst.constraints, opts);

  std::string status = res.status == BnbStatus::OptimalWithinEps ? "optimal_within_eps"
                       : res.status == BnbStatus::Infeasible ? "infeasible"
                                                             : "feasible";
  ResultFile r = result_from_solution(inst, res.incumbent, status, res.wall_seconds, o.seed);
  r.glbd = std::isfinite(res.glbd) ? std::optional(res.glbd) : std::nullopt;
  r.true_glbd = std::isfinite(res.true_glbd) ? std::optional(res.true_glbd) : std::nullopt;
  r.gap = std::isfinite(res.gap) ? std::optional(res.gap) : std::nullopt;
  r.e_max = res.e_max;
  r.nodes = static_cast<long long>(res.nodes_explored);
  r.config["epsilon"] = std::to_string(opts.epsilon);
  r.config["strategy"] =
      opts.strategy == Branching::MostInfeasible ? "most-infeasible" : "most-integral";
  r.config["workers"] = std::to_string(opts.deterministic ? 1 : opts.workers);
  r.config["deterministic"] = opts.deterministic ? "true" : "false";
  write_result_json(r, o.out_path);
  if (!trace_path.empty()) write_trace_csv(res.trace, trace_path);

  std::cout << "status " << status << "  ubd "
            << (res.incumbent.feasible ? std::to_string(res.ubd) : "none") << "  glbd "
            << res.glbd << "  gap " << res.gap << "  nodes " << res.nodes_explored
            << "\n";
  return exit_code_for(status, res.incumbent.feasible);
}

int run_heuristic(const CommonOpts& o, const std::function<MapSolution(const Instance&)>& fn) {
  Instance inst = load_instance(o);
  auto t0 = std::chrono::steady_clock::now();
  MapSolution s = fn(inst);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string status = s.feasible ? "feasible" : "infeasible";
  ResultFile r = result_from_solution(inst, s, status, wall, o.seed);
  write_result_json(r, o.out_path);
  std::cout << "status " << status;
  if (s.feasible) std::cout << "  objective " << s.objective;
  std::cout << "\n";
  return exit_code_for(status, s.feasible);
}

int cmd_oracle(const CommonOpts& o) {
  Instance inst = load_instance(o);
  auto t0 = std::chrono::steady_clock::now();
  MapSolution s = brute_force(inst.data, inst.spec, inst.constraints);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string status = s.feasible ? "optimal" : "infeasible";
  ResultFile r = result_from_solution(inst, s, status, wall, o.seed);
  if (s.feasible) {
    r.glbd = s.objective;
    r.true_glbd = s.objective;
    r.gap = 0.0;
  }
  write_result_json(r, o.out_path);
  std::cout << "status " << status;
  if (s.feasible) std::cout << "  objective " << s.objective;
  std::cout << "\n";
  return s.feasible ? 0 : 2;
}

int cmd_metrics(const std::string& est_path, const std::string& truth_path,
                const std::string& out_path) {
  ResultFile est = read_result_json(est_path);
  ResultFile truth = read_result_json(truth_path);
  auto to_solution = [](const ResultFile& f) {
    MapSolution s;
    s.assignment.labels = f.assignment;
    s.assignment.K = static_cast<int>(f.mu.rows());
    s.params.mu = f.mu;
    s.params.pi = f.pi;
    s.objective = f.objective_ubd;
    s.feasible = true;
    return s;
  };
  ProblemSpec spec;
  spec.K = static_cast<int>(est.mu.rows());
  SolutionMetrics m = solution_metrics(to_solution(est), to_solution(truth), spec);
  std::cout << "pi_sup " << m.pi_sup << "  mu_l2 " << m.mu_l2 << "  z_mismatch "
            << m.z_mismatch << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out.precision(17);
    out << "{\n  \"pi_sup\": " << m.pi_sup << ",\n  \"mu_l2\": " << m.mu_l2
        << ",\n  \"z_mismatch\": " << m.z_mismatch << "\n}\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global MAP clustering under a shared-precision Gaussian mixture"};
  app.require_subcommand(1);
  app.set_config("--config");

  CommonOpts solve_o, em_o, emm_o, sa_o, oracle_o, prep_o;

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "branch-and-bound with optimality gap");
  add_common(solve_cmd, solve_o);
  BnbOptions bnb;
  std::string strategy = "most-infeasible", trace_path;
  double time_limit = 0.0;
  long long node_limit = 0;
  solve_cmd->add_option("--epsilon", bnb.epsilon, "relative gap target");
  solve_cmd->add_option("--time-limit", time_limit, "seconds (0 = none)");
  solve_cmd->add_option("--node-limit", node_limit, "max explored nodes (0 = none)");
  solve_cmd->add_option("--strategy", strategy, "most-infeasible | most-integral")
      ->check(CLI::IsMember({"most-infeasible", "most-integral"}));
  solve_cmd->add_option("--workers", bnb.workers, "concurrent node workers");
  solve_cmd->add_flag("--deterministic", bnb.deterministic, "single worker, reproducible");
  solve_cmd->add_option("--trace", trace_path, "bound trace CSV path");

  // heuristics
  auto* em_cmd = app.add_subcommand("em", "single EM run from a k-means start");
  add_common(em_cmd, em_o);
  int em_iters = 500;
  double em_tol = 1e-9;
  em_cmd->add_option("--max-iter", em_iters, "EM iteration cap");
  em_cmd->add_option("--tol", em_tol, "log-likelihood gain tolerance");

  auto* emm_cmd = app.add_subcommand("em-multi", "multi-restart EM");
  add_common(emm_cmd, emm_o);
  int restarts = 64;
  emm_cmd->add_option("--restarts", restarts, "restart count");

  auto* sa_cmd = app.add_subcommand("sa", "simulated annealing over assignments");
  add_common(sa_cmd, sa_o);
  SaSchedule sched;
  sa_cmd->add_option("--t0", sched.t0, "initial temperature (0 = calibrate)");
  sa_cmd->add_option("--decay", sched.decay, "geometric cooling factor");
  sa_cmd->add_option("--steps", sched.steps, "move budget");

  auto* oracle_cmd = app.add_subcommand("oracle", "exhaustive optimum (tiny instances)");
  add_common(oracle_cmd, oracle_o);

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "compare result files");
  std::string est_path, truth_path, metrics_out;
  metrics_cmd->add_option("--est", est_path, "estimated result JSON")->required();
  metrics_cmd->add_option("--truth", truth_path, "truth result JSON")->required();
  metrics_cmd->add_option("--out", metrics_out, "metrics JSON path");

  // prep
  auto* prep_cmd = app.add_subcommand("prep", "1-d principal-component projection");
  add_common(prep_cmd, prep_o, false);
  int per_class = 0;
  double scale = 2.0;
  prep_cmd->add_option("--per-class", per_class, "keep first N samples per label (0 = all)");
  prep_cmd->add_option("--scale", scale, "score scale factor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) {
      if (time_limit > 0.0) bnb.time_limit = time_limit;
      if (node_limit > 0) bnb.node_limit = static_cast<size_t>(node_limit);
      bnb.strategy = strategy == "most-integral" ? Branching::MostIntegral
                                                 : Branching::MostInfeasible;
      return cmd_solve(solve_o, bnb, trace_path);
    }
    if (em_cmd->parsed())
      return run_heuristic(em_o, [&](const Instance& inst) {
        Assignment a = kmeans_init(inst.data, inst.spec.K, em_o.seed);
        Params init = conditional_params(inst.data, inst.spec, a);
        return em(inst.data, inst.spec, init, em_iters, em_tol, inst.constraints).rounded;
      });
    if (emm_cmd->parsed())
      return run_heuristic(emm_o, [&](const Instance& inst) {
        return em_multistart(inst.data, inst.spec, restarts, emm_o.seed, inst.constraints);
      });
    if (sa_cmd->parsed())
      return run_heuristic(sa_o, [&](const Instance& inst) {
        return simulated_annealing(inst.data, inst.spec, inst.constraints, sched, sa_o.seed);
      });
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_o);
    if (metrics_cmd->parsed()) return cmd_metrics(est_path, truth_path, metrics_out);
    if (prep_cmd->parsed()) {
      Dataset iris = load_csv(prep_o.data_path);
      Dataset out = prep_iris1d(iris, per_class, scale);
      save_dataset_csv(out, prep_o.out_path);
      std::cout << "wrote " << prep_o.out_path << "  n=" << out.n() << " d=" << out.d()
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
