#include "mapclust/bnb.hpp"

#include "mapclust/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <queue>
#include <set>
#include <thread>

namespace mapclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Canonicalizes (when the constraint set allows relabeling), recomputes the
/// conditional parameters and verifies every constraint semantically.
std::optional<MapSolution> finalize_assignment(Assignment a, const Dataset& data,
                                               const ProblemSpec& spec,
                                               const std::vector<SideConstraint>& cs) {
  Params p = conditional_params(data, spec, a);
  if (component_symmetric(cs, spec.K)) {
    bool ordered = std::any_of(cs.begin(), cs.end(), [](const SideConstraint& c) {
      return c.kind == ConstraintKind::OrderPi;
    });
    if (ordered) {
      a = sort_components_by_pi(a, p);
      p = conditional_params(data, spec, a);
    }
  }
  if (!satisfies_all(cs, a, p)) return std::nullopt;
  MapSolution s;
  s.assignment = std::move(a);
  s.params = std::move(p);
  s.objective = evaluate_objective(data, spec, s.assignment, s.params);
  s.feasible = true;
  return s;
}

std::vector<const SideConstraint*> violated_assignment_constraints(
    const std::vector<SideConstraint>& cs, const Assignment& a) {
  std::vector<const SideConstraint*> out;
  Params dummy;  // z-structural kinds ignore params
  dummy.pi = Vector::Ones(a.K);
  dummy.mu = Matrix::Zero(a.K, 1);
  for (const auto& c : cs) {
    if (c.kind == ConstraintKind::OrderPi || c.kind == ConstraintKind::EstimatorLink)
      continue;
    if (!satisfies(c, a, dummy)) out.push_back(&c);
  }
  return out;
}

}  // namespace

std::optional<std::pair<int, int>> select_branch_var(const QpSolution& sol,
                                                     Branching strategy,
                                                     const MiqpModel& model,
                                                     const FixMatrix& fixings,
                                                     double integrality_tol) {
  std::optional<std::pair<int, int>> best;
  double best_score = kInf;
  for (int i = 0; i < model.n; ++i)
    for (int k = 0; k < model.K; ++k) {
      if (fixings.is_fixed(i, k)) continue;
      double v = sol.primal(model.z_col(i, k));
      double frac_dist = std::min(std::abs(v), std::abs(1.0 - v));
      if (strategy == Branching::MostInfeasible) {
        double score = std::abs(v - 0.5);
        if (frac_dist <= integrality_tol) continue;
        if (score < best_score - 1e-15) {
          best_score = score;
          best = {i, k};
        }
      } else {
        if (frac_dist <= integrality_tol) continue;  // already decided
        double score = 1.0 - v;  // closest to one wins
        if (score < best_score - 1e-15) {
          best_score = score;
          best = {i, k};
        }
      }
    }
  return best;
}

std::optional<MapSolution> round_and_repair(const QpSolution& sol,
                                            const std::vector<SideConstraint>& constraints,
                                            const MiqpModel& model, const Dataset& data,
                                            const ProblemSpec& spec) {
  const int n = model.n, K = model.K;
  Assignment a;
  a.K = K;
  a.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    double best = -kInf;
    for (int k = 0; k < K; ++k) {
      double v = sol.primal(model.z_col(i, k));
      if (v > best + 1e-12) {
        best = v;
        arg = k;
      }
    }
    a.labels[i] = arg;
  }

  for (int pass = 0; pass <= n; ++pass) {
    auto violated = violated_assignment_constraints(constraints, a);
    if (violated.empty()) return finalize_assignment(std::move(a), data, spec, constraints);

    // Candidate moves: (sample, target component) pairs that could mend a
    // violated constraint.
    std::set<std::pair<int, int>> moves;
    for (const auto* c : violated) {
      switch (c->kind) {
        case ConstraintKind::MustLink:
          for (int k = 0; k < K; ++k) {
            moves.insert({c->i, k});
            moves.insert({c->j, k});
          }
          break;
        case ConstraintKind::CannotLink:
          for (int k = 0; k < K; ++k) {
            moves.insert({c->i, k});
            moves.insert({c->j, k});
          }
          break;
        case ConstraintKind::AssignLabel:
          moves.insert({c->i, c->k});
          break;
        case ConstraintKind::OneWay:
          moves.insert({c->i, c->k});
          for (int k = 0; k < K; ++k) moves.insert({c->j, k});
          break;
        case ConstraintKind::MinSize:
        case ConstraintKind::Cover:
          if (c->kind == ConstraintKind::MinSize) {
            for (int i = 0; i < n; ++i)
              if (a.labels[i] != c->k) moves.insert({i, c->k});
          } else {
            for (int i : c->set)
              if (a.labels[i] != c->k) moves.insert({i, c->k});
          }
          break;
        case ConstraintKind::Pack:
        case ConstraintKind::Partition:
          for (int i : c->set)
            for (int k = 0; k < K; ++k)
              if (k != a.labels[i]) moves.insert({i, k});
          break;
        default:
          break;
      }
    }
    // Reassign the least-committed violating sample: smallest margin between
    // its current relaxed value and its best alternative.
    int best_i = -1, best_k = -1;
    double best_margin = kInf;
    size_t cur_count = violated.size();
    for (const auto& [i, k] : moves) {
      if (a.labels[i] == k) continue;
      double cur = sol.primal(model.z_col(i, a.labels[i]));
      double alt = sol.primal(model.z_col(i, k));
      double margin = cur - alt;
      Assignment trial = a;
      trial.labels[i] = k;
      if (violated_assignment_constraints(constraints, trial).size() >= cur_count)
        continue;
      if (margin < best_margin - 1e-15) {
        best_margin = margin;
        best_i = i;
        best_k = k;
      }
    }
    if (best_i < 0) return std::nullopt;  // no single move helps
    a.labels[best_i] = best_k;
  }
  return std::nullopt;
}

MapSolution local_polish(const MapSolution& start, const Dataset& data,
                         const ProblemSpec& spec,
                         const std::vector<SideConstraint>& constraints) {
  Assignment cur = start.assignment;
  Params params = conditional_params(data, spec, cur);
  const bool symmetric = component_symmetric(constraints, spec.K);
  // Single-sample moves are checked against every constraint except OrderPi
  // when relabeling can restore the ordering afterwards.
  std::vector<SideConstraint> move_cs;
  for (const auto& c : constraints)
    if (!(symmetric && c.kind == ConstraintKind::OrderPi)) move_cs.push_back(c);

  double obj = evaluate_objective(data, spec, cur, params);
  const int n = data.n(), K = spec.K;
  for (int round = 0; round < 1000; ++round) {
    bool moved = false;
    for (int i = 0; i < n; ++i) {
      int cur_k = cur.labels[i];
      double cur_cost = point_component_cost(data, spec, params, i, cur_k);
      int best_k = cur_k;
      double best_cost = cur_cost;
      for (int k = 0; k < K; ++k) {
        if (k == cur_k) continue;
        double cost = point_component_cost(data, spec, params, i, k);
        if (cost < best_cost - 1e-15) {
          Assignment trial = cur;
          trial.labels[i] = k;
          Params tp = conditional_params(data, spec, trial);
          if (!satisfies_all(move_cs, trial, tp)) continue;
          best_cost = cost;
          best_k = k;
        }
      }
      if (best_k != cur_k) {
        cur.labels[i] = best_k;
        moved = true;
      }
    }
    params = conditional_params(data, spec, cur);
    double new_obj = evaluate_objective(data, spec, cur, params);
    if (!moved || new_obj > obj - 1e-12) {
      obj = std::min(obj, new_obj);
      break;
    }
    obj = new_obj;
  }
  auto fin = finalize_assignment(std::move(cur), data, spec, constraints);
  if (fin && fin->objective <= start.objective + 1e-12) return *fin;
  return start;
}

namespace {

struct NodeEntry {
  double key;  // parent relaxation bound
  uint64_t seq;
  int depth;
  FixMatrix fix;
  std::shared_ptr<const Vector> warm;
};

struct NodeCmp {
  bool operator()(const NodeEntry& a, const NodeEntry& b) const {
    if (a.key != b.key) return a.key > b.key;  // min-heap on key
    return a.seq > b.seq;                      // FIFO among equals
  }
};

class Search {
 public:
  Search(const MiqpModel& model, const Dataset& data, const ProblemSpec& spec,
         const std::vector<SideConstraint>& cs, const BnbOptions& opt)
      : model_(model), data_(data), spec_(spec), cs_(cs), opt_(opt),
        t0_(std::chrono::steady_clock::now()) {}

  BnbResult run() {
    result_.e_max = model_.e_max;
    FixMatrix root(model_.n, model_.K);
    auto prop = propagate(root, cs_);
    if (prop.infeasible) {
      finalize(BnbStatus::Infeasible);
      return result_;
    }
    {
      std::lock_guard lk(mu_);
      queue_.push({-kInf, seq_++, 0, prop.fixed, nullptr});
    }
    int workers = opt_.deterministic ? 1 : std::max(1, opt_.workers);
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (int w = 0; w < workers; ++w) pool.emplace_back([this] { worker(); });
      for (auto& th : pool) th.join();
    }
    std::lock_guard lk(mu_);
    if (!stopped_) finalize(BnbStatus::Feasible);
    return result_;
  }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

  double raw_glbd_locked() const {
    double g = kInf;
    if (!queue_.empty()) g = std::min(g, queue_.top().key);
    if (!inflight_.empty()) g = std::min(g, *inflight_.begin());
    return g;
  }

  double report_glbd_locked() const {
    double g = raw_glbd_locked();
    if (has_best_) g = std::min(g, ubd_);
    return std::max(g, emitted_glbd_);
  }

  double gap_locked() const {
    if (!has_best_) return kInf;
    double g = report_glbd_locked();
    if (!std::isfinite(g)) return kInf;
    return (ubd_ - g) / std::max(1.0, std::abs(ubd_));
  }

  void emit_locked(bool force) {
    double now = elapsed();
    double u = has_best_ ? ubd_ : kInf;
    double g = report_glbd_locked();
    bool changed = u < emitted_ubd_ || g > emitted_glbd_;
    if (!force && !changed && now - last_emit_ < 1.0) return;
    emitted_ubd_ = std::min(emitted_ubd_, u);
    emitted_glbd_ = std::max(emitted_glbd_, g);
    last_emit_ = now;
    result_.trace.push_back(
        {now, emitted_ubd_, emitted_glbd_, result_.nodes_explored, queue_.size()});
  }

  void finalize(BnbStatus status) {
    if (result_finalized_) return;
    result_.status = status;
    if (has_best_) {
      result_.incumbent = best_;
      result_.ubd = ubd_;
      result_.glbd = std::min(report_glbd_locked(), ubd_);
      result_.true_glbd = true_bound_correction(result_.glbd, model_.n, model_.e_max);
      result_.gap = (result_.ubd - result_.glbd) / std::max(1.0, std::abs(result_.ubd));
    } else {
      result_.incumbent = MapSolution{};
      result_.ubd = kInf;
      result_.glbd = status == BnbStatus::Infeasible ? kInf : raw_glbd_locked();
      result_.true_glbd = std::isfinite(result_.glbd)
                              ? true_bound_correction(result_.glbd, model_.n, model_.e_max)
                              : result_.glbd;
      result_.gap = kInf;
    }
    emit_locked(true);
    result_.wall_seconds = elapsed();
    stopped_ = true;
    result_finalized_ = true;
    cv_.notify_all();
  }

  void maybe_update_incumbent_locked(const MapSolution& cand) {
    if (!cand.feasible) return;
    if (!has_best_ || cand.objective < ubd_ - 1e-12) {
      best_ = cand;
      ubd_ = cand.objective;
      has_best_ = true;
    }
  }

  void worker() {
    std::unique_lock lk(mu_);
    for (;;) {
      cv_.wait(lk, [&] { return stopped_ || !queue_.empty() || inflight_.empty(); });
      if (stopped_) return;
      if (queue_.empty()) {
        if (inflight_.empty()) {
          finalize(has_best_ ? BnbStatus::OptimalWithinEps : BnbStatus::Infeasible);
          return;
        }
        continue;
      }
      if (elapsed() >= opt_.time_limit || result_.nodes_explored >= opt_.node_limit) {
        finalize(BnbStatus::Feasible);
        return;
      }
      NodeEntry node = queue_.top();
      queue_.pop();
      if (has_best_ && node.key > ubd_ - opt_.fathom_slack) {
        ++result_.nodes_fathomed;
        continue;  // everything behind it in the heap may still be useful
      }
      auto inflight_it = inflight_.insert(node.key);
      lk.unlock();

      ProcessOutcome out = process(node);

      lk.lock();
      inflight_.erase(inflight_it);
      ++result_.nodes_explored;
      result_.nodes_fathomed += (out.fathomed ? 1 : 0) + out.pruned_children;
      if (out.candidate) maybe_update_incumbent_locked(*out.candidate);
      for (auto& child : out.children) {
        child.seq = seq_++;
        queue_.push(std::move(child));
      }
      emit_locked(false);
      if (has_best_ && gap_locked() <= opt_.epsilon) {
        finalize(BnbStatus::OptimalWithinEps);
        return;
      }
      if (queue_.empty() && inflight_.empty()) {
        finalize(has_best_ ? BnbStatus::OptimalWithinEps : BnbStatus::Infeasible);
        return;
      }
      if (elapsed() >= opt_.time_limit || result_.nodes_explored >= opt_.node_limit) {
        finalize(BnbStatus::Feasible);
        return;
      }
      cv_.notify_all();
    }
  }

  struct ProcessOutcome {
    bool fathomed = false;
    int pruned_children = 0;
    std::optional<MapSolution> candidate;
    std::vector<NodeEntry> children;
  };

  ProcessOutcome process(const NodeEntry& node) {
    ProcessOutcome out;
    auto prop = propagate(node.fix, cs_);
    if (prop.infeasible) {
      out.fathomed = true;
      return out;
    }
    QpSolution relax =
        solve_relaxation(model_, prop.fixed, node.warm ? node.warm.get() : nullptr, opt_.qp);
    if (relax.status == QpStatus::Infeasible) {
      out.fathomed = true;
      return out;
    }
    double bound = std::max(node.key, relax.lower_bound);
    {
      std::lock_guard lk(mu_);
      if (has_best_ && bound > ubd_ - opt_.fathom_slack) {
        out.fathomed = true;
        return out;
      }
    }

    bool integral = true;
    for (int i = 0; i < model_.n && integral; ++i)
      for (int k = 0; k < model_.K; ++k) {
        double v = relax.primal(model_.z_col(i, k));
        if (std::min(std::abs(v), std::abs(1.0 - v)) > opt_.integrality_tol) {
          integral = false;
          break;
        }
      }

    if (integral && relax.status == QpStatus::Optimal) {
      Assignment a;
      a.K = model_.K;
      a.labels.resize(model_.n);
      for (int i = 0; i < model_.n; ++i) {
        int arg = 0;
        double best = -kInf;
        for (int k = 0; k < model_.K; ++k) {
          double v = relax.primal(model_.z_col(i, k));
          if (v > best) {
            best = v;
            arg = k;
          }
        }
        a.labels[i] = arg;
      }
      if (auto fin = finalize_assignment(std::move(a), data_, spec_, cs_)) {
        out.candidate = local_polish(*fin, data_, spec_, cs_);
        out.fathomed = true;
        return out;
      }
      out.fathomed = true;  // numerically integral yet semantically off: drop
      return out;
    }

    // Incumbent heuristic on the (possibly inexact) relaxation point; the
    // result is verified semantically and evaluated under the true objective.
    if (auto rounded = round_and_repair(relax, cs_, model_, data_, spec_))
      out.candidate = local_polish(*rounded, data_, spec_, cs_);

    auto branch = select_branch_var(relax, opt_.strategy, model_, prop.fixed,
                                    opt_.integrality_tol);
    if (!branch) {
      // The relaxation stalled on an integral-looking point that could not be
      // accepted. Branch on the first free variable to keep the search exact;
      // a node with every z fixed is a single assignment and closes exactly.
      for (int i = 0; i < model_.n && !branch; ++i)
        for (int k = 0; k < model_.K; ++k)
          if (!prop.fixed.is_fixed(i, k)) {
            branch = {i, k};
            break;
          }
      if (!branch) {
        Assignment a;
        a.K = model_.K;
        a.labels.assign(model_.n, 0);
        for (int i = 0; i < model_.n; ++i)
          for (int k = 0; k < model_.K; ++k)
            if (prop.fixed.get(i, k) == 1) a.labels[i] = k;
        if (auto fin = finalize_assignment(std::move(a), data_, spec_, cs_))
          out.candidate = local_polish(*fin, data_, spec_, cs_);
        out.fathomed = true;
        return out;
      }
    }
    auto [bi, bk] = *branch;
    auto warm = std::make_shared<const Vector>(relax.primal);
    // Children share the parent bound; the z = 1 child goes in first so the
    // FIFO tie-break explores it first.
    for (int8_t val : {int8_t{1}, int8_t{0}}) {
      FixMatrix child = prop.fixed;
      child.set(bi, bk, val);
      auto cprop = propagate(child, cs_);
      if (cprop.infeasible) {
        ++out.pruned_children;
        continue;
      }
      out.children.push_back({bound, 0, node.depth + 1, cprop.fixed, warm});
    }
    return out;
  }

  const MiqpModel& model_;
  const Dataset& data_;
  const ProblemSpec& spec_;
  const std::vector<SideConstraint>& cs_;
  const BnbOptions& opt_;
  std::chrono::steady_clock::time_point t0_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::priority_queue<NodeEntry, std::vector<NodeEntry>, NodeCmp> queue_;
  std::multiset<double> inflight_;
  uint64_t seq_ = 0;

  MapSolution best_;
  bool has_best_ = false;
  double ubd_ = kInf;
  double emitted_ubd_ = kInf;
  double emitted_glbd_ = -kInf;
  double last_emit_ = -1.0;
  bool stopped_ = false;
  bool result_finalized_ = false;
  BnbResult result_;
};

}  // namespace

BnbResult solve(const Dataset& data, const ProblemSpec& spec,
                const std::vector<SideConstraint>& constraints,
                const BnbOptions& options) {
  spec.validate(data.d());
  auto report = validate(constraints, data, spec.K);
  if (!report.ok) {
    BnbResult r;
    r.status = BnbStatus::Infeasible;
    r.ubd = kInf;
    r.glbd = kInf;
    r.true_glbd = kInf;
    r.gap = kInf;
    return r;
  }
  MiqpModel model = build_miqp(data, spec, report.effective);
  Search search(model, data, spec, report.effective, options);
  return search.run();
}

}  // namespace mapclust
