#include "mapclust/constraints.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace mapclust {

namespace {

std::vector<int> checked_set(std::vector<int> s) {
  if (s.empty()) throw std::invalid_argument("constraint: set must be nonempty");
  std::vector<int> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("constraint: set must be duplicate-free");
  return s;
}

}  // namespace

SideConstraint SideConstraint::must_link(int i, int j) {
  if (i == j) throw std::invalid_argument("must_link: need two distinct samples");
  return {ConstraintKind::MustLink, i, j};
}
SideConstraint SideConstraint::cannot_link(int i, int j) {
  if (i == j) throw std::invalid_argument("cannot_link: need two distinct samples");
  return {ConstraintKind::CannotLink, i, j};
}
SideConstraint SideConstraint::assign_label(int i, int k) {
  return {ConstraintKind::AssignLabel, i, -1, k};
}
SideConstraint SideConstraint::one_way(int i, int j, int k) {
  if (i == j) throw std::invalid_argument("one_way: need two distinct samples");
  return {ConstraintKind::OneWay, i, j, k};
}
SideConstraint SideConstraint::min_size(int k, long l) {
  if (l < 0) throw std::invalid_argument("min_size: L must be >= 0");
  return {ConstraintKind::MinSize, -1, -1, k, l};
}
SideConstraint SideConstraint::pack(std::vector<int> s, int k, long l) {
  if (l < 0) throw std::invalid_argument("pack: L must be >= 0");
  return {ConstraintKind::Pack, -1, -1, k, l, checked_set(std::move(s))};
}
SideConstraint SideConstraint::partition(std::vector<int> s, int k, long l) {
  if (l < 0) throw std::invalid_argument("partition: L must be >= 0");
  return {ConstraintKind::Partition, -1, -1, k, l, checked_set(std::move(s))};
}
SideConstraint SideConstraint::cover(std::vector<int> s, int k, long l) {
  if (l < 0) throw std::invalid_argument("cover: L must be >= 0");
  return {ConstraintKind::Cover, -1, -1, k, l, checked_set(std::move(s))};
}
SideConstraint SideConstraint::order_pi() { return {ConstraintKind::OrderPi}; }
SideConstraint SideConstraint::estimator_link() { return {ConstraintKind::EstimatorLink}; }

void SideConstraint::check(int n, int K) const {
  auto sample_ok = [n](int idx) { return idx >= 0 && idx < n; };
  auto comp_ok = [K](int idx) { return idx >= 0 && idx < K; };
  switch (kind) {
    case ConstraintKind::MustLink:
    case ConstraintKind::CannotLink:
      if (!sample_ok(i) || !sample_ok(j))
        throw std::invalid_argument(describe() + ": sample index out of range");
      break;
    case ConstraintKind::AssignLabel:
      if (!sample_ok(i) || !comp_ok(k))
        throw std::invalid_argument(describe() + ": index out of range");
      break;
    case ConstraintKind::OneWay:
      if (!sample_ok(i) || !sample_ok(j) || !comp_ok(k))
        throw std::invalid_argument(describe() + ": index out of range");
      break;
    case ConstraintKind::MinSize:
      if (!comp_ok(k)) throw std::invalid_argument(describe() + ": component out of range");
      break;
    case ConstraintKind::Pack:
    case ConstraintKind::Partition:
    case ConstraintKind::Cover:
      if (!comp_ok(k)) throw std::invalid_argument(describe() + ": component out of range");
      for (int s : set)
        if (!sample_ok(s)) throw std::invalid_argument(describe() + ": set index out of range");
      break;
    case ConstraintKind::OrderPi:
    case ConstraintKind::EstimatorLink:
      break;
  }
}

std::string SideConstraint::describe() const {
  std::ostringstream os;
  switch (kind) {
    case ConstraintKind::MustLink: os << "must_link(" << i << "," << j << ")"; break;
    case ConstraintKind::CannotLink: os << "cannot_link(" << i << "," << j << ")"; break;
    case ConstraintKind::AssignLabel: os << "assign(" << i << "->" << k << ")"; break;
    case ConstraintKind::OneWay: os << "one_way(" << i << "," << j << ";k=" << k << ")"; break;
    case ConstraintKind::MinSize: os << "min_size(k=" << k << ",L=" << count << ")"; break;
    case ConstraintKind::Pack: os << "pack(|S|=" << set.size() << ",k=" << k << ",L=" << count << ")"; break;
    case ConstraintKind::Partition: os << "partition(|S|=" << set.size() << ",k=" << k << ",L=" << count << ")"; break;
    case ConstraintKind::Cover: os << "cover(|S|=" << set.size() << ",k=" << k << ",L=" << count << ")"; break;
    case ConstraintKind::OrderPi: os << "order_pi"; break;
    case ConstraintKind::EstimatorLink: os << "estimator_link"; break;
  }
  return os.str();
}

std::vector<SymRow> to_linear_rows(const SideConstraint& c, int n, int K) {
  c.check(n, K);
  std::vector<SymRow> rows;
  auto z = [](int i, int k) { return VarRef{VarRef::Z, i, k}; };
  auto pi = [](int k) { return VarRef{VarRef::Pi, 0, k}; };
  switch (c.kind) {
    case ConstraintKind::MustLink:
      for (int k = 0; k < K; ++k)
        rows.push_back({{{z(c.i, k), 1.0}, {z(c.j, k), -1.0}}, Sense::EQ, 0.0});
      break;
    case ConstraintKind::CannotLink:
      for (int k = 0; k < K; ++k)
        rows.push_back({{{z(c.i, k), 1.0}, {z(c.j, k), 1.0}}, Sense::LE, 1.0});
      break;
    case ConstraintKind::AssignLabel:
      rows.push_back({{{z(c.i, c.k), 1.0}}, Sense::EQ, 1.0});
      break;
    case ConstraintKind::OneWay:
      rows.push_back({{{z(c.j, c.k), 1.0}, {z(c.i, c.k), -1.0}}, Sense::LE, 0.0});
      break;
    case ConstraintKind::MinSize: {
      SymRow r{{}, Sense::GE, static_cast<double>(c.count)};
      for (int i = 0; i < n; ++i) r.terms.push_back({z(i, c.k), 1.0});
      rows.push_back(std::move(r));
      break;
    }
    case ConstraintKind::Pack:
    case ConstraintKind::Partition:
    case ConstraintKind::Cover: {
      Sense s = c.kind == ConstraintKind::Pack ? Sense::LE
                : c.kind == ConstraintKind::Partition ? Sense::EQ
                                                      : Sense::GE;
      SymRow r{{}, s, static_cast<double>(c.count)};
      for (int i : c.set) r.terms.push_back({z(i, c.k), 1.0});
      rows.push_back(std::move(r));
      break;
    }
    case ConstraintKind::OrderPi:
      for (int k = 0; k + 1 < K; ++k)
        rows.push_back({{{pi(k), 1.0}, {pi(k + 1), -1.0}}, Sense::LE, 0.0});
      break;
    case ConstraintKind::EstimatorLink:
      for (int k = 0; k < K; ++k) {
        SymRow r{{{pi(k), static_cast<double>(n)}}, Sense::EQ, 0.0};
        for (int i = 0; i < n; ++i) r.terms.push_back({z(i, k), -1.0});
        rows.push_back(std::move(r));
      }
      break;
  }
  return rows;
}

namespace {

// Union-find over samples for the transitive closure of MustLink.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

ValidationReport validate(const std::vector<SideConstraint>& cs, const Dataset& data,
                          int K) {
  const int n = data.n();
  ValidationReport rep;
  for (const auto& c : cs) c.check(n, K);

  UnionFind uf(n);
  for (const auto& c : cs)
    if (c.kind == ConstraintKind::MustLink) uf.unite(c.i, c.j);

  bool any_label = false;
  std::vector<int> pinned(n, -1);
  for (const auto& c : cs) {
    if (c.kind != ConstraintKind::AssignLabel) continue;
    any_label = true;
    int root = uf.find(c.i);
    if (pinned[root] >= 0 && pinned[root] != c.k) {
      rep.conflicts.push_back("contradictory labels for sample group of " +
                              std::to_string(c.i));
    }
    pinned[root] = c.k;
  }

  for (const auto& c : cs) {
    switch (c.kind) {
      case ConstraintKind::CannotLink:
        if (uf.find(c.i) == uf.find(c.j))
          rep.conflicts.push_back("cannot_link(" + std::to_string(c.i) + "," +
                                  std::to_string(c.j) + ") inside a must-link group");
        break;
      case ConstraintKind::Partition:
        if (c.count > static_cast<long>(c.set.size()))
          rep.conflicts.push_back(c.describe() + ": L exceeds |S|");
        break;
      case ConstraintKind::Cover:
        if (c.count > static_cast<long>(c.set.size()))
          rep.conflicts.push_back(c.describe() + ": L exceeds |S|");
        break;
      case ConstraintKind::MinSize:
        if (c.count > n) rep.conflicts.push_back(c.describe() + ": L exceeds n");
        break;
      default:
        break;
    }
  }

  bool has_order_pi =
      std::any_of(cs.begin(), cs.end(),
                  [](const SideConstraint& c) { return c.kind == ConstraintKind::OrderPi; });
  rep.order_pi_disabled = has_order_pi && any_label;
  if (rep.order_pi_disabled)
    rep.warnings.push_back(
        "order_pi disabled: fixed labels pin component identities, which the "
        "pi-ordering constraint would contradict");

  for (const auto& c : cs) {
    if (rep.order_pi_disabled && c.kind == ConstraintKind::OrderPi) continue;
    rep.effective.push_back(c);
  }
  rep.ok = rep.conflicts.empty();
  return rep;
}

bool satisfies(const SideConstraint& c, const Assignment& a, const Params& p) {
  const int n = a.n();
  switch (c.kind) {
    case ConstraintKind::MustLink:
      return a.labels[c.i] == a.labels[c.j];
    case ConstraintKind::CannotLink:
      return a.labels[c.i] != a.labels[c.j];
    case ConstraintKind::AssignLabel:
      return a.labels[c.i] == c.k;
    case ConstraintKind::OneWay:
      return !(a.labels[c.j] == c.k && a.labels[c.i] != c.k);
    case ConstraintKind::MinSize: {
      long cnt = std::count(a.labels.begin(), a.labels.end(), c.k);
      return cnt >= c.count;
    }
    case ConstraintKind::Pack:
    case ConstraintKind::Partition:
    case ConstraintKind::Cover: {
      long cnt = 0;
      for (int i : c.set) cnt += a.labels[i] == c.k ? 1 : 0;
      if (c.kind == ConstraintKind::Pack) return cnt <= c.count;
      if (c.kind == ConstraintKind::Partition) return cnt == c.count;
      return cnt >= c.count;
    }
    case ConstraintKind::OrderPi:
      for (int k = 0; k + 1 < a.K; ++k)
        if (p.pi(k) > p.pi(k + 1) + 1e-12) return false;
      return true;
    case ConstraintKind::EstimatorLink:
      for (int k = 0; k < a.K; ++k) {
        long cnt = std::count(a.labels.begin(), a.labels.end(), k);
        if (std::abs(p.pi(k) - static_cast<double>(cnt) / n) > 1e-9) return false;
      }
      return true;
  }
  return true;
}

bool satisfies_all(const std::vector<SideConstraint>& cs, const Assignment& a,
                   const Params& p) {
  return std::all_of(cs.begin(), cs.end(),
                     [&](const SideConstraint& c) { return satisfies(c, a, p); });
}

bool component_symmetric(const std::vector<SideConstraint>& cs, int K) {
  std::vector<long> min_size(K, -1);
  for (const auto& c : cs) {
    switch (c.kind) {
      case ConstraintKind::MustLink:
      case ConstraintKind::CannotLink:
      case ConstraintKind::OrderPi:
      case ConstraintKind::EstimatorLink:
        break;
      case ConstraintKind::MinSize:
        if (min_size[c.k] >= 0 && min_size[c.k] != c.count) return false;
        min_size[c.k] = c.count;
        break;
      default:
        return false;
    }
  }
  bool any = std::any_of(min_size.begin(), min_size.end(), [](long v) { return v >= 0; });
  if (any) {
    long l = min_size[0];
    for (int k = 0; k < K; ++k)
      if (min_size[k] != l) return false;
  }
  return true;
}

Assignment sort_components_by_pi(const Assignment& a, const Params& p) {
  const int K = a.K;
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return p.pi(x) < p.pi(y); });
  std::vector<int> new_of_old(K);
  for (int pos = 0; pos < K; ++pos) new_of_old[order[pos]] = pos;
  Assignment out = a;
  for (int i = 0; i < a.n(); ++i) out.labels[i] = new_of_old[a.labels[i]];
  return out;
}

int FixMatrix::count_fixed() const {
  int c = 0;
  for (int8_t v : state_) c += v >= 0 ? 1 : 0;
  return c;
}

PropagationResult propagate(const FixMatrix& start,
                            const std::vector<SideConstraint>& cs) {
  PropagationResult res;
  res.fixed = start;
  FixMatrix& f = res.fixed;
  const int n = f.n(), K = f.K();

  auto fail = [&](std::string why) {
    res.infeasible = true;
    res.reason = std::move(why);
  };

  // fix() returns false on contradiction.
  auto fix = [&](int i, int k, int8_t v, bool& changed) {
    int8_t cur = f.get(i, k);
    if (cur == v) return true;
    if (cur >= 0) {
      fail("z(" + std::to_string(i) + "," + std::to_string(k) + ") fixed both ways");
      return false;
    }
    f.set(i, k, v);
    changed = true;
    return true;
  };

  bool changed = true;
  while (changed && !res.infeasible) {
    changed = false;
    // Row-sum structure.
    for (int i = 0; i < n && !res.infeasible; ++i) {
      int ones = 0, zeros = 0, free_k = -1;
      for (int k = 0; k < K; ++k) {
        int8_t v = f.get(i, k);
        if (v == 1) ++ones;
        else if (v == 0) ++zeros;
        else free_k = k;
      }
      if (ones > 1) { fail("sample " + std::to_string(i) + " fixed to two components"); break; }
      if (ones == 1) {
        for (int k = 0; k < K; ++k)
          if (f.get(i, k) < 0 && !fix(i, k, 0, changed)) break;
      } else if (zeros == K) {
        fail("sample " + std::to_string(i) + " excluded from every component");
      } else if (zeros == K - 1 && free_k >= 0) {
        if (!fix(i, free_k, 1, changed)) break;
      }
    }
    // Constraint rules.
    for (const auto& c : cs) {
      if (res.infeasible) break;
      switch (c.kind) {
        case ConstraintKind::MustLink:
          for (int k = 0; k < K; ++k) {
            int8_t vi = f.get(c.i, k), vj = f.get(c.j, k);
            if (vi >= 0 && vj < 0) { if (!fix(c.j, k, vi, changed)) break; }
            else if (vj >= 0 && vi < 0) { if (!fix(c.i, k, vj, changed)) break; }
            else if (vi >= 0 && vj >= 0 && vi != vj) {
              fail(c.describe() + " violated by fixings");
              break;
            }
          }
          break;
        case ConstraintKind::CannotLink:
          for (int k = 0; k < K; ++k) {
            if (f.get(c.i, k) == 1 && !fix(c.j, k, 0, changed)) break;
            if (f.get(c.j, k) == 1 && !fix(c.i, k, 0, changed)) break;
          }
          break;
        case ConstraintKind::OneWay:
          if (f.get(c.i, c.k) == 0 && f.get(c.j, c.k) != 0) {
            if (!fix(c.j, c.k, 0, changed)) break;
          }
          break;
        case ConstraintKind::AssignLabel:
          if (f.get(c.i, c.k) != 1 && !fix(c.i, c.k, 1, changed)) break;
          break;
        case ConstraintKind::MinSize: {
          int assignable = 0;
          for (int i = 0; i < n; ++i)
            if (f.get(i, c.k) != 0) ++assignable;
          if (assignable < c.count) fail(c.describe() + ": too few assignable samples");
          break;
        }
        default:
          break;  // Pack/Partition/Cover/OrderPi/EstimatorLink left to the relaxation.
      }
    }
  }
  return res;
}

}  // namespace mapclust
