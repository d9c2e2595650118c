#pragma once

#include "mapclust/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mapclust {

enum class ConstraintKind {
  MustLink,       // samples i, j share a component
  CannotLink,     // samples i, j in different components
  AssignLabel,    // sample i fixed to component k
  OneWay,         // z_jk <= z_ik for one fixed k
  MinSize,        // component k holds at least L samples
  Pack,           // sum_{i in S} z_ik <= L
  Partition,      // sum_{i in S} z_ik  = L
  Cover,          // sum_{i in S} z_ik >= L
  OrderPi,        // pi_1 <= ... <= pi_K
  EstimatorLink,  // pi_k = (1/n) sum_i z_ik for all k
};

/// One logical restriction on assignments or parameters. Indices are 0-based.
struct SideConstraint {
  ConstraintKind kind;
  int i = -1;
  int j = -1;
  int k = -1;
  long count = 0;        // L
  std::vector<int> set;  // S, duplicate-free

  static SideConstraint must_link(int i, int j);
  static SideConstraint cannot_link(int i, int j);
  static SideConstraint assign_label(int i, int k);
  static SideConstraint one_way(int i, int j, int k);
  static SideConstraint min_size(int k, long l);
  static SideConstraint pack(std::vector<int> s, int k, long l);
  static SideConstraint partition(std::vector<int> s, int k, long l);
  static SideConstraint cover(std::vector<int> s, int k, long l);
  static SideConstraint order_pi();
  static SideConstraint estimator_link();

  /// Throws std::invalid_argument if indices are out of range for (n, K).
  void check(int n, int K) const;

  std::string describe() const;
};

enum class Sense { LE, EQ, GE };

/// Symbolic variable reference used by compiled constraint rows; the MIQP
/// builder maps these onto its column layout.
struct VarRef {
  enum Kind { Z, Pi } kind;
  int i = 0;  // sample (Z only)
  int k = 0;  // component
};

struct SymTerm {
  VarRef var;
  double coef;
};

struct SymRow {
  std::vector<SymTerm> terms;
  Sense sense;
  double rhs;
};

/// Compiles one side constraint to its sparse linear rows over (z, pi).
/// Throws std::invalid_argument for out-of-range indices.
std::vector<SymRow> to_linear_rows(const SideConstraint& c, int n, int K);

struct ValidationReport {
  bool ok = true;  // no hard conflict
  std::vector<std::string> conflicts;
  std::vector<std::string> warnings;
  bool order_pi_disabled = false;
  /// Input constraints minus any auto-disabled OrderPi.
  std::vector<SideConstraint> effective;
};

/// Consistency checks across a constraint set: MustLink/CannotLink clashes
/// (after transitive closure of MustLink), contradictory AssignLabel pairs,
/// CannotLink inside a labelled must-link group, Partition with L > |S|, and
/// the OrderPi/AssignLabel interaction (OrderPi is auto-disabled with a
/// warning whenever any label is fixed).
ValidationReport validate(const std::vector<SideConstraint>& cs, const Dataset& data,
                          int K);

/// Semantic evaluation, independent of the compiled rows.
bool satisfies(const SideConstraint& c, const Assignment& a, const Params& p);
bool satisfies_all(const std::vector<SideConstraint>& cs, const Assignment& a,
                   const Params& p);

/// True when the set treats components interchangeably: every constraint is
/// MustLink/CannotLink/OrderPi/EstimatorLink, or MinSize applied to every
/// component with one common minimum. Relabeling components then preserves
/// feasibility (OrderPi aside), so solutions may be put in canonical
/// ascending-pi order.
bool component_symmetric(const std::vector<SideConstraint>& cs, int K);

/// Stable relabeling of components into ascending-pi order; returns the
/// permuted assignment (params should be recomputed afterwards).
Assignment sort_components_by_pi(const Assignment& a, const Params& p);

/// Per-(sample, component) fixing state: -1 free, 0 or 1 fixed.
class FixMatrix {
 public:
  FixMatrix() = default;
  FixMatrix(int n, int K) : n_(n), K_(K), state_(static_cast<size_t>(n) * K, -1) {}

  int n() const { return n_; }
  int K() const { return K_; }
  int8_t get(int i, int k) const { return state_[static_cast<size_t>(i) * K_ + k]; }
  void set(int i, int k, int8_t v) { state_[static_cast<size_t>(i) * K_ + k] = v; }
  bool is_fixed(int i, int k) const { return get(i, k) >= 0; }
  int count_fixed() const;

  bool operator==(const FixMatrix& o) const = default;

 private:
  int n_ = 0, K_ = 0;
  std::vector<int8_t> state_;
};

struct PropagationResult {
  bool infeasible = false;
  std::string reason;  // set when infeasible
  FixMatrix fixed;     // closure of the input fixings
};

/// Closure of the input fixings under the row-sum rules and the
/// MustLink/CannotLink/OneWay/MinSize propagation rules. Infeasibility is a
/// return value, never an exception.
PropagationResult propagate(const FixMatrix& start,
                            const std::vector<SideConstraint>& cs);

}  // namespace mapclust
