#include "mapclust/qp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mapclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Reduced {
  std::vector<int> free_cols;      // model column per reduced column
  std::vector<int> col_map;        // model column -> reduced column or -1
  Vector fixed_values;             // model column space, 0 for free columns
  SpMat P;                         // nf x nf
  Vector q;                        // nf
  double obj_shift = 0.0;          // constant from c0 and eliminated columns
  SpMat A;                         // m x nf (model rows then bound rows)
  Vector l, u;                     // m
  std::vector<char> is_eq;         // l == u
  int n_model_rows = 0;
  bool infeasible = false;
  std::string certificate;
};

Reduced reduce(const MiqpModel& m, const FixMatrix& fix) {
  Reduced r;
  r.col_map.assign(m.cols, -1);
  r.fixed_values = Vector::Zero(m.cols);
  std::vector<char> fixed(m.cols, 0);
  for (int i = 0; i < m.n; ++i)
    for (int k = 0; k < m.K; ++k) {
      int8_t v = fix.get(i, k);
      if (v >= 0) {
        int col = m.z_col(i, k);
        fixed[col] = 1;
        r.fixed_values(col) = v;
      }
    }
  for (int c = 0; c < m.cols; ++c) {
    if (!fixed[c]) {
      r.col_map[c] = static_cast<int>(r.free_cols.size());
      r.free_cols.push_back(c);
    }
  }
  const int nf = static_cast<int>(r.free_cols.size());

  // Objective restricted to free columns. Binary columns never carry
  // objective terms in this model, but handle the general case anyway.
  std::vector<Triplet> ptrips;
  Vector q = Vector::Zero(nf);
  double shift = m.c0;
  for (int c = 0; c < m.cols; ++c)
    if (fixed[c]) shift += m.c(c) * r.fixed_values(c);
  for (int outer = 0; outer < m.Q.outerSize(); ++outer)
    for (SpMat::InnerIterator it(m.Q, outer); it; ++it) {
      int a = static_cast<int>(it.row()), b = static_cast<int>(it.col());
      if (!fixed[a] && !fixed[b]) {
        ptrips.emplace_back(r.col_map[a], r.col_map[b], it.value());
      } else if (fixed[a] && !fixed[b]) {
        q(r.col_map[b]) += 0.5 * it.value() * r.fixed_values(a);
      } else if (!fixed[a] && fixed[b]) {
        q(r.col_map[a]) += 0.5 * it.value() * r.fixed_values(b);
      } else {
        shift += 0.5 * it.value() * r.fixed_values(a) * r.fixed_values(b);
      }
    }
  for (int c = 0; c < m.cols; ++c)
    if (!fixed[c]) q(r.col_map[c]) += m.c(c);
  r.P.resize(nf, nf);
  r.P.setFromTriplets(ptrips.begin(), ptrips.end());
  r.q = std::move(q);
  r.obj_shift = shift;

  // Rows with fixed contributions folded into the right-hand side.
  std::vector<Triplet> atrips;
  std::vector<double> lo, up;
  std::vector<char> eq;
  int row_idx = 0;
  for (size_t ri = 0; ri < m.rows.size(); ++ri) {
    const auto& row = m.rows[ri];
    double shift_rhs = 0.0;
    int nterms = 0;
    for (const auto& [col, coef] : row.terms) {
      if (fixed[col]) shift_rhs += coef * r.fixed_values(col);
      else ++nterms;
    }
    double rhs = row.rhs - shift_rhs;
    if (nterms == 0) {
      bool ok = row.sense == Sense::LE ? 0.0 <= rhs + 1e-9
                : row.sense == Sense::GE ? 0.0 >= rhs - 1e-9
                                         : std::abs(rhs) <= 1e-9;
      if (!ok) {
        r.infeasible = true;
        r.certificate = "row " + std::to_string(ri) + " inconsistent under fixings";
        return r;
      }
      continue;
    }
    for (const auto& [col, coef] : row.terms)
      if (!fixed[col]) atrips.emplace_back(row_idx, r.col_map[col], coef);
    lo.push_back(row.sense == Sense::GE || row.sense == Sense::EQ ? rhs : -kInf);
    up.push_back(row.sense == Sense::LE || row.sense == Sense::EQ ? rhs : kInf);
    eq.push_back(row.sense == Sense::EQ);
    ++row_idx;
  }
  r.n_model_rows = row_idx;
  for (int f = 0; f < nf; ++f) {
    int c = r.free_cols[f];
    atrips.emplace_back(row_idx, f, 1.0);
    lo.push_back(m.lo(c));
    up.push_back(m.hi(c));
    eq.push_back(m.lo(c) == m.hi(c));
    ++row_idx;
  }
  r.A.resize(row_idx, nf);
  r.A.setFromTriplets(atrips.begin(), atrips.end());
  r.l = Eigen::Map<Vector>(lo.data(), row_idx);
  r.u = Eigen::Map<Vector>(up.data(), row_idx);
  r.is_eq.assign(eq.begin(), eq.end());
  return r;
}

// Modified Ruiz equilibration of [P A'; A 0] plus cost scaling.
struct Scaling {
  Vector D;       // column scaling
  Vector E;       // row scaling
  double c = 1.0; // cost scaling
};

Scaling ruiz(SpMat& P, Vector& q, SpMat& A, Vector& l, Vector& u) {
  const int nf = static_cast<int>(P.rows());
  const int mr = static_cast<int>(A.rows());
  Scaling s;
  s.D = Vector::Ones(nf);
  s.E = Vector::Ones(mr);
  for (int iter = 0; iter < 10; ++iter) {
    Vector dcol = Vector::Zero(nf), erow = Vector::Zero(mr);
    for (int o = 0; o < P.outerSize(); ++o)
      for (SpMat::InnerIterator it(P, o); it; ++it) {
        double a = std::abs(it.value());
        dcol(it.col()) = std::max(dcol(it.col()), a);
      }
    for (int o = 0; o < A.outerSize(); ++o)
      for (SpMat::InnerIterator it(A, o); it; ++it) {
        double a = std::abs(it.value());
        dcol(it.col()) = std::max(dcol(it.col()), a);
        erow(it.row()) = std::max(erow(it.row()), a);
      }
    for (int i = 0; i < nf; ++i)
      dcol(i) = dcol(i) > 1e-12 ? 1.0 / std::sqrt(dcol(i)) : 1.0;
    for (int i = 0; i < mr; ++i)
      erow(i) = erow(i) > 1e-12 ? 1.0 / std::sqrt(erow(i)) : 1.0;
    P = dcol.asDiagonal() * P * dcol.asDiagonal();
    A = erow.asDiagonal() * A * dcol.asDiagonal();
    q = q.cwiseProduct(dcol);
    for (int i = 0; i < mr; ++i) {
      if (std::isfinite(l(i))) l(i) *= erow(i);
      if (std::isfinite(u(i))) u(i) *= erow(i);
    }
    s.D = s.D.cwiseProduct(dcol);
    s.E = s.E.cwiseProduct(erow);
  }
  // Cost scaling keeps the gradient O(1).
  double pnorm = 0.0;
  for (int o = 0; o < P.outerSize(); ++o)
    for (SpMat::InnerIterator it(P, o); it; ++it)
      pnorm = std::max(pnorm, std::abs(it.value()));
  double gnorm = std::max(pnorm, q.cwiseAbs().maxCoeff());
  s.c = gnorm > 1e-12 ? 1.0 / gnorm : 1.0;
  P *= s.c;
  q *= s.c;
  return s;
}

struct Kkt {
  SpMat M;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool analyzed = false;
  bool ok = false;

  void assemble(const SpMat& P, const SpMat& A, double sigma, const Vector& rho_inv) {
    const int nf = static_cast<int>(P.rows()), mr = static_cast<int>(A.rows());
    std::vector<Triplet> trips;
    trips.reserve(P.nonZeros() + 2 * A.nonZeros() + nf + mr);
    for (int o = 0; o < P.outerSize(); ++o)
      for (SpMat::InnerIterator it(P, o); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < nf; ++i) trips.emplace_back(i, i, sigma);
    for (int o = 0; o < A.outerSize(); ++o)
      for (SpMat::InnerIterator it(A, o); it; ++it) {
        trips.emplace_back(nf + it.row(), it.col(), it.value());
        trips.emplace_back(it.col(), nf + it.row(), it.value());
      }
    for (int i = 0; i < mr; ++i) trips.emplace_back(nf + i, nf + i, -rho_inv(i));
    M.resize(nf + mr, nf + mr);
    M.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(M);
      analyzed = true;
    }
    ldlt.factorize(M);
    ok = ldlt.info() == Eigen::Success;
  }

  Vector solve(const Vector& rhs) const {
    Vector sol = ldlt.solve(rhs);
    // One iterative-refinement pass.
    Vector resid = rhs - M * sol;
    sol += ldlt.solve(resid);
    return sol;
  }
};

}  // namespace

QpSolution solve_relaxation(const MiqpModel& model, const FixMatrix& fixings,
                            const Vector* warm_primal, const QpSettings& st) {
  QpSolution out;
  Reduced red = reduce(model, fixings);
  if (red.infeasible) {
    out.status = QpStatus::Infeasible;
    out.certificate = red.certificate;
    out.objective = kInf;
    out.lower_bound = kInf;
    out.primal = red.fixed_values;
    return out;
  }
  const int nf = static_cast<int>(red.free_cols.size());
  const int mr = static_cast<int>(red.A.rows());

  // Unscaled copies for residual/objective evaluation.
  const SpMat P0 = red.P;
  const Vector q0 = red.q;
  const SpMat A0 = red.A;
  const Vector l0 = red.l, u0 = red.u;

  Scaling sc = ruiz(red.P, red.q, red.A, red.l, red.u);

  Vector rho(mr), rho_inv(mr);
  auto set_rho = [&](double base) {
    for (int i = 0; i < mr; ++i) {
      double r = red.is_eq[i] ? 1e3 * base : base;
      rho(i) = r;
      rho_inv(i) = 1.0 / r;
    }
  };
  double rho_base = st.rho;
  set_rho(rho_base);

  Kkt kkt;
  kkt.assemble(red.P, red.A, st.sigma, rho_inv);
  if (!kkt.ok) {
    out.status = QpStatus::IterLimit;
    out.certificate = "KKT factorization failed";
    out.primal = red.fixed_values;
    return out;
  }

  // Scaled iterates.
  Vector x = Vector::Zero(nf);
  if (warm_primal && warm_primal->size() == model.cols) {
    for (int f = 0; f < nf; ++f) x(f) = (*warm_primal)(red.free_cols[f]) / sc.D(f);
  }
  Vector s = (red.A * x).cwiseMax(red.l).cwiseMin(red.u);
  Vector y = Vector::Zero(mr);
  Vector y_prev_check = y;

  auto unscale_x = [&](const Vector& xs) { return Vector(sc.D.cwiseProduct(xs)); };
  auto unscale_y = [&](const Vector& ys) {
    return Vector(sc.E.cwiseProduct(ys) / sc.c);
  };

  double rp = kInf, rd = kInf;
  Vector x_u = unscale_x(x), y_u = unscale_y(y);

  auto residuals = [&](const Vector& xu, const Vector& yu, double& rpo, double& rdo) {
    Vector ax = A0 * xu;
    Vector viol = (ax - u0).cwiseMax(0.0) + (l0 - ax).cwiseMax(0.0);
    rpo = viol.size() ? viol.maxCoeff() : 0.0;
    Vector dual = P0 * xu + q0 + A0.transpose() * yu;
    rdo = dual.size() ? dual.cwiseAbs().maxCoeff() : 0.0;
  };

  auto finish = [&](const Vector& xu, const Vector& yu, double rpo, double rdo,
                    QpStatus status, int iters) {
    out.status = status;
    out.iterations = iters;
    out.primal = red.fixed_values;
    for (int f = 0; f < nf; ++f) out.primal(red.free_cols[f]) = xu(f);
    out.objective = 0.5 * xu.dot(P0 * xu) + q0.dot(xu) + red.obj_shift;
    out.primal_residual = rpo;
    out.dual_residual = rdo;
    if (status == QpStatus::Optimal) {
      double ynorm = yu.size() ? yu.cwiseAbs().maxCoeff() : 0.0;
      double xnorm = xu.size() ? xu.cwiseAbs().maxCoeff() : 0.0;
      double margin = st.margin_scale *
                      (rpo * std::max(1.0, ynorm) + rdo * std::max(1.0, xnorm));
      out.lower_bound = out.objective - margin;
    }
    return out;
  };

  // Active-set polish: equality-solve on the rows the duals mark as tight,
  // refined against the unregularized KKT system.
  auto try_polish = [&](const Vector& xu, const Vector& yu, Vector& px, Vector& py,
                        double& rpo, double& rdo) {
    std::vector<int> act;
    Vector ax = A0 * xu;
    for (int i = 0; i < mr; ++i) {
      bool low = std::isfinite(l0(i)) &&
                 (yu(i) < -1e-10 || ax(i) - l0(i) < 1e-8 * std::max(1.0, std::abs(l0(i))));
      bool up = std::isfinite(u0(i)) &&
                (yu(i) > 1e-10 || u0(i) - ax(i) < 1e-8 * std::max(1.0, std::abs(u0(i))));
      if (red.is_eq[i] || low || up)
        act.push_back(low && !red.is_eq[i] && !up ? -(i + 1) : (i + 1));
    }
    const int na = static_cast<int>(act.size());
    std::vector<Triplet> trips;
    for (int o = 0; o < P0.outerSize(); ++o)
      for (SpMat::InnerIterator it(P0, o); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    const double delta = 1e-9;
    for (int i = 0; i < nf; ++i) trips.emplace_back(i, i, delta);
    Vector rhs(nf + na);
    rhs.head(nf) = -q0;
    // A0 is column-major; gather active rows via a row-major copy.
    Eigen::SparseMatrix<double, Eigen::RowMajor> Ar(A0);
    for (int a = 0; a < na; ++a) {
      int row = std::abs(act[a]) - 1;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, row); it;
           ++it) {
        trips.emplace_back(nf + a, it.col(), it.value());
        trips.emplace_back(it.col(), nf + a, it.value());
      }
      trips.emplace_back(nf + a, nf + a, -delta);
      rhs(nf + a) = act[a] < 0 ? l0(row) : (red.is_eq[row] ? l0(row) : u0(row));
    }
    SpMat Kp(nf + na, nf + na);
    Kp.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ld;
    ld.compute(Kp);
    if (ld.info() != Eigen::Success) return false;
    Vector sol = ld.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      Vector resid = rhs - Kp * sol;
      sol += ld.solve(resid);
    }
    px = sol.head(nf);
    py = Vector::Zero(mr);
    for (int a = 0; a < na; ++a) py(std::abs(act[a]) - 1) = sol(nf + a);
    double prp, prd;
    residuals(px, py, prp, prd);
    if (prp <= std::max(rpo, st.eps_abs) && prd <= std::max(rdo, st.eps_abs) &&
        std::max(prp, prd) < std::max(rpo, rdo)) {
      rpo = prp;
      rdo = prd;
      return true;
    }
    return false;
  };

  int iter = 0;
  for (; iter < st.max_iter; ++iter) {
    // KKT step.
    Vector rhs(nf + mr);
    rhs.head(nf) = st.sigma * x - red.q;
    rhs.tail(mr) = s - rho_inv.cwiseProduct(y);
    Vector sol = kkt.solve(rhs);
    Vector x_t = sol.head(nf);
    Vector nu = sol.tail(mr);
    Vector s_t = s + rho_inv.cwiseProduct(nu - y);

    Vector x_next = st.alpha * x_t + (1.0 - st.alpha) * x;
    Vector mix = st.alpha * s_t + (1.0 - st.alpha) * s;
    Vector s_next = (mix + rho_inv.cwiseProduct(y)).cwiseMax(red.l).cwiseMin(red.u);
    y += rho.cwiseProduct(mix - s_next);
    x = std::move(x_next);
    s = std::move(s_next);

    if ((iter + 1) % st.check_interval != 0) continue;

    x_u = unscale_x(x);
    y_u = unscale_y(y);
    residuals(x_u, y_u, rp, rd);
    if (rp <= st.eps_abs && rd <= st.eps_abs) {
      if (st.polish) {
        Vector px, py;
        double rpo = rp, rdo = rd;
        if (try_polish(x_u, y_u, px, py, rpo, rdo))
          return finish(px, py, rpo, rdo, QpStatus::Optimal, iter + 1);
      }
      return finish(x_u, y_u, rp, rd, QpStatus::Optimal, iter + 1);
    }
    // Early polish: the ADMM iterate is close, an exact active-set solve
    // may already satisfy the tolerance.
    if (st.polish && rp <= 3e3 * st.eps_abs && rd <= 3e3 * st.eps_abs &&
        (iter + 1) % (st.check_interval * 8) == 0) {
      Vector px, py;
      double rpo = rp, rdo = rd;
      if (try_polish(x_u, y_u, px, py, rpo, rdo) && rpo <= st.eps_abs &&
          rdo <= st.eps_abs)
        return finish(px, py, rpo, rdo, QpStatus::Optimal, iter + 1);
    }

    // Primal infeasibility certificate from the dual trajectory.
    Vector dy = y - y_prev_check;
    double dynorm = dy.size() ? dy.cwiseAbs().maxCoeff() : 0.0;
    if (dynorm > 1e-14) {
      Vector dy_u = sc.E.cwiseProduct(dy) / sc.c;
      double dnorm = dy_u.cwiseAbs().maxCoeff();
      double atd = (A0.transpose() * dy_u).cwiseAbs().maxCoeff();
      double support = 0.0;
      bool unbounded_dir = false;
      for (int i = 0; i < mr; ++i) {
        double v = dy_u(i);
        if (v > 0) {
          if (!std::isfinite(u0(i))) { unbounded_dir = v > st.eps_infeas * dnorm; if (unbounded_dir) break; }
          else support += u0(i) * v;
        } else if (v < 0) {
          if (!std::isfinite(l0(i))) { unbounded_dir = -v > st.eps_infeas * dnorm; if (unbounded_dir) break; }
          else support += l0(i) * v;
        }
      }
      if (!unbounded_dir && atd <= st.eps_infeas * dnorm &&
          support < -st.eps_infeas * dnorm) {
        out = finish(x_u, y_u, rp, rd, QpStatus::Infeasible, iter + 1);
        out.certificate = "divergent dual trajectory certifies primal infeasibility";
        out.objective = kInf;
        out.lower_bound = kInf;
        return out;
      }
    }
    y_prev_check = y;

    // Residual-balancing step-size adaptation (iteration-indexed, so runs
    // stay deterministic).
    if (st.adaptive_rho && (iter + 1) % (st.check_interval * 4) == 0) {
      Vector ax = A0 * x_u;
      double pscale = std::max({ax.cwiseAbs().maxCoeff(), 1e-12});
      double dscale = std::max({(P0 * x_u).cwiseAbs().maxCoeff(),
                                (A0.transpose() * y_u).cwiseAbs().maxCoeff(),
                                q0.cwiseAbs().maxCoeff(), 1e-12});
      double ratio = std::sqrt((rp / pscale) / std::max(rd / dscale, 1e-16));
      ratio = std::clamp(ratio, 1e-3, 1e3);
      double rho_new = std::clamp(rho_base * ratio, 1e-6, 1e6);
      if (rho_new > 5.0 * rho_base || rho_new < rho_base / 5.0) {
        double rho_old = rho_base;
        rho_base = rho_new;
        set_rho(rho_base);
        kkt.assemble(red.P, red.A, st.sigma, rho_inv);
        if (!kkt.ok) {
          rho_base = rho_old;
          set_rho(rho_base);
          kkt.assemble(red.P, red.A, st.sigma, rho_inv);
        }
      }
    }
  }

  x_u = unscale_x(x);
  y_u = unscale_y(y);
  residuals(x_u, y_u, rp, rd);
  if (st.polish) {
    Vector px, py;
    double rpo = rp, rdo = rd;
    if (try_polish(x_u, y_u, px, py, rpo, rdo) && rpo <= st.eps_abs && rdo <= st.eps_abs)
      return finish(px, py, rpo, rdo, QpStatus::Optimal, iter);
  }
  return finish(x_u, y_u, rp, rd, QpStatus::IterLimit, iter);
}

}  // namespace mapclust
