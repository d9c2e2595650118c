#include "mapclust/miqp.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mapclust {

PwlResult pwl_chords(double pi_min, int breakpoints) {
  if (!(pi_min > 0.0 && pi_min < 1.0))
    throw std::invalid_argument("pwl_chords: need 0 < pi_min < 1");
  if (breakpoints < 1) throw std::invalid_argument("pwl_chords: need B >= 1");
  const int B = breakpoints;
  const double delta = (1.0 - pi_min) / B;
  PwlResult res;
  res.chords.reserve(B);
  res.e_max = 0.0;
  for (int j = 0; j < B; ++j) {
    double g0 = pi_min + j * delta;
    double g1 = j + 1 == B ? 1.0 : pi_min + (j + 1) * delta;
    double f0 = -std::log(g0), f1 = -std::log(g1);
    Chord ch{(f1 - f0) / (g1 - g0), 0.0};
    ch.intercept = f0 - ch.slope * g0;
    // chord(pi) + log(pi) is concave on the cell; its stationary point
    // pi* = -1/slope lies inside (g0, g1) by the mean value theorem.
    double ps = -1.0 / ch.slope;
    double err = ch.slope * ps + ch.intercept + std::log(ps);
    res.e_max = std::max(res.e_max, err);
    res.chords.push_back(ch);
  }
  return res;
}

double true_bound_correction(double glbd_miqp, int n, double e_max) {
  return glbd_miqp - n * e_max;
}

double MiqpModel::objective_value(const Vector& x) const {
  return 0.5 * x.dot(Q * x) + c.dot(x) + c0;
}

MiqpModel build_miqp(const Dataset& data, const ProblemSpec& spec,
                     const std::vector<SideConstraint>& constraints) {
  spec.validate(data.d());
  const int n = data.n(), K = spec.K, d = data.d();
  if (((spec.mu_lower - spec.mu_upper).array() > 0).any())
    throw std::invalid_argument("build_miqp: infeasible mean bounds");

  MiqpModel m;
  m.n = n;
  m.K = K;
  m.d = d;
  m.pi_min = spec.pi_floor;
  m.u_max = -std::log(spec.pi_floor);
  auto pwl = pwl_chords(spec.pi_floor, spec.breakpoints);
  m.chords = std::move(pwl.chords);
  m.e_max = pwl.e_max;
  m.cols = n * K + K * d + n * K * d + K + n * K + K;

  m.lo = Vector::Zero(m.cols);
  m.hi = Vector::Zero(m.cols);
  m.c = Vector::Zero(m.cols);
  m.is_binary.assign(m.cols, 0);

  auto name = [&](const std::string& base, std::initializer_list<int> idx, int col) {
    std::string s = base;
    for (int v : idx) s += "_" + std::to_string(v);
    m.var_index.emplace(s, col);
  };

  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      int col = m.z_col(i, k);
      m.lo(col) = 0.0;
      m.hi(col) = 1.0;
      m.is_binary[col] = 1;
      name("z", {i, k}, col);
    }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < d; ++j) {
      int col = m.mu_col(k, j);
      m.lo(col) = spec.mu_lower(k, j);
      m.hi(col) = spec.mu_upper(k, j);
      name("mu", {k, j}, col);
    }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < d; ++j) {
        int col = m.t_col(i, k, j);
        m.lo(col) = std::min(spec.mu_lower(k, j), 0.0);
        m.hi(col) = std::max(spec.mu_upper(k, j), 0.0);
        name("t", {i, k, j}, col);
      }
  for (int k = 0; k < K; ++k) {
    int col = m.u_col(k);
    m.lo(col) = 0.0;
    m.hi(col) = m.u_max;
    name("u", {k}, col);
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      int col = m.w_col(i, k);
      m.lo(col) = 0.0;
      m.hi(col) = m.u_max;
      name("w", {i, k}, col);
    }
  for (int k = 0; k < K; ++k) {
    int col = m.pi_col(k);
    m.lo(col) = spec.pi_floor;
    m.hi(col) = 1.0;
    name("pi", {k}, col);
  }

  // Objective. Quadratic part: 1/2 sum_i (y_i - s_i)' P (y_i - s_i) with
  // s_i = sum_k t_ik and P the quadratic-form precision ([2 eta] for d = 1).
  const Matrix& P = spec.precision;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(n) * K * K * d * d + K * d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            if (P(a, b) != 0.0)
              trips.emplace_back(m.t_col(i, k, a), m.t_col(i, l, b), P(a, b));
    Vector py = P * data.points.row(i).transpose();
    for (int k = 0; k < K; ++k)
      for (int a = 0; a < d; ++a) m.c(m.t_col(i, k, a)) -= py(a);
    m.c0 += 0.5 * data.points.row(i) * py;
  }
  if (spec.prior.kind == PriorKind::GaussianRidge)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < d; ++j)
        if (spec.prior.ridge(j) != 0.0)
          trips.emplace_back(m.mu_col(k, j), m.mu_col(k, j), spec.prior.ridge(j));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) m.c(m.w_col(i, k)) += 1.0;
  m.Q.resize(m.cols, m.cols);
  m.Q.setFromTriplets(trips.begin(), trips.end());

  // Rows. Assignment row sums.
  for (int i = 0; i < n; ++i) {
    SparseRow r{{}, Sense::EQ, 1.0};
    for (int k = 0; k < K; ++k) r.terms.emplace_back(m.z_col(i, k), 1.0);
    m.rows.push_back(std::move(r));
  }
  // pi simplex.
  {
    SparseRow r{{}, Sense::EQ, 1.0};
    for (int k = 0; k < K; ++k) r.terms.emplace_back(m.pi_col(k), 1.0);
    m.rows.push_back(std::move(r));
  }
  // Product rows: M^L z <= t <= M^U z and mu - M^U (1 - z) <= t <= mu - M^L (1 - z).
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < d; ++j) {
        const double ml = spec.mu_lower(k, j), mu = spec.mu_upper(k, j);
        const int zc = m.z_col(i, k), tc = m.t_col(i, k, j), mc = m.mu_col(k, j);
        m.rows.push_back({{{zc, ml}, {tc, -1.0}}, Sense::LE, 0.0});
        m.rows.push_back({{{tc, 1.0}, {zc, -mu}}, Sense::LE, 0.0});
        m.rows.push_back({{{mc, 1.0}, {zc, mu}, {tc, -1.0}}, Sense::LE, mu});
        m.rows.push_back({{{tc, 1.0}, {mc, -1.0}, {zc, -ml}}, Sense::LE, -ml});
      }
  // Chordal epigraph of -log pi_k: u_k >= slope * pi_k + intercept.
  for (int k = 0; k < K; ++k)
    for (const Chord& ch : m.chords)
      m.rows.push_back({{{m.pi_col(k), ch.slope}, {m.u_col(k), -1.0}}, Sense::LE,
                        -ch.intercept});
  // Binding-side product rows for w_ik = z_ik u_k under minimization.
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      m.rows.push_back({{{m.u_col(k), 1.0}, {m.z_col(i, k), m.u_max}, {m.w_col(i, k), -1.0}},
                        Sense::LE, m.u_max});
      m.rows.push_back({{{m.w_col(i, k), -1.0}}, Sense::LE, 0.0});
    }
  // Side constraints.
  for (const auto& c : constraints) {
    for (const auto& sym : to_linear_rows(c, n, K)) {
      SparseRow r{{}, sym.sense, sym.rhs};
      for (const auto& term : sym.terms) {
        int col = term.var.kind == VarRef::Z ? m.z_col(term.var.i, term.var.k)
                                             : m.pi_col(term.var.k);
        r.terms.emplace_back(col, term.coef);
      }
      m.rows.push_back(std::move(r));
    }
  }
  return m;
}

void write_model_dump(const MiqpModel& m, std::ostream& os) {
  os << "miqp " << m.cols << " " << m.rows.size() << "\n";
  os << "pwl " << m.pi_min << " " << m.chords.size() << " " << m.e_max << "\n";
  std::vector<std::string> names(m.cols);
  for (const auto& [nm, col] : m.var_index) names[col] = nm;
  for (int c = 0; c < m.cols; ++c)
    os << "col " << c << " " << names[c] << " " << m.lo(c) << " " << m.hi(c) << " "
       << (m.is_binary[c] ? "bin" : "cont") << "\n";
  os << "c0 " << m.c0 << "\n";
  for (int c = 0; c < m.cols; ++c)
    if (m.c(c) != 0.0) os << "obj " << c << " " << m.c(c) << "\n";
  for (int outer = 0; outer < m.Q.outerSize(); ++outer)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m.Q, outer); it; ++it)
      os << "q " << it.row() << " " << it.col() << " " << it.value() << "\n";
  for (size_t r = 0; r < m.rows.size(); ++r) {
    const auto& row = m.rows[r];
    os << "row " << r << " "
       << (row.sense == Sense::LE ? "le" : row.sense == Sense::EQ ? "eq" : "ge") << " "
       << row.rhs;
    for (const auto& [col, coef] : row.terms) os << " " << col << ":" << coef;
    os << "\n";
  }
}

}  // namespace mapclust
