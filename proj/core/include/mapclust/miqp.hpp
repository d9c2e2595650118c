#pragma once

#include "mapclust/constraints.hpp"
#include "mapclust/types.hpp"

#include <Eigen/Sparse>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mapclust {

/// One affine piece u = slope * pi + intercept of the chordal overestimate
/// of -log pi on a grid cell.
struct Chord {
  double slope;
  double intercept;
};

struct PwlResult {
  std::vector<Chord> chords;  // one per grid cell, left to right
  double e_max;               // sup of chord - (-log) over [pi_min, 1]
};

/// Chords of -log over the regular grid pi_min = g_0 < ... < g_B = 1.
/// e_max is evaluated per cell in closed form (the interior maximizer of
/// chord(pi) + log(pi) satisfies pi = -1/slope).
PwlResult pwl_chords(double pi_min, int breakpoints);

/// Transfers a lower bound on the chordal MIQP to the original problem:
/// the piecewise-linear objective overestimates the true objective pointwise
/// by at most n * e_max, so glbd_miqp - n * e_max is valid for the original.
double true_bound_correction(double glbd_miqp, int n, double e_max);

struct SparseRow {
  std::vector<std::pair<int, double>> terms;  // (column, coefficient)
  Sense sense;
  double rhs;
};

/// Convex MIQP over columns [z | mu | t | u | w | pi]:
///   minimize 1/2 x'Qx + c'x + c0
/// where the quadratic part collapses the per-component penalty through
/// t_ik = z_ik mu_k and the entropy term enters via w_ik >= u_k - U(1-z_ik)
/// with u_k the chordal epigraph of -log pi_k. Binary columns are exactly z.
struct MiqpModel {
  int n = 0, K = 0, d = 0;
  double pi_min = 0.0;
  double u_max = 0.0;  // -log(pi_min)
  std::vector<Chord> chords;
  double e_max = 0.0;

  int cols = 0;
  Eigen::SparseMatrix<double> Q;  // cols x cols, symmetric PSD
  Vector c;
  double c0 = 0.0;
  std::vector<SparseRow> rows;
  Vector lo, hi;
  std::vector<char> is_binary;
  std::map<std::string, int> var_index;

  int z_col(int i, int k) const { return i * K + k; }
  int mu_col(int k, int dim) const { return n * K + k * d + dim; }
  int t_col(int i, int k, int dim) const { return n * K + K * d + (i * K + k) * d + dim; }
  int u_col(int k) const { return n * K + K * d + n * K * d + k; }
  int w_col(int i, int k) const { return n * K + K * d + n * K * d + K + i * K + k; }
  int pi_col(int k) const { return n * K + K * d + n * K * d + K + n * K + k; }

  double objective_value(const Vector& x) const;
};

/// Assembles the MIQP from a validated problem: row sums, the pi simplex,
/// the four product rows per (i, k, dim), the chordal epigraph rows per
/// (k, chord), the two binding-side rows per w_ik, and all compiled side
/// constraint rows. Throws on invalid bound configurations.
MiqpModel build_miqp(const Dataset& data, const ProblemSpec& spec,
                     const std::vector<SideConstraint>& constraints);

/// Plain-text exchange dump (see docs/model_format.md for the grammar).
void write_model_dump(const MiqpModel& m, std::ostream& os);

}  // namespace mapclust
