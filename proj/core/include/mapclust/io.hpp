#pragma once

#include "mapclust/bnb.hpp"
#include "mapclust/constraints.hpp"
#include "mapclust/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mapclust {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// CSV with a header row: numeric feature columns in order, plus optional
/// "id" and "label" columns (labels are 1-based in files). Blank numeric
/// cells load as 0 and are counted in Dataset::missing_filled.
Dataset load_csv(const std::string& path);

/// Writes features (x0, x1, ... or "x" when d = 1) plus id/label columns.
void save_dataset_csv(const Dataset& data, const std::string& path);

/// Centers the 4-feature table, projects onto the first principal component
/// (sign fixed so the largest-magnitude loading is positive), scales the
/// scores, and optionally keeps the first `per_class` samples of each label
/// in file order. Labels and ids are carried through.
Dataset prep_iris1d(const Dataset& iris, int per_class = 0, double scale = 2.0);

/// Average of the within-label precision matrices (inverse sample
/// covariances of each labelled group).
Matrix average_label_precision(const Dataset& data);

/// Constraint file: a JSON list of records with 1-based indices, e.g.
/// {"type":"must_link","i":1,"j":2} or {"type":"pack","set":[1,2],"k":1,"l":1}.
std::vector<SideConstraint> load_constraints_json(const std::string& path, int n, int K);
void save_constraints_json(const std::vector<SideConstraint>& cs, const std::string& path);

/// Solver result file contents (assignment is 1-based on disk).
struct ResultFile {
  std::string status;
  double objective_ubd = 0.0;
  std::optional<double> glbd, true_glbd, gap, e_max;
  std::vector<int> assignment;  // 0-based in memory
  Matrix mu;
  Vector pi;
  long long nodes = 0;
  double wall_seconds = 0.0;
  uint64_t seed = 0;
  double objective_offset = 0.0;
  std::map<std::string, std::string> config;  // effective configuration echo
};

void write_result_json(const ResultFile& r, const std::string& path);
ResultFile read_result_json(const std::string& path);

/// Trace file: CSV with header t_seconds,ubd,glbd,nodes,queue_len.
void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path);
std::vector<TraceRecord> read_trace_csv(const std::string& path);

}  // namespace mapclust
