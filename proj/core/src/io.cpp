#include "mapclust/io.hpp"

#include "mapclust/model.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mapclust {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  auto header = split_csv_line(line);
  int id_col = -1, label_col = -1;
  std::vector<int> feature_cols;
  for (size_t c = 0; c < header.size(); ++c) {
    std::string h = trim(header[c]);
    if (h == "id") id_col = static_cast<int>(c);
    else if (h == "label") label_col = static_cast<int>(c);
    else feature_cols.push_back(static_cast<int>(c));
  }
  if (feature_cols.empty()) throw ParseError(path + ": no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  std::map<int, int> labels;
  int missing = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row");
    std::vector<double> feat;
    feat.reserve(feature_cols.size());
    for (int c : feature_cols) {
      std::string v = trim(cells[c]);
      if (v.empty()) {
        feat.push_back(0.0);
        ++missing;
        continue;
      }
      try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        feat.push_back(x);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": column " +
                         std::to_string(c + 1) + ": non-numeric cell '" + v + "'");
      }
    }
    int row = static_cast<int>(rows.size());
    if (id_col >= 0) ids.push_back(trim(cells[id_col]));
    if (label_col >= 0) {
      std::string v = trim(cells[label_col]);
      if (!v.empty()) {
        try {
          int lab = std::stoi(v);
          if (lab < 1) throw std::invalid_argument(v);
          labels[row] = lab - 1;
        } catch (const std::exception&) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad label '" + v + "'");
        }
      }
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Dataset d;
  d.points = Matrix(rows.size(), feature_cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < feature_cols.size(); ++j) d.points(i, j) = rows[i][j];
  d.ids = std::move(ids);
  d.known_labels = std::move(labels);
  d.missing_filled = missing;
  return d;
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out.precision(17);
  bool with_id = !data.ids.empty();
  bool with_label = !data.known_labels.empty();
  if (with_id) out << "id,";
  if (data.d() == 1) {
    out << "x";
  } else {
    for (int j = 0; j < data.d(); ++j) out << (j ? "," : "") << "x" << j;
  }
  if (with_label) out << ",label";
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    if (with_id) out << data.ids[i] << ",";
    for (int j = 0; j < data.d(); ++j) out << (j ? "," : "") << data.points(i, j);
    if (with_label) {
      auto it = data.known_labels.find(i);
      out << ",";
      if (it != data.known_labels.end()) out << it->second + 1;
    }
    out << "\n";
  }
}

Dataset prep_iris1d(const Dataset& iris, int per_class, double scale) {
  if (iris.d() != 4)
    throw std::invalid_argument("prep_iris1d: expected a 4-feature table");
  const int n = iris.n();
  Matrix X = iris.points;
  Vector mean = X.colwise().mean();
  X.rowwise() -= mean.transpose();
  Matrix cov = X.transpose() * X / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Vector v = eig.eigenvectors().col(iris.d() - 1);  // leading eigenvector
  int arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
  Vector scores = scale * (X * v);

  std::vector<int> keep;
  if (per_class > 0) {
    std::map<int, int> taken;
    for (int i = 0; i < n; ++i) {
      auto it = iris.known_labels.find(i);
      if (it == iris.known_labels.end()) continue;
      if (taken[it->second] < per_class) {
        ++taken[it->second];
        keep.push_back(i);
      }
    }
  } else {
    keep.resize(n);
    std::iota(keep.begin(), keep.end(), 0);
  }

  Dataset out;
  out.points = Matrix(keep.size(), 1);
  for (size_t r = 0; r < keep.size(); ++r) {
    out.points(r, 0) = scores(keep[r]);
    auto it = iris.known_labels.find(keep[r]);
    if (it != iris.known_labels.end()) out.known_labels[static_cast<int>(r)] = it->second;
    if (!iris.ids.empty()) out.ids.push_back(iris.ids[keep[r]]);
  }
  return out;
}

Matrix average_label_precision(const Dataset& data) {
  if (data.known_labels.empty())
    throw std::invalid_argument("average_label_precision: dataset has no labels");
  std::map<int, std::vector<int>> groups;
  for (const auto& [i, k] : data.known_labels) groups[k].push_back(i);
  const int d = data.d();
  Matrix avg = Matrix::Zero(d, d);
  int used = 0;
  for (const auto& [k, idx] : groups) {
    if (static_cast<int>(idx.size()) < d + 1) continue;  // covariance would be singular
    Matrix pts(idx.size(), d);
    for (size_t r = 0; r < idx.size(); ++r) pts.row(r) = data.points.row(idx[r]);
    Vector mean = pts.colwise().mean();
    pts.rowwise() -= mean.transpose();
    Matrix cov = pts.transpose() * pts / static_cast<double>(idx.size() - 1);
    avg += cov.inverse();
    ++used;
  }
  if (used == 0)
    throw std::invalid_argument("average_label_precision: every labelled group is too small");
  return avg / static_cast<double>(used);
}

std::vector<SideConstraint> load_constraints_json(const std::string& path, int n, int K) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(path + ": expected a top-level list");
  std::vector<SideConstraint> cs;
  for (const auto& rec : doc) {
    std::string type = rec.value("type", "");
    auto geti = [&](const char* field) {
      if (!rec.contains(field))
        throw ParseError(path + ": " + type + " needs field '" + field + "'");
      return rec.at(field).get<int>() - 1;  // 1-based on disk
    };
    auto getl = [&](const char* field) {
      if (!rec.contains(field))
        throw ParseError(path + ": " + type + " needs field '" + field + "'");
      return rec.at(field).get<long>();
    };
    auto gets = [&]() {
      if (!rec.contains("set")) throw ParseError(path + ": " + type + " needs field 'set'");
      std::vector<int> s;
      for (const auto& v : rec.at("set")) s.push_back(v.get<int>() - 1);
      return s;
    };
    try {
      if (type == "must_link") cs.push_back(SideConstraint::must_link(geti("i"), geti("j")));
      else if (type == "cannot_link")
        cs.push_back(SideConstraint::cannot_link(geti("i"), geti("j")));
      else if (type == "assign")
        cs.push_back(SideConstraint::assign_label(geti("i"), geti("k")));
      else if (type == "one_way")
        cs.push_back(SideConstraint::one_way(geti("i"), geti("j"), geti("k")));
      else if (type == "min_size")
        cs.push_back(SideConstraint::min_size(geti("k"), getl("l")));
      else if (type == "pack")
        cs.push_back(SideConstraint::pack(gets(), geti("k"), getl("l")));
      else if (type == "partition")
        cs.push_back(SideConstraint::partition(gets(), geti("k"), getl("l")));
      else if (type == "cover")
        cs.push_back(SideConstraint::cover(gets(), geti("k"), getl("l")));
      else if (type == "order_pi") cs.push_back(SideConstraint::order_pi());
      else if (type == "estimator_link") cs.push_back(SideConstraint::estimator_link());
      else throw ParseError(path + ": unknown constraint type '" + type + "'");
      cs.back().check(n, K);
    } catch (const std::invalid_argument& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  return cs;
}

void save_constraints_json(const std::vector<SideConstraint>& cs, const std::string& path) {
  ordered_json doc = ordered_json::array();
  for (const auto& c : cs) {
    ordered_json rec;
    switch (c.kind) {
      case ConstraintKind::MustLink:
        rec = {{"type", "must_link"}, {"i", c.i + 1}, {"j", c.j + 1}};
        break;
      case ConstraintKind::CannotLink:
        rec = {{"type", "cannot_link"}, {"i", c.i + 1}, {"j", c.j + 1}};
        break;
      case ConstraintKind::AssignLabel:
        rec = {{"type", "assign"}, {"i", c.i + 1}, {"k", c.k + 1}};
        break;
      case ConstraintKind::OneWay:
        rec = {{"type", "one_way"}, {"i", c.i + 1}, {"j", c.j + 1}, {"k", c.k + 1}};
        break;
      case ConstraintKind::MinSize:
        rec = {{"type", "min_size"}, {"k", c.k + 1}, {"l", c.count}};
        break;
      case ConstraintKind::Pack:
      case ConstraintKind::Partition:
      case ConstraintKind::Cover: {
        std::string t = c.kind == ConstraintKind::Pack ? "pack"
                        : c.kind == ConstraintKind::Partition ? "partition"
                                                              : "cover";
        std::vector<int> s;
        for (int i : c.set) s.push_back(i + 1);
        rec = {{"type", t}, {"set", s}, {"k", c.k + 1}, {"l", c.count}};
        break;
      }
      case ConstraintKind::OrderPi:
        rec = {{"type", "order_pi"}};
        break;
      case ConstraintKind::EstimatorLink:
        rec = {{"type", "estimator_link"}};
        break;
    }
    doc.push_back(rec);
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

}  // namespace

void write_result_json(const ResultFile& r, const std::string& path) {
  ordered_json doc;
  doc["status"] = r.status;
  doc["objective_ubd"] = std::isfinite(r.objective_ubd) ? ordered_json(r.objective_ubd)
                                                        : ordered_json(nullptr);
  doc["glbd"] = optional_number(r.glbd);
  doc["true_glbd"] = optional_number(r.true_glbd);
  doc["gap"] = optional_number(r.gap);
  doc["e_max"] = optional_number(r.e_max);
  ordered_json assign = ordered_json::array();
  for (int lab : r.assignment) assign.push_back(lab + 1);
  doc["assignment"] = assign;
  ordered_json mu = ordered_json::array();
  for (int k = 0; k < r.mu.rows(); ++k) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < r.mu.cols(); ++j) row.push_back(r.mu(k, j));
    mu.push_back(row);
  }
  doc["mu"] = mu;
  ordered_json pi = ordered_json::array();
  for (int k = 0; k < r.pi.size(); ++k) pi.push_back(r.pi(k));
  doc["pi"] = pi;
  doc["nodes"] = r.nodes;
  doc["wall_seconds"] = r.wall_seconds;
  doc["seed"] = r.seed;
  doc["objective_offset"] = r.objective_offset;
  ordered_json cfg;
  for (const auto& [k, v] : r.config) cfg[k] = v;
  doc["config"] = cfg;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

ResultFile read_result_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  ResultFile r;
  r.status = doc.at("status").get<std::string>();
  r.objective_ubd = doc.at("objective_ubd").is_null()
                        ? std::numeric_limits<double>::infinity()
                        : doc.at("objective_ubd").get<double>();
  auto opt = [&](const char* f) -> std::optional<double> {
    if (!doc.contains(f) || doc.at(f).is_null()) return std::nullopt;
    return doc.at(f).get<double>();
  };
  r.glbd = opt("glbd");
  r.true_glbd = opt("true_glbd");
  r.gap = opt("gap");
  r.e_max = opt("e_max");
  for (const auto& v : doc.at("assignment")) r.assignment.push_back(v.get<int>() - 1);
  const auto& mu = doc.at("mu");
  int K = static_cast<int>(mu.size());
  int d = K > 0 ? static_cast<int>(mu[0].size()) : 0;
  r.mu = Matrix(K, d);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < d; ++j) r.mu(k, j) = mu[k][j].get<double>();
  const auto& pi = doc.at("pi");
  r.pi = Vector(pi.size());
  for (size_t k = 0; k < pi.size(); ++k) r.pi(static_cast<int>(k)) = pi[k].get<double>();
  r.nodes = doc.value("nodes", 0LL);
  r.wall_seconds = doc.value("wall_seconds", 0.0);
  r.seed = doc.value("seed", 0ULL);
  r.objective_offset = doc.value("objective_offset", 0.0);
  if (doc.contains("config"))
    for (const auto& [k, v] : doc.at("config").items())
      r.config[k] = v.get<std::string>();
  return r;
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out.precision(17);
  out << "t_seconds,ubd,glbd,nodes,queue_len\n";
  for (const auto& rec : trace)
    out << rec.t << "," << rec.ubd << "," << rec.glbd << "," << rec.nodes << ","
        << rec.queue_len << "\n";
}

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty trace");
  if (trim(line) != "t_seconds,ubd,glbd,nodes,queue_len")
    throw ParseError(path + ": unexpected trace header");
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 5) throw ParseError(path + ": ragged trace row");
    TraceRecord r;
    r.t = std::stod(cells[0]);
    r.ubd = std::stod(cells[1]);
    r.glbd = std::stod(cells[2]);
    r.nodes = std::stoull(cells[3]);
    r.queue_len = std::stoull(cells[4]);
    out.push_back(r);
  }
  return out;
}

}  // namespace mapclust
