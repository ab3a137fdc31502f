#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslearn/numeric.hpp"

namespace cslearn {

// ============================================================================
// Datasets and CSV I/O.
//
// In-memory labels are 0-based; the CSV format is 1-based, with header
// f0,...,f{d-1},label[,t0,...,t{m-1}]. Teacher columns are optional soft
// labels on the simplex.
// ============================================================================

struct Dataset {
  MatrixXd features;                       // n x d
  std::vector<int> labels;                 // 0-based
  int num_classes = 0;
  std::optional<MatrixXd> teacher;         // n x m soft labels
  std::optional<std::vector<int>> xids;    // finite-space mode
  VectorXd priors;                         // empirical class priors at creation

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }

  static VectorXd empirical_priors(const std::vector<int>& labels, int m) {
    VectorXd pi = VectorXd::Zero(m);
    for (int y : labels) pi[y] += 1.0;
    pi /= static_cast<double>(labels.size());
    return pi;
  }

  static Dataset make(MatrixXd features, std::vector<int> labels, int m) {
    Dataset d;
    d.features = std::move(features);
    d.labels = std::move(labels);
    d.num_classes = m;
    d.priors = empirical_priors(d.labels, m);
    d.validate();
    return d;
  }

  void validate() const {
    if (labels.empty()) throw std::invalid_argument("Dataset: empty");
    if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
      throw std::invalid_argument("Dataset: feature/label count mismatch");
    }
    check_finite(features, "Dataset.features");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw std::invalid_argument("Dataset: label out of range at row " + std::to_string(i));
      }
    }
    if (teacher) {
      if (teacher->rows() != features.rows() || teacher->cols() != num_classes) {
        throw std::invalid_argument("Dataset: teacher shape mismatch");
      }
      for (Eigen::Index i = 0; i < teacher->rows(); ++i) {
        check_simplex(teacher->row(i), 1e-9, "Dataset teacher row " + std::to_string(i));
      }
    }
    if (xids && xids->size() != labels.size()) {
      throw std::invalid_argument("Dataset: x-id count mismatch");
    }
  }
};

// ----------------------------------------------------------------------------

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  const int d = data.dim();
  for (int j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "label";
  if (data.teacher) {
    for (int j = 0; j < data.num_classes; ++j) out << ",t" << j;
  }
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < d; ++j) out << detail::format_double(data.features(i, j)) << ',';
    out << data.labels[i] + 1;  // 1-based on disk
    if (data.teacher) {
      for (int j = 0; j < data.num_classes; ++j) {
        out << ',' << detail::format_double((*data.teacher)(i, j));
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_csv_double(const std::string& cell, int lineno, const std::string& what) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw std::invalid_argument("CSV line " + std::to_string(lineno) + ": bad " + what + " '" +
                                cell + "'");
  }
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) throw std::invalid_argument("load_csv: missing header");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  auto cols = detail::split_csv_line(header);

  int d = 0;
  while (d < static_cast<int>(cols.size()) && cols[d] == "f" + std::to_string(d)) ++d;
  if (d >= static_cast<int>(cols.size()) || cols[d] != "label") {
    throw std::invalid_argument("load_csv: header must read f0,...,f{d-1},label[,t0,...]; got '" +
                                header + "'");
  }
  int teacher_cols = 0;
  for (int j = d + 1; j < static_cast<int>(cols.size()); ++j) {
    if (cols[j] != "t" + std::to_string(teacher_cols)) {
      throw std::invalid_argument("load_csv: unexpected header column '" + cols[j] + "'");
    }
    ++teacher_cols;
  }

  std::vector<std::vector<double>> feats;
  std::vector<int> labels_raw;
  std::vector<std::vector<double>> teacher_rows;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != static_cast<int>(cols.size())) {
      throw std::invalid_argument("CSV line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(cols.size()) + " cells, got " +
                                  std::to_string(cells.size()));
    }
    std::vector<double> f(d);
    for (int j = 0; j < d; ++j) f[j] = detail::parse_csv_double(cells[j], lineno, "feature");
    double raw = detail::parse_csv_double(cells[d], lineno, "label");
    int label = static_cast<int>(raw);
    if (raw != label || label < 1) {
      throw std::invalid_argument("CSV line " + std::to_string(lineno) +
                                  ": label must be a 1-based integer");
    }
    if (teacher_cols > 0) {
      std::vector<double> t(teacher_cols);
      for (int j = 0; j < teacher_cols; ++j) {
        t[j] = detail::parse_csv_double(cells[d + 1 + j], lineno, "teacher weight");
      }
      teacher_rows.push_back(std::move(t));
    }
    feats.push_back(std::move(f));
    labels_raw.push_back(label);
  }
  if (feats.empty()) throw std::invalid_argument("load_csv: no data rows in " + path);

  int m = teacher_cols;
  for (int label : labels_raw) m = std::max(m, label);
  Dataset data;
  data.num_classes = m;
  data.features = MatrixXd(feats.size(), d);
  data.labels.resize(labels_raw.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = feats[i][j];
    if (labels_raw[i] > m) {
      throw std::invalid_argument("load_csv: label " + std::to_string(labels_raw[i]) +
                                  " exceeds class count " + std::to_string(m));
    }
    data.labels[i] = labels_raw[i] - 1;
  }
  if (teacher_cols > 0) {
    MatrixXd t(feats.size(), teacher_cols);
    for (std::size_t i = 0; i < teacher_rows.size(); ++i) {
      double sum = 0.0;
      for (int j = 0; j < teacher_cols; ++j) {
        if (teacher_rows[i][j] < -1e-6) {
          throw std::invalid_argument("CSV line " + std::to_string(i + 2) +
                                      ": negative teacher weight");
        }
        t(i, j) = std::max(0.0, teacher_rows[i][j]);
        sum += t(i, j);
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("CSV line " + std::to_string(i + 2) +
                                    ": teacher row sums to " + std::to_string(sum));
      }
      t.row(i) /= sum;  // exact simplex after the 1e-6 gate
    }
    data.teacher = std::move(t);
  }
  data.priors = Dataset::empirical_priors(data.labels, m);
  data.validate();
  return data;
}

}  // namespace cslearn
