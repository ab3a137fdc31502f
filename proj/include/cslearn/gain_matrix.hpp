#pragma once

#include <cstdlib>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslearn/numeric.hpp"

namespace cslearn {

// ============================================================================
// Gain matrices
// ============================================================================

/// m x m reward matrix: entries(i, j) is the reward for predicting class j
/// when the true class is i. Class indices are 0-based throughout the API.
struct GainMatrix {
  MatrixXd entries;

  GainMatrix() = default;
  explicit GainMatrix(MatrixXd e) : entries(std::move(e)) { validate(); }

  int classes() const { return static_cast<int>(entries.rows()); }

  static GainMatrix identity(int m) { return GainMatrix(MatrixXd::Identity(m, m)); }

  static GainMatrix diagonal(const VectorXd& d) {
    MatrixXd e = MatrixXd::Zero(d.size(), d.size());
    e.diagonal() = d;
    return GainMatrix(std::move(e));
  }

  /// Off-diagonal entries exactly zero.
  bool is_diagonal() const {
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
      for (Eigen::Index j = 0; j < entries.cols(); ++j) {
        if (i != j && entries(i, j) != 0.0) return false;
      }
    }
    return true;
  }

  void validate() const {
    if (entries.rows() == 0 || entries.rows() != entries.cols()) {
      throw std::invalid_argument("GainMatrix: must be square and nonempty");
    }
    check_finite(entries, "GainMatrix");
  }
};

/// Which complex learning problem a gain matrix is built for.
enum class ProblemKind {
  MinRecall,
  RecallConstrained,
  PrecisionConstrained,
  CoverageConstrained,
  BalancedCoverageConstrained,
  GroupedMinRecall,
};

/// Partition of the classes into a head set and a tail set.
struct GroupSpec {
  std::vector<int> head;
  std::vector<int> tail;

  int group_of(int y) const {
    for (int h : head) {
      if (h == y) return 0;
    }
    for (int t : tail) {
      if (t == y) return 1;
    }
    throw std::invalid_argument("GroupSpec: class " + std::to_string(y) + " in no group");
  }

  int group_size(int g) const {
    return static_cast<int>(g == 0 ? head.size() : tail.size());
  }

  void validate(int m) const {
    if (head.empty() || tail.empty()) {
      throw std::invalid_argument("GroupSpec: head and tail must both be nonempty");
    }
    std::vector<int> seen(m, 0);
    auto mark = [&](const std::vector<int>& g) {
      for (int y : g) {
        if (y < 0 || y >= m) throw std::invalid_argument("GroupSpec: class index out of range");
        if (seen[y]++) throw std::invalid_argument("GroupSpec: class assigned twice");
      }
    };
    mark(head);
    mark(tail);
    for (int y = 0; y < m; ++y) {
      if (!seen[y]) {
        throw std::invalid_argument("GroupSpec: class " + std::to_string(y) + " unassigned");
      }
    }
  }
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::MinRecall;
  double target = 1.0;           // tau, for the recall/precision constrained kinds
  double coverage_factor = 0.95; // e.g. cov_y >= coverage_factor * target prior
  std::optional<GroupSpec> groups;
  // Table form omits the 1/m objective scaling on the coverage diagonal;
  // setting this restores it (diag 1/(m*pi) instead of 1/pi).
  bool use_m_scaling = false;

  void validate() const {
    if (kind == ProblemKind::RecallConstrained || kind == ProblemKind::PrecisionConstrained) {
      if (!(target > 0.0 && target <= 1.0)) {
        throw std::invalid_argument("ProblemSpec: target must lie in (0, 1]");
      }
    }
    if (!(coverage_factor > 0.0 && coverage_factor <= 1.0)) {
      throw std::invalid_argument("ProblemSpec: coverage factor must lie in (0, 1]");
    }
    if (kind == ProblemKind::GroupedMinRecall && !groups.has_value()) {
      throw std::invalid_argument("ProblemSpec: grouped kind requires groups");
    }
  }
};

/// G = M * diag(D) with D strictly positive.
struct Factorization {
  MatrixXd M;
  VectorXd D;

  MatrixXd reconstruct() const { return M * D.asDiagonal(); }

  int classes() const { return static_cast<int>(D.size()); }

  void validate() const {
    if (M.rows() != M.cols() || M.rows() != D.size()) {
      throw std::invalid_argument("Factorization: shape mismatch");
    }
    check_finite(M, "Factorization.M");
    check_positive(D, "Factorization.D");
  }
};

enum class FactorizeStrategy {
  PriorInverse,  // D = diag(1/pi)
  DiagonalOfG,   // D = diag(G_11, ..., G_mm)
};

// ----------------------------------------------------------------------------

/// Builds the gain matrix for a complex learning problem from the current
/// multipliers and the class priors.
inline GainMatrix build_gain(const ProblemSpec& spec, const VectorXd& lambda,
                             const VectorXd& pi) {
  spec.validate();
  const int m = static_cast<int>(pi.size());
  check_positive(pi, "build_gain: prior");
  if (std::abs(pi.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("build_gain: prior must sum to 1");
  }
  check_nonnegative(lambda, "build_gain: lambda");

  const int want =
      spec.kind == ProblemKind::GroupedMinRecall ? 2 : m;
  if (lambda.size() != want) {
    throw std::invalid_argument("build_gain: lambda has dimension " +
                                std::to_string(lambda.size()) + ", expected " +
                                std::to_string(want));
  }

  MatrixXd g = MatrixXd::Zero(m, m);
  switch (spec.kind) {
    case ProblemKind::MinRecall:
      g.diagonal() = lambda.array() / pi.array();
      break;
    case ProblemKind::RecallConstrained:
      g.diagonal() = 1.0 + lambda.array() / pi.array();
      break;
    case ProblemKind::PrecisionConstrained:
      // diag(1 + lambda) - tau * 1 lambda^T
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          g(i, j) = (i == j ? 1.0 + lambda[i] : 0.0) - spec.target * lambda[j];
        }
      }
      break;
    case ProblemKind::CoverageConstrained:
      for (int i = 0; i < m; ++i) {
        double diag = 1.0 / ((spec.use_m_scaling ? m : 1) * pi[i]);
        for (int j = 0; j < m; ++j) {
          g(i, j) = (i == j ? diag : 0.0) + lambda[j];
        }
      }
      break;
    case ProblemKind::BalancedCoverageConstrained:
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          g(i, j) = ((i == j ? 1.0 : 0.0) + lambda[j]) / pi[i];
        }
      }
      break;
    case ProblemKind::GroupedMinRecall: {
      spec.groups->validate(m);
      for (int y = 0; y < m; ++y) {
        int grp = spec.groups->group_of(y);
        g(y, y) = lambda[grp] / (spec.groups->group_size(grp) * pi[y]);
      }
      break;
    }
  }
  return GainMatrix(std::move(g));
}

/// Splits G into M * diag(D). PriorInverse uses D = 1/pi; DiagonalOfG uses the
/// diagonal of G itself, which makes M unit-diagonal.
inline Factorization factorize(const GainMatrix& G, FactorizeStrategy strategy,
                               const VectorXd& pi = VectorXd()) {
  G.validate();
  const int m = G.classes();
  Factorization f;
  f.D = VectorXd(m);
  switch (strategy) {
    case FactorizeStrategy::PriorInverse:
      if (pi.size() != m) {
        throw std::invalid_argument("factorize: PriorInverse needs an m-dim prior");
      }
      check_positive(pi, "factorize: prior");
      f.D = pi.cwiseInverse();
      break;
    case FactorizeStrategy::DiagonalOfG:
      for (int i = 0; i < m; ++i) {
        if (!(G.entries(i, i) > 0.0)) {
          throw std::invalid_argument("factorize: DiagonalOfG needs G(" + std::to_string(i) +
                                      "," + std::to_string(i) + ") > 0");
        }
        f.D[i] = G.entries(i, i);
      }
      break;
  }
  // M = G * D^{-1}: column j of G scaled by 1/D_j.
  f.M = G.entries * f.D.cwiseInverse().asDiagonal();
  f.validate();
  return f;
}

// ----------------------------------------------------------------------------
// Serialization: dense row-major CSV block and JSON array-of-arrays. Doubles
// round-trip bit-exactly (17 significant digits).
// ----------------------------------------------------------------------------

namespace detail {

inline std::string matrix_to_csv(const MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline MatrixXd matrix_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      const char* begin = cell.c_str();
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) {
        throw std::invalid_argument("matrix CSV: unparsable cell at line " +
                                    std::to_string(lineno));
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::invalid_argument("matrix CSV: ragged row at line " + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("matrix CSV: empty input");
  MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace detail

inline std::string to_csv(const GainMatrix& G) { return detail::matrix_to_csv(G.entries); }

inline GainMatrix gain_from_csv(const std::string& text) {
  return GainMatrix(detail::matrix_from_csv(text));
}

inline nlohmann::json to_json(const GainMatrix& G) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < G.entries.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < G.entries.cols(); ++j) row.push_back(G.entries(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline GainMatrix gain_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("gain JSON: expected array of arrays");
  MatrixXd m(j.size(), j.front().size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j.front().size()) throw std::invalid_argument("gain JSON: ragged rows");
    for (std::size_t k = 0; k < j[i].size(); ++k) m(i, k) = j[i][k].get<double>();
  }
  return GainMatrix(std::move(m));
}

}  // namespace cslearn
