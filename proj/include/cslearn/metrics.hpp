#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslearn/gain_matrix.hpp"
#include "cslearn/numeric.hpp"

namespace cslearn {

// ============================================================================
// Confusion-matrix metrics and the closed-form Bayes oracles.
// ============================================================================

/// Empirical joint frequencies: entries(i, j) = fraction of examples with
/// label i and prediction j.
struct ConfusionMatrix {
  MatrixXd entries;

  int classes() const { return static_cast<int>(entries.rows()); }

  void validate() const {
    if (entries.rows() == 0 || entries.rows() != entries.cols()) {
      throw std::invalid_argument("ConfusionMatrix: must be square and nonempty");
    }
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
      for (Eigen::Index j = 0; j < entries.cols(); ++j) {
        if (!(entries(i, j) >= 0.0)) {
          throw std::invalid_argument("ConfusionMatrix: negative entry");
        }
      }
    }
    if (std::abs(entries.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("ConfusionMatrix: entries must sum to 1");
    }
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& preds,
                                 int m) {
  if (labels.empty()) throw std::invalid_argument("confusion: empty input");
  if (labels.size() != preds.size()) {
    throw std::invalid_argument("confusion: labels and predictions differ in length");
  }
  ConfusionMatrix c;
  c.entries = MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    int y = labels[k], p = preds[k];
    if (y < 0 || y >= m) {
      throw std::invalid_argument("confusion: label " + std::to_string(y) +
                                  " out of range at position " + std::to_string(k));
    }
    if (p < 0 || p >= m) {
      throw std::invalid_argument("confusion: prediction " + std::to_string(p) +
                                  " out of range at position " + std::to_string(k));
    }
    c.entries(y, p) += 1.0;
  }
  c.entries /= static_cast<double>(labels.size());
  return c;
}

inline std::string to_csv(const ConfusionMatrix& c) { return detail::matrix_to_csv(c.entries); }

inline ConfusionMatrix confusion_from_csv(const std::string& text) {
  ConfusionMatrix c;
  c.entries = detail::matrix_from_csv(text);
  return c;
}

/// Metrics derived from one confusion matrix. Precision is undefined (not 0,
/// not NaN) for classes that receive no predictions.
struct MetricReport {
  VectorXd recall;              // C_yy / pi_y
  std::vector<std::optional<double>> precision;
  VectorXd coverage;            // column sums
  VectorXd balanced_coverage;   // sum_i C_iy / pi_i
  double accuracy = 0.0;
  double avg_recall = 0.0;
  double min_recall = 0.0;
  std::optional<double> weighted_accuracy;  // sum_ij G_ij C_ij, when G given
  std::optional<double> head_recall;        // group means, when groups given
  std::optional<double> tail_recall;
  std::optional<double> min_group_recall;
};

inline MetricReport metrics_from(const ConfusionMatrix& c, const VectorXd& pi,
                                 const GainMatrix* gain = nullptr,
                                 const GroupSpec* groups = nullptr) {
  const int m = c.classes();
  if (pi.size() != m) throw std::invalid_argument("metrics_from: prior dimension mismatch");
  check_positive(pi, "metrics_from: prior");
  if (gain && gain->classes() != m) {
    throw std::invalid_argument("metrics_from: gain dimension mismatch");
  }

  MetricReport r;
  r.recall = c.entries.diagonal().array() / pi.array();
  r.coverage = c.entries.colwise().sum();
  r.balanced_coverage = VectorXd::Zero(m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) r.balanced_coverage[j] += c.entries(i, j) / pi[i];
  }
  r.precision.resize(m);
  for (int j = 0; j < m; ++j) {
    if (r.coverage[j] > 0.0) r.precision[j] = c.entries(j, j) / r.coverage[j];
  }
  r.accuracy = c.entries.diagonal().sum();
  r.avg_recall = r.recall.mean();
  r.min_recall = r.recall.minCoeff();
  if (gain) r.weighted_accuracy = (gain->entries.array() * c.entries.array()).sum();
  if (groups) {
    groups->validate(m);
    auto mean_over = [&](const std::vector<int>& g) {
      double acc = 0.0;
      for (int y : g) acc += r.recall[y];
      return acc / static_cast<double>(g.size());
    };
    r.head_recall = mean_over(groups->head);
    r.tail_recall = mean_over(groups->tail);
    r.min_group_recall = std::min(*r.head_recall, *r.tail_recall);
  }
  return r;
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["avg_recall"] = r.avg_recall;
  j["min_recall"] = r.min_recall;
  auto vec = [](const VectorXd& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["recall"] = vec(r.recall);
  nlohmann::ordered_json prec = nlohmann::ordered_json::array();
  for (const auto& p : r.precision) {
    if (p) {
      prec.push_back(*p);
    } else {
      prec.push_back(nullptr);
    }
  }
  j["precision"] = prec;
  j["coverage"] = vec(r.coverage);
  j["balanced_coverage"] = vec(r.balanced_coverage);
  if (r.weighted_accuracy) j["weighted_accuracy"] = *r.weighted_accuracy;
  if (r.head_recall) j["head_recall"] = *r.head_recall;
  if (r.tail_recall) j["tail_recall"] = *r.tail_recall;
  if (r.min_group_recall) j["min_group_recall"] = *r.min_group_recall;
  return j;
}

// ----------------------------------------------------------------------------
// Bayes oracles
// ----------------------------------------------------------------------------

/// Bayes-optimal prediction under gain G for conditional distribution p:
/// argmax_y (G^T p)_y, ties to the lowest class index.
inline int bayes_classify(const GainMatrix& G, const VectorXd& p) {
  G.validate();
  check_simplex(p, 1e-9, "bayes_classify: p");
  if (G.classes() != p.size()) throw std::invalid_argument("bayes_classify: dimension mismatch");
  return argmax_lowest(G.entries.transpose() * p);
}

/// Closed-form optimal scores log(G^T p), defined up to an additive constant.
inline VectorXd optimal_scores(const GainMatrix& G, const VectorXd& p) {
  G.validate();
  check_simplex(p, 1e-9, "optimal_scores: p");
  if (G.classes() != p.size()) throw std::invalid_argument("optimal_scores: dimension mismatch");
  VectorXd v = G.entries.transpose() * p;
  for (Eigen::Index y = 0; y < v.size(); ++y) {
    if (!(v[y] > 0.0)) {
      throw std::invalid_argument("optimal_scores: (G^T p)_" + std::to_string(y) +
                                  " is nonpositive");
    }
  }
  return v.array().log();
}

/// Distribution memorized on a training point with label y by an unconstrained
/// minimizer of the re-weighted loss: row y of G, normalized.
inline VectorXd memorization_target(const GainMatrix& G, int y) {
  G.validate();
  if (y < 0 || y >= G.classes()) throw std::invalid_argument("memorization_target: bad label");
  VectorXd row = G.entries.row(y);
  check_nonnegative(row, "memorization_target: gain row");
  double total = row.sum();
  if (!(total > 0.0)) throw std::invalid_argument("memorization_target: zero gain row");
  return row / total;
}

// ----------------------------------------------------------------------------
// Finite instance space with known conditionals
// ----------------------------------------------------------------------------

/// Finite instance space: row k of `probs` is p(.|x_k), mass[k] its marginal
/// weight.
struct CondProbTable {
  MatrixXd probs;  // n x m, rows on the simplex
  VectorXd mass;   // sums to 1

  int points() const { return static_cast<int>(probs.rows()); }
  int classes() const { return static_cast<int>(probs.cols()); }

  void validate() const {
    if (probs.rows() == 0) throw std::invalid_argument("CondProbTable: empty");
    if (mass.size() != probs.rows()) throw std::invalid_argument("CondProbTable: mass size");
    check_simplex(mass, 1e-9, "CondProbTable.mass");
    for (Eigen::Index k = 0; k < probs.rows(); ++k) {
      check_simplex(probs.row(k), 1e-9, "CondProbTable row " + std::to_string(k));
    }
  }

  /// Class priors implied by the table: pi = sum_x mass(x) p(.|x).
  VectorXd priors() const { return probs.transpose() * mass; }
};

}  // namespace cslearn
