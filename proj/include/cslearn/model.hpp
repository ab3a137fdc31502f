#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslearn/numeric.hpp"
#include "cslearn/rng.hpp"

namespace cslearn {

// ============================================================================
// Scoring models: a per-point score table over a finite instance space, a
// linear map, or a one-hidden-layer rectifier MLP.
// ============================================================================

/// Score table over a finite instance space; x-id = row index.
struct TabularModel {
  MatrixXd scores;  // n x m
};

struct LinearModel {
  MatrixXd weights;  // d x m
  VectorXd bias;     // m
};

struct MlpModel {
  MatrixXd w1;  // d x h
  VectorXd b1;  // h
  MatrixXd w2;  // h x m
  VectorXd b2;  // m
};

struct Model {
  std::variant<TabularModel, LinearModel, MlpModel> impl;

  static Model tabular_zeros(int points, int m) {
    Model mod;
    mod.impl = TabularModel{MatrixXd::Zero(points, m)};
    return mod;
  }

  // Weights from seeded uniform(-r, r) with r = 1/sqrt(fan-in); zero biases.
  static Model linear(int d, int m, Rng& rng) {
    LinearModel lin;
    lin.weights = MatrixXd(d, m);
    double r = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < m; ++j) lin.weights(i, j) = rng.uniform(-r, r);
    }
    lin.bias = VectorXd::Zero(m);
    Model mod;
    mod.impl = std::move(lin);
    return mod;
  }

  static Model mlp(int d, int hidden, int m, Rng& rng) {
    MlpModel net;
    net.w1 = MatrixXd(d, hidden);
    double r1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < hidden; ++j) net.w1(i, j) = rng.uniform(-r1, r1);
    }
    net.b1 = VectorXd::Zero(hidden);
    net.w2 = MatrixXd(hidden, m);
    double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int i = 0; i < hidden; ++i) {
      for (int j = 0; j < m; ++j) net.w2(i, j) = rng.uniform(-r2, r2);
    }
    net.b2 = VectorXd::Zero(m);
    Model mod;
    mod.impl = std::move(net);
    return mod;
  }

  bool is_tabular() const { return std::holds_alternative<TabularModel>(impl); }

  int classes() const {
    if (auto* t = std::get_if<TabularModel>(&impl)) return static_cast<int>(t->scores.cols());
    if (auto* l = std::get_if<LinearModel>(&impl)) return static_cast<int>(l->bias.size());
    return static_cast<int>(std::get<MlpModel>(impl).b2.size());
  }

  /// Scores for a feature vector (linear / MLP).
  VectorXd score(const VectorXd& x) const {
    if (auto* l = std::get_if<LinearModel>(&impl)) {
      return l->weights.transpose() * x + l->bias;
    }
    if (auto* n = std::get_if<MlpModel>(&impl)) {
      VectorXd h = (n->w1.transpose() * x + n->b1).cwiseMax(0.0);
      return n->w2.transpose() * h + n->b2;
    }
    throw std::invalid_argument("Model::score: tabular models are scored by x-id");
  }

  /// Scores for a finite-space point (tabular).
  VectorXd score_id(int xid) const {
    auto* t = std::get_if<TabularModel>(&impl);
    if (!t) throw std::invalid_argument("Model::score_id: not a tabular model");
    if (xid < 0 || xid >= t->scores.rows()) {
      throw std::invalid_argument("Model::score_id: x-id " + std::to_string(xid) +
                                  " outside the instance space");
    }
    return t->scores.row(xid);
  }

  /// Row k = scores of row k of X.
  MatrixXd score_batch(const MatrixXd& X) const {
    MatrixXd out(X.rows(), classes());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = score(X.row(i));
    return out;
  }
};

/// Argmax prediction with ties to the lowest class index.
inline std::vector<int> predict(const Model& model, const MatrixXd& features) {
  std::vector<int> out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[i] = argmax_lowest(model.score(features.row(i)));
  }
  return out;
}

inline std::vector<int> predict_ids(const Model& model, const std::vector<int>& xids) {
  std::vector<int> out(xids.size());
  for (std::size_t i = 0; i < xids.size(); ++i) {
    out[i] = argmax_lowest(model.score_id(xids[i]));
  }
  return out;
}

// ----------------------------------------------------------------------------
// Versioned JSON checkpoints: kind tag + flat row-major parameter arrays,
// fixed field order.
// ----------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json flat(const MatrixXd& m) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  }
  return a;
}

inline nlohmann::ordered_json flat(const VectorXd& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline MatrixXd unflat(const nlohmann::json& a, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(a.size()) != rows * cols) {
    throw std::invalid_argument("model JSON: parameter array length mismatch");
  }
  MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = a[k++].get<double>();
  }
  return m;
}

inline VectorXd unflat_vec(const nlohmann::json& a, Eigen::Index n) {
  if (static_cast<Eigen::Index>(a.size()) != n) {
    throw std::invalid_argument("model JSON: parameter array length mismatch");
  }
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = a[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Model& model) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  if (auto* t = std::get_if<TabularModel>(&model.impl)) {
    j["kind"] = "tabular";
    j["points"] = t->scores.rows();
    j["classes"] = t->scores.cols();
    j["scores"] = detail::flat(t->scores);
  } else if (auto* l = std::get_if<LinearModel>(&model.impl)) {
    j["kind"] = "linear";
    j["input_dim"] = l->weights.rows();
    j["classes"] = l->bias.size();
    j["weights"] = detail::flat(l->weights);
    j["bias"] = detail::flat(l->bias);
  } else {
    const auto& n = std::get<MlpModel>(model.impl);
    j["kind"] = "mlp";
    j["input_dim"] = n.w1.rows();
    j["hidden"] = n.b1.size();
    j["classes"] = n.b2.size();
    j["w1"] = detail::flat(n.w1);
    j["b1"] = detail::flat(n.b1);
    j["w2"] = detail::flat(n.w2);
    j["b2"] = detail::flat(n.b2);
  }
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("model JSON: unsupported version");
  }
  std::string kind = j.at("kind").get<std::string>();
  Model model;
  if (kind == "tabular") {
    TabularModel t;
    t.scores = detail::unflat(j.at("scores"), j.at("points").get<int>(),
                              j.at("classes").get<int>());
    model.impl = std::move(t);
  } else if (kind == "linear") {
    LinearModel l;
    Eigen::Index d = j.at("input_dim").get<int>(), m = j.at("classes").get<int>();
    l.weights = detail::unflat(j.at("weights"), d, m);
    l.bias = detail::unflat_vec(j.at("bias"), m);
    model.impl = std::move(l);
  } else if (kind == "mlp") {
    MlpModel n;
    Eigen::Index d = j.at("input_dim").get<int>(), h = j.at("hidden").get<int>(),
                 m = j.at("classes").get<int>();
    n.w1 = detail::unflat(j.at("w1"), d, h);
    n.b1 = detail::unflat_vec(j.at("b1"), h);
    n.w2 = detail::unflat(j.at("w2"), h, m);
    n.b2 = detail::unflat_vec(j.at("b2"), m);
    model.impl = std::move(n);
  } else {
    throw std::invalid_argument("model JSON: unknown kind " + kind);
  }
  return model;
}

}  // namespace cslearn
