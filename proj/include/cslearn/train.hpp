#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cslearn/dataset.hpp"
#include "cslearn/losses.hpp"
#include "cslearn/metrics.hpp"
#include "cslearn/model.hpp"
#include "cslearn/rng.hpp"

namespace cslearn {

// ============================================================================
// SGD-with-momentum training and the population-level tabular fit.
//
// Determinism contract: a fixed seed fixes the shuffling stream and batch
// order; batch gradients are accumulated in index order, so two runs with the
// same (seed, config, data) produce bitwise-identical parameters.
// ============================================================================

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int batch_size = 128;
  int steps = 0;    // total SGD steps; when 0, epochs applies
  int epochs = 0;
  std::uint64_t seed = 1;
  std::vector<std::pair<int, double>> lr_decay;  // (step, factor), steps strictly increasing
  bool distill = false;  // consume teacher rows via the loss's z-weighted form

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
    }
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be positive");
    if (steps < 0 || epochs < 0) throw std::invalid_argument("TrainConfig: negative step count");
    for (std::size_t i = 1; i < lr_decay.size(); ++i) {
      if (lr_decay[i].first <= lr_decay[i - 1].first) {
        throw std::invalid_argument("TrainConfig: decay schedule steps must increase");
      }
    }
  }

  int total_steps(int n) const {
    if (steps > 0) return steps;
    int per_epoch = (n + batch_size - 1) / batch_size;
    return epochs * per_epoch;
  }
};

namespace detail {

// Per-example loss gradient w.r.t. the score vector.
inline LossEval example_loss(const LossSpec& loss, const Dataset& data, bool distill, int i,
                             const VectorXd& s) {
  if (loss.kind == LossKind::Distill || distill) {
    if (!data.teacher) {
      throw std::invalid_argument("train: distillation needs teacher rows in the dataset");
    }
    return evaluate_distilled(loss, data.teacher->row(i), s);
  }
  return evaluate(loss, data.labels[i], s);
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Incremental trainer. The reduction algorithms run a few SGD steps per
// multiplier update, warm-starting from the previous iterate; this class keeps
// the shuffle stream, momentum buffers and step counter alive across calls.
// ----------------------------------------------------------------------------
class SgdTrainer {
 public:
  SgdTrainer(Model model, TrainConfig cfg, int n)
      : model_(std::move(model)), cfg_(cfg), rng_(cfg.seed), order_(n), cursor_(n) {
    cfg_.validate();
    std::iota(order_.begin(), order_.end(), 0);
    lr_ = cfg_.lr;
    init_velocity();
  }

  const Model& model() const { return model_; }
  int step_count() const { return step_; }

  /// Runs `count` SGD steps of `loss` on `data`.
  void run_steps(const LossSpec& loss, const Dataset& data, int count) {
    loss.validate();
    if (data.size() != static_cast<int>(order_.size())) {
      throw std::invalid_argument("SgdTrainer: dataset size changed");
    }
    const int n = data.size();
    for (int k = 0; k < count; ++k) {
      for (const auto& [at, factor] : cfg_.lr_decay) {
        if (at == step_) lr_ *= factor;
      }
      // next batch from the shuffle stream
      std::vector<int> batch;
      batch.reserve(cfg_.batch_size);
      for (int b = 0; b < cfg_.batch_size && b < n; ++b) {
        if (cursor_ >= n) {
          rng_.shuffle(order_);
          cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
      }
      step_once(loss, data, batch);
      ++step_;
    }
  }

 private:
  void init_velocity() {
    if (auto* t = std::get_if<TabularModel>(&model_.impl)) {
      vel_ = {MatrixXd::Zero(t->scores.rows(), t->scores.cols())};
    } else if (auto* l = std::get_if<LinearModel>(&model_.impl)) {
      vel_ = {MatrixXd::Zero(l->weights.rows(), l->weights.cols()),
              MatrixXd::Zero(l->bias.size(), 1)};
    } else {
      auto& n = std::get<MlpModel>(model_.impl);
      vel_ = {MatrixXd::Zero(n.w1.rows(), n.w1.cols()), MatrixXd::Zero(n.b1.size(), 1),
              MatrixXd::Zero(n.w2.rows(), n.w2.cols()), MatrixXd::Zero(n.b2.size(), 1)};
    }
  }

  void step_once(const LossSpec& loss, const Dataset& data, const std::vector<int>& batch) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double batch_loss = 0.0;

    if (auto* tab = std::get_if<TabularModel>(&model_.impl)) {
      if (!data.xids) throw std::invalid_argument("SgdTrainer: tabular model needs x-ids");
      MatrixXd g = MatrixXd::Zero(tab->scores.rows(), tab->scores.cols());
      for (int i : batch) {
        int xid = (*data.xids)[i];
        LossEval e = eval_example(loss, data, i, model_.score_id(xid));
        batch_loss += scale * e.value;
        g.row(xid) += scale * e.grad;
      }
      check_loss(batch_loss);
      vel_[0] = cfg_.momentum * vel_[0] + g;
      tab->scores -= lr_ * vel_[0];
      return;
    }

    if (auto* lin = std::get_if<LinearModel>(&model_.impl)) {
      MatrixXd gw = MatrixXd::Zero(lin->weights.rows(), lin->weights.cols());
      VectorXd gb = VectorXd::Zero(lin->bias.size());
      for (int i : batch) {
        VectorXd x = data.features.row(i);
        LossEval e = eval_example(loss, data, i, model_.score(x));
        batch_loss += scale * e.value;
        gw += scale * (x * e.grad.transpose());
        gb += scale * e.grad;
      }
      check_loss(batch_loss);
      vel_[0] = cfg_.momentum * vel_[0] + gw;
      vel_[1] = cfg_.momentum * vel_[1] + gb;
      lin->weights -= lr_ * vel_[0];
      lin->bias -= lr_ * vel_[1].col(0);
      return;
    }

    auto& net = std::get<MlpModel>(model_.impl);
    MatrixXd gw1 = MatrixXd::Zero(net.w1.rows(), net.w1.cols());
    VectorXd gb1 = VectorXd::Zero(net.b1.size());
    MatrixXd gw2 = MatrixXd::Zero(net.w2.rows(), net.w2.cols());
    VectorXd gb2 = VectorXd::Zero(net.b2.size());
    for (int i : batch) {
      VectorXd x = data.features.row(i);
      VectorXd pre = net.w1.transpose() * x + net.b1;
      VectorXd h = pre.cwiseMax(0.0);
      VectorXd s = net.w2.transpose() * h + net.b2;
      LossEval e = eval_example(loss, data, i, s);
      batch_loss += scale * e.value;
      gw2 += scale * (h * e.grad.transpose());
      gb2 += scale * e.grad;
      VectorXd dh = net.w2 * e.grad;
      for (Eigen::Index j = 0; j < dh.size(); ++j) {
        if (pre[j] <= 0.0) dh[j] = 0.0;
      }
      gw1 += scale * (x * dh.transpose());
      gb1 += scale * dh;
    }
    check_loss(batch_loss);
    vel_[0] = cfg_.momentum * vel_[0] + gw1;
    vel_[1] = cfg_.momentum * vel_[1] + gb1;
    vel_[2] = cfg_.momentum * vel_[2] + gw2;
    vel_[3] = cfg_.momentum * vel_[3] + gb2;
    net.w1 -= lr_ * vel_[0];
    net.b1 -= lr_ * vel_[1].col(0);
    net.w2 -= lr_ * vel_[2];
    net.b2 -= lr_ * vel_[3].col(0);
  }

  LossEval eval_example(const LossSpec& loss, const Dataset& data, int i,
                        const VectorXd& s) const {
    if (!all_finite(s)) {  // diverged parameters surface as a NaN-loss abort
      throw std::runtime_error("sgd_train: NaN loss at step " + std::to_string(step_));
    }
    return detail::example_loss(loss, data, cfg_.distill, i, s);
  }

  void check_loss(double value) const {
    if (std::isnan(value)) {
      throw std::runtime_error("sgd_train: NaN loss at step " + std::to_string(step_));
    }
  }

  Model model_;
  TrainConfig cfg_;
  Rng rng_;
  std::vector<int> order_;
  int cursor_ = 0;
  int step_ = 0;
  double lr_ = 0.0;
  std::vector<MatrixXd> vel_;
};

/// One-shot SGD training; `warm_start` overrides the passed model parameters.
inline Model sgd_train(const Model& model, const LossSpec& loss, const Dataset& data,
                       const TrainConfig& cfg, const Model* warm_start = nullptr) {
  data.validate();
  SgdTrainer trainer(warm_start ? *warm_start : model, cfg, data.size());
  trainer.run_steps(loss, data, cfg.total_steps(data.size()));
  return trainer.model();
}

// ----------------------------------------------------------------------------
// Population-level fit on a finite instance space: full-batch gradient descent
// on the free score table, minimizing
//   sum_x mass(x) sum_y p(y|x) loss(y, s(x))
// (for the distillation loss, z(x) = p(.|x) plays the teacher). Used by the
// calibration checks; full-batch so they are free of minibatch noise.
// ----------------------------------------------------------------------------

struct TabularFitResult {
  Model model;
  bool converged = false;
  double grad_max_norm = 0.0;
  int iterations = 0;
  int warnings = 0;  // clamp events in the last pass
};

inline constexpr double kTabularFitTol = 1e-7;

inline TabularFitResult tabular_fit(const LossSpec& loss, const CondProbTable& cond, double lr,
                                    int max_iters) {
  loss.validate();
  cond.validate();
  if (!(lr > 0.0)) throw std::invalid_argument("tabular_fit: lr must be positive");
  const int n = cond.points();
  const int m = cond.classes();

  MatrixXd scores = MatrixXd::Zero(n, m);
  TabularFitResult out;
  for (int it = 0; it <= max_iters; ++it) {
    MatrixXd grad = MatrixXd::Zero(n, m);
    out.warnings = 0;
    for (int x = 0; x < n; ++x) {
      VectorXd s = scores.row(x);
      if (loss.kind == LossKind::Distill) {
        LossEval e = distill(cond.probs.row(x), s, loss.dis);
        grad.row(x) = cond.mass[x] * e.grad;
        out.warnings += e.warnings;
      } else {
        for (int y = 0; y < m; ++y) {
          double p = cond.probs(x, y);
          if (p == 0.0) continue;
          LossEval e = evaluate(loss, y, s);
          grad.row(x) += cond.mass[x] * p * e.grad;
          out.warnings += e.warnings;
        }
      }
    }
    out.grad_max_norm = grad.cwiseAbs().maxCoeff();
    out.iterations = it;
    if (out.grad_max_norm <= kTabularFitTol) {
      out.converged = true;
      break;
    }
    if (it == max_iters) break;  // report the norm at the final iterate
    scores -= lr * grad;
  }
  out.model = Model::tabular_zeros(n, m);
  std::get<TabularModel>(out.model.impl).scores = scores;
  return out;
}

}  // namespace cslearn
