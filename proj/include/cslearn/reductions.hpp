#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslearn/dataset.hpp"
#include "cslearn/gain_matrix.hpp"
#include "cslearn/losses.hpp"
#include "cslearn/metrics.hpp"
#include "cslearn/model.hpp"
#include "cslearn/train.hpp"

namespace cslearn {

// ============================================================================
// Reduction algorithms for non-decomposable objectives.
//
// Two-dataset protocol: multiplier updates come from the validation split,
// cost-sensitive training steps run on the training split, and the gain
// matrices are built from the training-split priors (or the teacher priors in
// distilled runs). The outer loop is sequential by contract.
// ============================================================================

enum class MultiplierDomain { Simplex, NonnegOrthant };

struct MultiplierState {
  VectorXd lambda;
  MultiplierDomain domain = MultiplierDomain::Simplex;
  double omega = 0.1;  // step size

  static MultiplierState simplex_uniform(int m, double omega) {
    MultiplierState s;
    s.lambda = VectorXd::Constant(m, 1.0 / m);
    s.domain = MultiplierDomain::Simplex;
    s.omega = omega;
    s.validate();
    return s;
  }

  static MultiplierState nonneg_zeros(int m, double omega) {
    MultiplierState s;
    s.lambda = VectorXd::Zero(m);
    s.domain = MultiplierDomain::NonnegOrthant;
    s.omega = omega;
    s.validate();
    return s;
  }

  void validate() const {
    if (!(omega >= 0.0)) throw std::invalid_argument("MultiplierState: omega must be >= 0");
    check_nonnegative(lambda, "MultiplierState.lambda");
    if (domain == MultiplierDomain::Simplex && std::abs(lambda.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("MultiplierState: simplex multipliers must sum to 1");
    }
  }
};

/// Exponentiated-gradient step on the simplex: lambda_i <- lambda_i
/// exp(-omega rec_i), renormalized. Classes with low recall gain weight.
inline MultiplierState eg_update(const MultiplierState& state, const VectorXd& recalls) {
  state.validate();
  if (state.domain != MultiplierDomain::Simplex) {
    throw std::invalid_argument("eg_update: multipliers must live on the simplex");
  }
  if (recalls.size() != state.lambda.size()) {
    throw std::invalid_argument("eg_update: recall dimension mismatch");
  }
  check_finite(recalls, "eg_update: recalls");

  MultiplierState next = state;
  // uniform shift by the min recall cancels in the normalization; avoids underflow
  double shift = recalls.minCoeff();
  for (Eigen::Index i = 0; i < recalls.size(); ++i) {
    next.lambda[i] = state.lambda[i] * std::exp(-state.omega * (recalls[i] - shift));
  }
  double total = next.lambda.sum();
  if (!(total > 0.0)) throw std::runtime_error("eg_update: multipliers vanished");
  next.lambda /= total;
  return next;
}

/// Projected-gradient step on the nonnegative orthant:
/// lambda_i <- max(0, lambda_i - omega (cov_i - target_i)).
inline MultiplierState pg_update(const MultiplierState& state, const VectorXd& coverages,
                                 const VectorXd& targets) {
  state.validate();
  if (state.domain != MultiplierDomain::NonnegOrthant) {
    throw std::invalid_argument("pg_update: multipliers must live on the nonnegative orthant");
  }
  if (coverages.size() != state.lambda.size() || targets.size() != state.lambda.size()) {
    throw std::invalid_argument("pg_update: dimension mismatch");
  }
  check_finite(coverages, "pg_update: coverages");
  check_finite(targets, "pg_update: targets");

  MultiplierState next = state;
  next.lambda =
      (state.lambda - state.omega * (coverages - targets)).cwiseMax(0.0);
  return next;
}

// ----------------------------------------------------------------------------

struct ReductionConfig {
  int outer_iters = 50;   // T
  int inner_steps = 32;   // SGD steps per multiplier update
  double omega = 0.1;
  LossKind csl_loss = LossKind::LogitAdjusted;
  FactorizeStrategy strategy = FactorizeStrategy::PriorInverse;  // hybrid variant A
  bool balanced_gain = false;   // coverage mode: diag(1/pi) + (1/pi) lambda^T
  bool use_m_scaling = false;   // coverage mode: 1/(m pi) diagonal
  bool select_best = false;     // keep the best(-feasible) iterate instead of the last
  VectorXd coverage_targets;    // coverage mode
  std::optional<GroupSpec> groups;  // grouped min-recall
  double distill_gamma = 0.0;       // distilled CSL step
  VectorXd priors_override;         // e.g. teacher priors; empty = training priors
  TrainConfig train;

  void validate() const {
    if (outer_iters < 1) throw std::invalid_argument("ReductionConfig: outer_iters must be >= 1");
    if (inner_steps < 1) throw std::invalid_argument("ReductionConfig: inner_steps must be >= 1");
    if (!(omega >= 0.0)) throw std::invalid_argument("ReductionConfig: omega must be >= 0");
    train.validate();
  }
};

/// One outer iteration of a reduction run: the multipliers used to build the
/// gain and the validation metrics of the model they were computed from.
struct TrajectoryPoint {
  int t = 0;
  VectorXd lambda;
  double min_recall = 0.0;
  double avg_recall = 0.0;
  VectorXd coverages;
};

inline nlohmann::ordered_json to_json(const TrajectoryPoint& p) {
  nlohmann::ordered_json j;
  j["t"] = p.t;
  j["lambda"] = detail::vector_to_json(p.lambda);
  j["min_recall"] = p.min_recall;
  j["avg_recall"] = p.avg_recall;
  j["coverages"] = detail::vector_to_json(p.coverages);
  return j;
}

struct ReductionResult {
  Model model;
  std::vector<TrajectoryPoint> trajectory;
  MultiplierState multipliers;
  GainMatrix last_gain;
  int selected_iter = -1;  // -1 = last iterate
  int loss_warnings = 0;
};

namespace detail {

// CSL loss for the current gain matrix. For the SMS kinds the gain must have
// the structure diag(sms_alpha) + 1 sms_beta^T.
inline LossSpec make_csl_loss(LossKind kind, const GainMatrix& G, const VectorXd& pi,
                              FactorizeStrategy strategy, double distill_gamma,
                              const VectorXd& sms_alpha, const VectorXd& sms_beta) {
  switch (kind) {
    case LossKind::WeightedCE:
      return LossSpec::weighted(G);
    case LossKind::LogitAdjusted:
      return LossSpec::la(G);
    case LossKind::LogitAdjustedPairwise:
      return LossSpec::la_pairwise(G);
    case LossKind::Hybrid:
      return LossSpec::hybrid_loss(factorize(G, strategy, pi));
    case LossKind::Sms:
    case LossKind::SmsStar:
    case LossKind::SmsHybrid: {
      if (sms_alpha.size() == 0) {
        throw std::invalid_argument("reductions: SMS losses need a diag(alpha)+1 beta^T gain");
      }
      SmsParams p = SmsParams::calibrated(sms_alpha, sms_beta);
      SmsVariant v = kind == LossKind::Sms      ? SmsVariant::Plain
                     : kind == LossKind::SmsStar ? SmsVariant::Star
                                                 : SmsVariant::Hybrid;
      return LossSpec::sms_loss(p, v);
    }
    case LossKind::Distill: {
      DistillParams dp;
      dp.fac = factorize(G, strategy, pi);
      dp.gamma = distill_gamma;
      dp.teacher_prior = pi;
      return LossSpec::distill_loss(dp);
    }
    default:
      throw std::invalid_argument("reductions: unsupported CSL loss kind");
  }
}

inline MetricReport eval_on(const Model& model, const Dataset& data,
                            const GroupSpec* groups = nullptr) {
  std::vector<int> preds =
      model.is_tabular() ? predict_ids(model, *data.xids) : predict(model, data.features);
  ConfusionMatrix c = confusion(data.labels, preds, data.num_classes);
  return metrics_from(c, data.priors, nullptr, groups);
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Worst-case recall maximization. Alternates (a) an EG step on the multipliers
// driven by validation recalls with (b) a few warm-started SGD steps on the
// cost-sensitive loss for G = diag(lambda/pi). Returns the last iterate unless
// select_best asks for the best validation min-recall iterate.
// ----------------------------------------------------------------------------
inline ReductionResult solve_min_recall(const Dataset& train, const Dataset& val,
                                        const ReductionConfig& cfg, const Model& init) {
  cfg.validate();
  train.validate();
  val.validate();
  const int m = train.num_classes;
  const VectorXd pi = cfg.priors_override.size() ? cfg.priors_override : train.priors;
  const bool grouped = cfg.groups.has_value();
  if (grouped) cfg.groups->validate(m);

  ProblemSpec pspec;
  pspec.kind = grouped ? ProblemKind::GroupedMinRecall : ProblemKind::MinRecall;
  pspec.groups = cfg.groups;

  MultiplierState lambda = MultiplierState::simplex_uniform(grouped ? 2 : m, cfg.omega);
  SgdTrainer trainer(init, cfg.train, train.size());
  ReductionResult out;
  double best_metric = -std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.outer_iters; ++t) {
    MetricReport rep = detail::eval_on(trainer.model(), val, grouped ? &*cfg.groups : nullptr);
    VectorXd recalls =
        grouped ? (VectorXd(2) << *rep.head_recall, *rep.tail_recall).finished() : rep.recall;
    double tracked = grouped ? *rep.min_group_recall : rep.min_recall;

    if (cfg.select_best && tracked > best_metric) {
      best_metric = tracked;
      out.model = trainer.model();
      out.selected_iter = t;
    }

    lambda = eg_update(lambda, recalls);
    GainMatrix G = build_gain(pspec, lambda.lambda, pi);
    // diagonal gain = diag(alpha) + 1 * 0^T for the SMS kinds
    LossSpec loss = detail::make_csl_loss(cfg.csl_loss, G, pi, cfg.strategy, cfg.distill_gamma,
                                          G.entries.diagonal(), VectorXd::Zero(m));

    TrajectoryPoint point;
    point.t = t;
    point.lambda = lambda.lambda;
    point.min_recall = tracked;
    point.avg_recall = rep.avg_recall;
    point.coverages = rep.coverage;
    out.trajectory.push_back(std::move(point));

    trainer.run_steps(loss, train, cfg.inner_steps);
    out.last_gain = G;
  }

  // final iterate competes too when selecting the best
  if (cfg.select_best) {
    MetricReport rep = detail::eval_on(trainer.model(), val, grouped ? &*cfg.groups : nullptr);
    double tracked = grouped ? *rep.min_group_recall : rep.min_recall;
    if (tracked > best_metric) {
      out.model = trainer.model();
      out.selected_iter = cfg.outer_iters;
    }
  } else {
    out.model = trainer.model();
    out.selected_iter = -1;
  }
  out.multipliers = lambda;
  return out;
}

// ----------------------------------------------------------------------------
// Coverage-constrained recall maximization. Projected-gradient updates on the
// multipliers driven by validation coverage vs. the supplied targets; the CSL
// step uses G = diag(1/pi) + 1 lambda^T (or the balanced-coverage row with
// (1/pi) lambda^T). select_best keeps the feasible iterate with the highest
// average recall.
// ----------------------------------------------------------------------------
inline ReductionResult solve_coverage(const Dataset& train, const Dataset& val,
                                      const ReductionConfig& cfg, const Model& init) {
  cfg.validate();
  train.validate();
  val.validate();
  const int m = train.num_classes;
  if (cfg.coverage_targets.size() != m) {
    throw std::invalid_argument("solve_coverage: coverage targets must be supplied per class");
  }
  const VectorXd pi = cfg.priors_override.size() ? cfg.priors_override : train.priors;

  ProblemSpec pspec;
  pspec.kind = cfg.balanced_gain ? ProblemKind::BalancedCoverageConstrained
                                 : ProblemKind::CoverageConstrained;
  pspec.use_m_scaling = cfg.use_m_scaling;

  MultiplierState lambda = MultiplierState::nonneg_zeros(m, cfg.omega);
  SgdTrainer trainer(init, cfg.train, train.size());
  ReductionResult out;
  double best_metric = -std::numeric_limits<double>::infinity();

  auto feasible = [&](const MetricReport& rep) {
    return (rep.coverage.array() >= cfg.coverage_targets.array()).all();
  };

  for (int t = 0; t < cfg.outer_iters; ++t) {
    MetricReport rep = detail::eval_on(trainer.model(), val);

    if (cfg.select_best && feasible(rep) && rep.avg_recall > best_metric) {
      best_metric = rep.avg_recall;
      out.model = trainer.model();
      out.selected_iter = t;
    }

    lambda = pg_update(lambda, rep.coverage, cfg.coverage_targets);
    GainMatrix G = build_gain(pspec, lambda.lambda, pi);
    VectorXd sms_alpha;  // row-5 gains have no diag(alpha)+1 beta^T structure
    if (!cfg.balanced_gain) {
      sms_alpha = pi.cwiseInverse();
      if (cfg.use_m_scaling) sms_alpha /= static_cast<double>(m);
    }
    LossSpec loss = detail::make_csl_loss(cfg.csl_loss, G, pi, cfg.strategy, cfg.distill_gamma,
                                          sms_alpha, lambda.lambda);

    TrajectoryPoint point;
    point.t = t;
    point.lambda = lambda.lambda;
    point.min_recall = rep.min_recall;
    point.avg_recall = rep.avg_recall;
    point.coverages = rep.coverage;
    out.trajectory.push_back(std::move(point));

    trainer.run_steps(loss, train, cfg.inner_steps);
    out.last_gain = G;
  }

  if (cfg.select_best) {
    MetricReport rep = detail::eval_on(trainer.model(), val);
    if (feasible(rep) && rep.avg_recall > best_metric) {
      out.model = trainer.model();
      out.selected_iter = cfg.outer_iters;
      best_metric = rep.avg_recall;
    }
    if (out.selected_iter < 0) {
      // nothing feasible: fall back to the last iterate
      out.model = trainer.model();
      out.selected_iter = -1;
    }
  } else {
    out.model = trainer.model();
    out.selected_iter = -1;
  }
  out.multipliers = lambda;
  return out;
}

// ----------------------------------------------------------------------------
// Post-shifting. Given class-probability estimates eta on a validation set,
// walk the same EG dynamics over diagonal gains and classify by
// argmax_i (G^T eta)_i; return the iterate with the best validation
// min-recall. The t = 0 iterate uses uniform multipliers, i.e. the
// prior-adjusted classifier argmax eta_y / pi_y.
// ----------------------------------------------------------------------------
struct PostShiftResult {
  GainMatrix gain;
  VectorXd lambda;
  std::vector<int> predictions;  // best iterate's predictions on the validation set
  double min_recall = 0.0;
  int best_iter = 0;
  std::vector<TrajectoryPoint> trajectory;
};

inline PostShiftResult post_shift(const MatrixXd& eta, const std::vector<int>& labels,
                                  const VectorXd& pi, double omega, int iters) {
  if (iters < 1) throw std::invalid_argument("post_shift: need at least one iteration");
  if (eta.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("post_shift: eta/label count mismatch");
  }
  const int m = static_cast<int>(eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    check_simplex(eta.row(i), 1e-6, "post_shift: eta row " + std::to_string(i));
  }
  VectorXd eval_pi = Dataset::empirical_priors(labels, m);
  check_positive(eval_pi, "post_shift: every class needs validation examples");

  ProblemSpec pspec;
  pspec.kind = ProblemKind::MinRecall;
  MultiplierState lambda = MultiplierState::simplex_uniform(m, omega);

  PostShiftResult out;
  out.min_recall = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < iters; ++t) {
    GainMatrix G = build_gain(pspec, lambda.lambda, pi);
    std::vector<int> preds(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      preds[i] = argmax_lowest(G.entries.transpose() * eta.row(i).transpose());
    }
    ConfusionMatrix c = confusion(labels, preds, m);
    MetricReport rep = metrics_from(c, eval_pi);

    TrajectoryPoint point;
    point.t = t;
    point.lambda = lambda.lambda;
    point.min_recall = rep.min_recall;
    point.avg_recall = rep.avg_recall;
    point.coverages = rep.coverage;
    out.trajectory.push_back(std::move(point));

    if (rep.min_recall > out.min_recall) {  // strict: earliest best iterate wins ties
      out.min_recall = rep.min_recall;
      out.best_iter = t;
      out.gain = G;
      out.lambda = lambda.lambda;
      out.predictions = preds;
    }
    lambda = eg_update(lambda, rep.recall);
  }
  return out;
}

/// Applies a post-shift gain to fresh probability estimates.
inline std::vector<int> post_shift_classify(const GainMatrix& G, const MatrixXd& eta) {
  std::vector<int> preds(eta.rows());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    preds[i] = argmax_lowest(G.entries.transpose() * eta.row(i).transpose());
  }
  return preds;
}

// ----------------------------------------------------------------------------
// Distillation pipeline: ERM teacher -> tempered soft labels and teacher
// priors -> distilled student reduction, sweeping gamma on validation
// min-recall. Gain matrices inside the student runs use the teacher priors.
// ----------------------------------------------------------------------------

/// Temperature-scaled softmax rows of a score matrix.
inline MatrixXd tempered_softmax(const MatrixXd& scores, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("tempered_softmax: temperature <= 0");
  MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out.row(i) = softmax(scores.row(i) / temperature);
  }
  return out;
}

struct DistillPipelineConfig {
  TrainConfig teacher_train;
  double temperature = 3.0;
  std::vector<double> gamma_sweep = {0.1, 0.2, 0.3, 0.4, 0.5};
  LossKind student_loss = LossKind::Distill;  // label losses train z-weighted
  ReductionConfig reduction;                  // min-recall reduction settings
};

struct DistillGammaResult {
  double gamma = 0.0;
  double val_min_recall = 0.0;
  ReductionResult reduction;
};

struct DistillPipelineResult {
  Model teacher;
  VectorXd teacher_priors;
  std::vector<DistillGammaResult> sweep;
  int chosen = 0;                    // index into sweep
  double baseline_val_min_recall = 0.0;  // hard-label student with the same budget
};

inline DistillPipelineResult distill_pipeline(const Dataset& train, const Dataset& val,
                                              const DistillPipelineConfig& cfg,
                                              const Model& teacher_init,
                                              const Model& student_init) {
  DistillPipelineResult out;
  out.teacher = sgd_train(teacher_init, LossSpec::standard_ce(train.num_classes), train,
                          cfg.teacher_train);

  MatrixXd z = tempered_softmax(out.teacher.score_batch(train.features), cfg.temperature);
  out.teacher_priors = z.colwise().mean();

  Dataset distilled = train;
  distilled.teacher = z;

  // hard-label baseline with the same reduction budget
  ReductionConfig base_cfg = cfg.reduction;
  base_cfg.csl_loss = LossKind::LogitAdjusted;
  base_cfg.train.distill = false;
  ReductionResult baseline = solve_min_recall(train, val, base_cfg, student_init);
  out.baseline_val_min_recall = detail::eval_on(baseline.model, val).min_recall;

  ReductionConfig student_cfg = cfg.reduction;
  student_cfg.csl_loss = cfg.student_loss;
  student_cfg.priors_override = out.teacher_priors;
  student_cfg.train.distill = true;

  std::vector<double> gammas = cfg.gamma_sweep.empty() ? std::vector<double>{0.0}
                                                       : cfg.gamma_sweep;
  if (cfg.student_loss != LossKind::Distill) gammas = {0.0};  // gamma only enters the distill loss
  double best = -std::numeric_limits<double>::infinity();
  for (double gamma : gammas) {
    student_cfg.distill_gamma = gamma;
    DistillGammaResult r;
    r.gamma = gamma;
    r.reduction = solve_min_recall(distilled, val, student_cfg, student_init);
    r.val_min_recall = detail::eval_on(r.reduction.model, val).min_recall;
    if (r.val_min_recall > best) {
      best = r.val_min_recall;
      out.chosen = static_cast<int>(out.sweep.size());
    }
    out.sweep.push_back(std::move(r));
  }
  return out;
}

}  // namespace cslearn
