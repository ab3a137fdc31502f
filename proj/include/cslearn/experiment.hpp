#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslearn/config.hpp"
#include "cslearn/dataset.hpp"
#include "cslearn/reductions.hpp"
#include "cslearn/synth.hpp"
#include "cslearn/train.hpp"

namespace cslearn {

// ============================================================================
// Experiment orchestration: one task per process, outputs written to a
// directory as metrics.json, confusion.csv, trajectory.jsonl and model.json.
// Identical configs produce byte-identical outputs except for the timestamp
// field in metrics.json.
// ============================================================================

enum class Task { Erm, LaPriors, MinRecall, Coverage, PostShift, Distill };

inline Task task_from_name(const std::string& name) {
  if (name == "erm") return Task::Erm;
  if (name == "la_priors") return Task::LaPriors;
  if (name == "minrecall") return Task::MinRecall;
  if (name == "coverage") return Task::Coverage;
  if (name == "postshift") return Task::PostShift;
  if (name == "distill") return Task::Distill;
  throw std::invalid_argument("unknown task: " + name);
}

inline const char* task_name(Task t) {
  switch (t) {
    case Task::Erm: return "erm";
    case Task::LaPriors: return "la_priors";
    case Task::MinRecall: return "minrecall";
    case Task::Coverage: return "coverage";
    case Task::PostShift: return "postshift";
    case Task::Distill: return "distill";
  }
  return "?";
}

struct ExperimentConfig {
  Task task = Task::Erm;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // data: CSV paths when set, synthetic otherwise
  std::string train_csv, val_csv, test_csv;
  SynthSpec synth;

  // model
  std::string model_kind = "linear";  // linear | mlp
  int hidden = 64;

  TrainConfig train;
  ReductionConfig reduction;
  double coverage_factor = 0.95;  // targets = factor * validation priors

  // post-shift
  int postshift_iters = 200;
  bool oracle_eta = false;  // use the true posterior as eta (synthetic data only)

  // distillation
  double temperature = 3.0;
  std::vector<double> gamma_sweep = {0.1, 0.2, 0.3, 0.4, 0.5};
  LossKind student_loss = LossKind::Distill;

  bool uses_csv() const { return !train_csv.empty(); }
};

/// Reads an experiment config; CLI --seed / --out override the file.
inline ExperimentConfig load_experiment(const ConfigFile& file,
                                        std::optional<std::uint64_t> seed_override = {},
                                        std::optional<std::string> out_override = {}) {
  ExperimentConfig cfg;
  cfg.task = task_from_name(file.get_string("task", "erm"));
  cfg.seed = file.get_seed("seed", 1);
  cfg.out_dir = file.get_string("out", "out");

  cfg.train_csv = file.get_string("train_csv", "");
  cfg.val_csv = file.get_string("val_csv", "");
  cfg.test_csv = file.get_string("test_csv", "");
  if (!cfg.train_csv.empty() || !cfg.val_csv.empty() || !cfg.test_csv.empty()) {
    if (cfg.train_csv.empty() || cfg.val_csv.empty() || cfg.test_csv.empty()) {
      throw std::invalid_argument("config: CSV mode needs train_csv, val_csv and test_csv");
    }
    for (const std::string& p : {cfg.train_csv, cfg.val_csv, cfg.test_csv}) {
      if (!std::filesystem::exists(p)) {
        throw std::invalid_argument("config: referenced file does not exist: " + p);
      }
    }
  }

  cfg.synth.classes = file.get_int("classes", cfg.synth.classes);
  cfg.synth.dim = file.get_int("dim", cfg.synth.dim);
  cfg.synth.separation = file.get_double("separation", cfg.synth.separation);
  cfg.synth.sigma = file.get_double("sigma", cfg.synth.sigma);
  cfg.synth.imbalance = file.get_double("imbalance", cfg.synth.imbalance);
  cfg.synth.n_train = file.get_int("train_size", cfg.synth.n_train);
  cfg.synth.n_val = file.get_int("val_size", cfg.synth.n_val);
  cfg.synth.n_test = file.get_int("test_size", cfg.synth.n_test);
  cfg.synth.grid_points = file.get_int("grid_points", cfg.synth.grid_points);

  cfg.model_kind = file.get_string("model", "linear");
  if (cfg.model_kind != "linear" && cfg.model_kind != "mlp") {
    throw std::invalid_argument("config: model must be linear or mlp");
  }
  cfg.hidden = file.get_int("hidden", cfg.hidden);

  cfg.train.lr = file.get_double("lr", 0.1);
  cfg.train.momentum = file.get_double("momentum", 0.9);
  cfg.train.batch_size = file.get_int("batch_size", 128);
  cfg.train.steps = file.get_int("steps", 0);
  cfg.train.epochs = file.get_int("epochs", cfg.train.steps > 0 ? 0 : 10);

  cfg.reduction.outer_iters = file.get_int("outer_iters", 50);
  cfg.reduction.inner_steps = file.get_int("inner_steps", 32);
  cfg.reduction.omega = file.get_double("omega", 0.1);
  cfg.reduction.csl_loss = loss_kind_from_name(file.get_string(
      "csl_loss", cfg.task == Task::Coverage ? "hybrid" : "logit_adjusted"));
  std::string strat = file.get_string("factorization", "prior_inverse");
  if (strat == "prior_inverse") {
    cfg.reduction.strategy = FactorizeStrategy::PriorInverse;
  } else if (strat == "diagonal_of_g") {
    cfg.reduction.strategy = FactorizeStrategy::DiagonalOfG;
  } else {
    throw std::invalid_argument("config: factorization must be prior_inverse or diagonal_of_g");
  }
  cfg.reduction.balanced_gain = file.get_bool("balanced_gain", false);
  cfg.reduction.use_m_scaling = file.get_bool("use_m_scaling", false);
  cfg.reduction.select_best = file.get_bool("select_best", false);
  cfg.coverage_factor = file.get_double("coverage_factor", 0.95);

  cfg.postshift_iters = file.get_int("postshift_iters", 200);
  cfg.oracle_eta = file.get_bool("oracle_eta", false);

  cfg.temperature = file.get_double("temperature", 3.0);
  cfg.gamma_sweep = file.get_double_list("gamma_sweep", cfg.gamma_sweep);
  cfg.student_loss = loss_kind_from_name(file.get_string("student_loss", "distill"));

  if (seed_override) cfg.seed = *seed_override;
  cfg.out_dir = out_override.value_or(cfg.out_dir);
  cfg.synth.seed = cfg.seed;
  file.finish();
  return cfg;
}

namespace detail {

// Seed layout: data = seed, model init = seed + 1, trainer = seed + 2,
// teacher init/trainer = seed + 3 / + 4.
inline Model make_model(const ExperimentConfig& cfg, int d, int m, std::uint64_t salt) {
  Rng rng(cfg.seed + salt);
  if (cfg.model_kind == "mlp") return Model::mlp(d, cfg.hidden, m, rng);
  return Model::linear(d, m, rng);
}

struct LoadedData {
  Dataset train, val, test;
  std::optional<GaussianMixture> mixture;
};

inline LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.uses_csv()) {
    out.train = load_csv(cfg.train_csv);
    out.val = load_csv(cfg.val_csv);
    out.test = load_csv(cfg.test_csv);
    int m = std::max({out.train.num_classes, out.val.num_classes, out.test.num_classes});
    for (Dataset* d : {&out.train, &out.val, &out.test}) {
      if (d->num_classes != m) {
        d->num_classes = m;
        d->priors = Dataset::empirical_priors(d->labels, m);
      }
    }
  } else {
    SynthData synth = make_longtail(cfg.synth);
    out.train = std::move(synth.train);
    out.val = std::move(synth.val);
    out.test = std::move(synth.test);
    out.mixture = std::move(synth.mixture);
  }
  return out;
}

inline void append_metrics(nlohmann::ordered_json& j, const std::string& prefix,
                           const MetricReport& rep) {
  nlohmann::ordered_json flat = to_json(rep);
  for (auto& [key, value] : flat.items()) j[prefix + key] = value;
}

inline std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace detail

struct ExperimentOutput {
  nlohmann::ordered_json metrics;
  std::vector<TrajectoryPoint> trajectory;
  ConfusionMatrix test_confusion;
  Model model;
};

/// Runs the configured task. Pure apart from reading input CSVs; file output
/// happens in write_experiment_output.
inline ExperimentOutput execute_experiment(const ExperimentConfig& cfg) {
  detail::LoadedData data = detail::load_data(cfg);
  const int m = data.train.num_classes;
  const int d = data.train.dim();

  ExperimentOutput out;
  nlohmann::ordered_json& j = out.metrics;
  j["task"] = task_name(cfg.task);
  j["seed"] = cfg.seed;
  j["timestamp"] = detail::timestamp_utc();

  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed + 2;
  ReductionConfig red_cfg = cfg.reduction;
  red_cfg.train = train_cfg;

  Model init = detail::make_model(cfg, d, m, 1);

  auto finish_with_model = [&](const Model& model) {
    std::vector<int> train_preds = predict(model, data.train.features);
    ConfusionMatrix train_c = confusion(data.train.labels, train_preds, m);
    j["train_accuracy"] = train_c.entries.diagonal().sum();

    std::vector<int> test_preds = predict(model, data.test.features);
    out.test_confusion = confusion(data.test.labels, test_preds, m);
    detail::append_metrics(j, "test_", metrics_from(out.test_confusion, data.test.priors));
    out.model = model;
  };

  switch (cfg.task) {
    case Task::Erm: {
      Model model = sgd_train(init, LossSpec::standard_ce(m), data.train, train_cfg);
      finish_with_model(model);
      break;
    }
    case Task::LaPriors: {
      GainMatrix G = GainMatrix::diagonal(data.train.priors.cwiseInverse());
      Model model = sgd_train(init, LossSpec::la(G), data.train, train_cfg);
      finish_with_model(model);
      break;
    }
    case Task::MinRecall: {
      ReductionResult res = solve_min_recall(data.train, data.val, red_cfg, init);
      out.trajectory = res.trajectory;
      j["val_min_recall"] = detail::eval_on(res.model, data.val).min_recall;
      j["selected_iter"] = res.selected_iter;
      finish_with_model(res.model);
      break;
    }
    case Task::Coverage: {
      red_cfg.coverage_targets = cfg.coverage_factor * data.val.priors;
      ReductionResult res = solve_coverage(data.train, data.val, red_cfg, init);
      out.trajectory = res.trajectory;
      MetricReport val_rep = detail::eval_on(res.model, data.val);
      j["val_min_coverage"] = val_rep.coverage.minCoeff();
      j["val_avg_recall"] = val_rep.avg_recall;
      j["selected_iter"] = res.selected_iter;
      finish_with_model(res.model);
      break;
    }
    case Task::PostShift: {
      Model base = sgd_train(init, LossSpec::standard_ce(m), data.train, train_cfg);
      MatrixXd val_eta, test_eta;
      if (cfg.oracle_eta) {
        if (!data.mixture) {
          throw std::invalid_argument("postshift: oracle_eta requires synthetic data");
        }
        val_eta = data.mixture->posterior_batch(data.val.features);
        test_eta = data.mixture->posterior_batch(data.test.features);
      } else {
        val_eta = tempered_softmax(base.score_batch(data.val.features), 1.0);
        test_eta = tempered_softmax(base.score_batch(data.test.features), 1.0);
      }
      PostShiftResult ps = post_shift(val_eta, data.val.labels, data.train.priors,
                                      cfg.reduction.omega, cfg.postshift_iters);
      out.trajectory = ps.trajectory;
      j["val_min_recall"] = ps.min_recall;
      j["best_iter"] = ps.best_iter;

      std::vector<int> train_preds = predict(base, data.train.features);
      j["train_accuracy"] =
          confusion(data.train.labels, train_preds, m).entries.diagonal().sum();
      std::vector<int> test_preds = post_shift_classify(ps.gain, test_eta);
      out.test_confusion = confusion(data.test.labels, test_preds, m);
      detail::append_metrics(j, "test_", metrics_from(out.test_confusion, data.test.priors));
      out.model = base;
      break;
    }
    case Task::Distill: {
      DistillPipelineConfig dcfg;
      dcfg.teacher_train = train_cfg;
      dcfg.teacher_train.seed = cfg.seed + 4;
      dcfg.temperature = cfg.temperature;
      dcfg.gamma_sweep = cfg.gamma_sweep;
      dcfg.student_loss = cfg.student_loss;
      dcfg.reduction = red_cfg;
      Model teacher_init = detail::make_model(cfg, d, m, 3);
      DistillPipelineResult res =
          distill_pipeline(data.train, data.val, dcfg, teacher_init, init);

      nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
      nlohmann::ordered_json sweep_mr = nlohmann::ordered_json::array();
      for (const auto& g : res.sweep) {
        sweep.push_back(g.gamma);
        sweep_mr.push_back(g.val_min_recall);
      }
      j["gamma_sweep"] = sweep;
      j["sweep_val_min_recall"] = sweep_mr;
      j["chosen_gamma"] = res.sweep[res.chosen].gamma;
      j["baseline_val_min_recall"] = res.baseline_val_min_recall;
      j["student_val_min_recall"] = res.sweep[res.chosen].val_min_recall;

      const ReductionResult& best = res.sweep[res.chosen].reduction;
      out.trajectory = best.trajectory;
      finish_with_model(best.model);
      break;
    }
  }
  return out;
}

inline void write_experiment_output(const ExperimentConfig& cfg, const ExperimentOutput& out) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "metrics.json");
    f << out.metrics.dump(2) << '\n';
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "confusion.csv");
    f << to_csv(out.test_confusion);
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "trajectory.jsonl");
    for (const auto& point : out.trajectory) f << to_json(point).dump() << '\n';
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "model.json");
    f << to_json(out.model).dump(2) << '\n';
  }
}

/// Runs a task end to end, writing the four output files.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  ExperimentOutput out = execute_experiment(cfg);
  write_experiment_output(cfg, out);
  return out;
}

}  // namespace cslearn
