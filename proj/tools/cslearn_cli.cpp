// Command-line front end: synthesize data, train baselines, run the
// reduction algorithms, post-shift, distill, and run the verification
// suites. One experiment per process; outputs land in --out.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cslearn/cslearn.hpp"
#include "cslearn/diagnostics.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", [&args](const CLI::results_t& res) {
    args.seed = std::stoull(res[0]);
    return true;
  }, "override the config seed");
  cmd->add_option("--out", [&args](const CLI::results_t& res) {
    args.out = res[0];
    return true;
  }, "override the output directory");
}

cslearn::ExperimentConfig load(const CommonArgs& args,
                               std::optional<cslearn::Task> task_override = {}) {
  cslearn::ConfigFile file = cslearn::ConfigFile::parse_file(args.config_path);
  cslearn::ExperimentConfig cfg = cslearn::load_experiment(file, args.seed, args.out);
  if (task_override) cfg.task = *task_override;
  return cfg;
}

int run_task(const CommonArgs& args, std::optional<cslearn::Task> task_override) {
  cslearn::ExperimentConfig cfg = load(args, task_override);
  cslearn::ExperimentOutput out = cslearn::run_experiment(cfg);
  std::cout << out.metrics.dump(2) << std::endl;
  return 0;
}

int run_gen(const CommonArgs& args) {
  cslearn::ExperimentConfig cfg = load(args);
  cslearn::SynthData data = cslearn::make_longtail(cfg.synth);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  cslearn::save_csv(data.train, (fs::path(cfg.out_dir) / "train.csv").string());
  cslearn::save_csv(data.val, (fs::path(cfg.out_dir) / "val.csv").string());
  cslearn::save_csv(data.test, (fs::path(cfg.out_dir) / "test.csv").string());
  {
    // true conditionals on the evaluation grid, one row per grid point
    std::ofstream f(fs::path(cfg.out_dir) / "grid_probs.csv");
    for (int j = 0; j < data.grid_points.cols(); ++j) f << 'f' << j << ',';
    for (int y = 0; y < data.grid.classes(); ++y) f << 'p' << y << (y + 1 < data.grid.classes() ? "," : "");
    f << ",mass\n";
    for (int i = 0; i < data.grid.points(); ++i) {
      for (int j = 0; j < data.grid_points.cols(); ++j) {
        f << cslearn::detail::format_double(data.grid_points(i, j)) << ',';
      }
      for (int y = 0; y < data.grid.classes(); ++y) {
        f << cslearn::detail::format_double(data.grid.probs(i, y)) << ',';
      }
      f << cslearn::detail::format_double(data.grid.mass[i]) << '\n';
    }
  }
  nlohmann::ordered_json j;
  j["train"] = data.train.size();
  j["val"] = data.val.size();
  j["test"] = data.test.size();
  j["classes"] = cfg.synth.classes;
  j["out"] = cfg.out_dir;
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int run_gradcheck(std::uint64_t seed, int draws) {
  cslearn::GradCheckReport report = cslearn::run_grad_suite(draws, seed);
  for (const auto& row : report.rows) {
    std::printf("%-7s %-24s draws=%d  worst_rel_err=%.3e\n",
                row.worst_rel_error <= report.tolerance ? "[pass]" : "[FAIL]",
                cslearn::loss_kind_name(row.kind), row.draws, row.worst_rel_error);
  }
  std::printf("gradcheck %s (tolerance %.0e, step %.0e)\n",
              report.pass() ? "PASSED" : "FAILED", report.tolerance, report.step);
  return report.pass() ? 0 : 1;
}

int run_calibcheck(std::uint64_t seed, int problems) {
  cslearn::CalibrationReport report = cslearn::run_calibration_suite(problems, seed);
  for (const auto& row : report.rows) {
    bool ok = row.argmax_mismatches == 0 && row.worst_softmax_error <= report.softmax_tol &&
              row.all_converged;
    std::printf("%-7s %-24s problems=%d points=%d mismatches=%d worst_softmax_err=%.3e%s\n",
                ok ? "[pass]" : "[FAIL]", row.family.c_str(), row.problems, row.points,
                row.argmax_mismatches, row.worst_softmax_error,
                row.all_converged ? "" : " (fit did not converge)");
  }
  std::printf("calibcheck %s (softmax tolerance %.0e)\n", report.pass() ? "PASSED" : "FAILED",
              report.softmax_tol);
  return report.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cost-sensitive learning toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, minrec_args, cov_args, ps_args, dis_args;
  std::uint64_t check_seed = 1;
  int gradcheck_draws = 200;
  int calibcheck_problems = 20;

  auto* gen = app.add_subcommand("gen", "synthesize a long-tail dataset to CSV");
  add_common(gen, gen_args);

  auto* train = app.add_subcommand("train", "train a baseline (task erm | la_priors)");
  add_common(train, train_args);

  auto* minrec = app.add_subcommand("reduce-minrecall", "maximize worst-case recall");
  add_common(minrec, minrec_args);

  auto* cov = app.add_subcommand("reduce-coverage", "maximize recall under coverage targets");
  add_common(cov, cov_args);

  auto* ps = app.add_subcommand("postshift", "post-shift a trained scorer");
  add_common(ps, ps_args);

  auto* dis = app.add_subcommand("distill", "self-distillation pipeline with a gamma sweep");
  add_common(dis, dis_args);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", check_seed, "random seed");
  gradcheck->add_option("--draws", gradcheck_draws, "draws per loss kind");

  auto* calibcheck = app.add_subcommand("calibcheck", "tabular-fit calibration suite");
  calibcheck->add_option("--seed", check_seed, "random seed");
  calibcheck->add_option("--problems", calibcheck_problems, "problems per loss family");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (train->parsed()) {
      cslearn::ExperimentConfig cfg = load(train_args);
      if (cfg.task != cslearn::Task::Erm && cfg.task != cslearn::Task::LaPriors) {
        throw std::invalid_argument("train: task must be erm or la_priors");
      }
      cslearn::ExperimentOutput out = cslearn::run_experiment(cfg);
      std::cout << out.metrics.dump(2) << std::endl;
      return 0;
    }
    if (minrec->parsed()) return run_task(minrec_args, cslearn::Task::MinRecall);
    if (cov->parsed()) return run_task(cov_args, cslearn::Task::Coverage);
    if (ps->parsed()) return run_task(ps_args, cslearn::Task::PostShift);
    if (dis->parsed()) return run_task(dis_args, cslearn::Task::Distill);
    if (gradcheck->parsed()) return run_gradcheck(check_seed, gradcheck_draws);
    if (calibcheck->parsed()) return run_calibcheck(check_seed, calibcheck_problems);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::cout << err.dump() << std::endl;
    return 1;
  }
  return 1;
}
