#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cslearn/config.hpp"
#include "cslearn/dataset.hpp"
#include "cslearn/experiment.hpp"
#include "cslearn/synth.hpp"

using namespace cslearn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("cslearn_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<int> class_counts(const Dataset& data) {
  std::vector<int> counts(data.num_classes, 0);
  for (int y : data.labels) counts[y] += 1;
  return counts;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

// ----------------------------------------------------------------------------
// long-tail generator
// ----------------------------------------------------------------------------

TEST_CASE("imbalance 1 gives uniform priors and near-equal class sizes") {
  SynthSpec spec;
  spec.classes = 4;
  spec.imbalance = 1.0;
  spec.n_train = 402;
  spec.n_val = 100;
  spec.n_test = 100;
  spec.seed = 1;
  SynthData data = make_longtail(spec);
  std::vector<int> counts = class_counts(data.train);
  int lo = *std::min_element(counts.begin(), counts.end());
  int hi = *std::max_element(counts.begin(), counts.end());
  CHECK(hi - lo <= 1);
}

TEST_CASE("imbalance 100 on ten classes is realized within count rounding") {
  SynthSpec spec;
  spec.classes = 10;
  spec.imbalance = 100.0;
  spec.n_train = 4000;
  spec.n_val = 500;
  spec.n_test = 500;
  spec.seed = 2;
  SynthData data = make_longtail(spec);

  VectorXd pi = longtail_priors(10, 100.0);
  CHECK(pi.maxCoeff() / pi.minCoeff() == Catch::Approx(100.0).margin(1e-9));

  std::vector<int> counts = class_counts(data.train);
  for (int i = 0; i < 10; ++i) {
    CHECK(std::abs(counts[i] - 4000 * pi[i]) <= 1.0);  // largest-remainder rounding
  }
  double ratio = double(*std::max_element(counts.begin(), counts.end())) /
                 double(*std::min_element(counts.begin(), counts.end()));
  double slack = 2.0 / *std::min_element(counts.begin(), counts.end());
  CHECK(ratio == Catch::Approx(100.0).epsilon(slack + 0.01));
}

TEST_CASE("validation and test splits are balanced within one count") {
  SynthSpec spec;
  spec.classes = 7;
  spec.imbalance = 50.0;
  spec.n_train = 700;
  spec.n_val = 150;
  spec.n_test = 151;
  spec.seed = 3;
  SynthData data = make_longtail(spec);
  for (const Dataset* split : {&data.val, &data.test}) {
    std::vector<int> counts = class_counts(*split);
    int lo = *std::min_element(counts.begin(), counts.end());
    int hi = *std::max_element(counts.begin(), counts.end());
    REQUIRE(hi - lo <= 1);
  }
}

TEST_CASE("grid conditionals are normalized and the mass sums to one") {
  SynthSpec spec;
  spec.classes = 5;
  spec.seed = 4;
  SynthData data = make_longtail(spec);
  for (int i = 0; i < data.grid.points(); ++i) {
    REQUIRE(std::abs(data.grid.probs.row(i).sum() - 1.0) <= 1e-12);
  }
  CHECK(std::abs(data.grid.mass.sum() - 1.0) <= 1e-12);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthSpec spec;
  spec.classes = 3;
  spec.n_train = 120;
  spec.n_val = 60;
  spec.n_test = 60;
  spec.seed = 99;
  SynthData a = make_longtail(spec);
  SynthData b = make_longtail(spec);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.grid.probs == b.grid.probs);
}

TEST_CASE("degenerate sigma is rejected") {
  SynthSpec spec;
  spec.sigma = 0.0;
  CHECK_THROWS_AS(make_longtail(spec), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// CSV round trips
// ----------------------------------------------------------------------------

TEST_CASE("dataset CSV round trip is exact") {
  fs::path dir = temp_dir("csv_roundtrip");
  MatrixXd x(2, 3);
  x << 0.1, -2.5e-7, 1.0 / 3.0, 4.0, 5.5, 1e17;
  Dataset data = Dataset::make(x, {0, 1}, 2);
  fs::path path = dir / "data.csv";
  save_csv(data, path.string());
  Dataset back = load_csv(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back.features == data.features);  // bit exact through 17 digits
  CHECK(back.labels == data.labels);
}

TEST_CASE("teacher columns survive the round trip and are validated") {
  fs::path dir = temp_dir("csv_teacher");
  MatrixXd x(2, 1);
  x << 0.5, -0.25;
  Dataset data = Dataset::make(x, {0, 1}, 2);
  MatrixXd teacher(2, 2);
  teacher << 0.25, 0.75, 0.9, 0.1;
  data.teacher = teacher;
  fs::path path = dir / "data.csv";
  save_csv(data, path.string());
  Dataset back = load_csv(path.string());
  REQUIRE(back.teacher.has_value());
  CHECK((*back.teacher - teacher).cwiseAbs().maxCoeff() <= 1e-15);

  // break the simplex constraint
  std::ofstream out(path);
  out << "f0,label,t0,t1\n0.5,1,0.9,0.4\n";
  out.close();
  CHECK_THROWS_AS(load_csv(path.string()), std::invalid_argument);
}

TEST_CASE("CSV parse errors carry line numbers and name the header") {
  fs::path dir = temp_dir("csv_errors");
  fs::path path = dir / "bad.csv";

  {
    std::ofstream out(path);
    out << "f0,f1\n1,2\n";  // no label column
  }
  try {
    load_csv(path.string());
    FAIL("expected header error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "f0,label\n0.5,1\noops,2\n";
  }
  try {
    load_csv(path.string());
    FAIL("expected row error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "f0,label\n0.5,0\n";  // labels are 1-based on disk
  }
  CHECK_THROWS_AS(load_csv(path.string()), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// config files
// ----------------------------------------------------------------------------

TEST_CASE("config parses typed keys and rejects unknown ones") {
  ConfigFile cfg = ConfigFile::parse_string(
      "task = erm\n"
      "# a comment\n"
      "lr = 0.25\n"
      "steps = 40\n"
      "select_best = true\n"
      "gamma_sweep = 0.1,0.2\n");
  CHECK(cfg.get_string("task", "") == "erm");
  CHECK(cfg.get_double("lr", 0) == 0.25);
  CHECK(cfg.get_int("steps", 0) == 40);
  CHECK(cfg.get_bool("select_best", false));
  CHECK(cfg.get_double_list("gamma_sweep", {}) == std::vector<double>{0.1, 0.2});
  CHECK_NOTHROW(cfg.finish());

  ConfigFile extra = ConfigFile::parse_string("task = erm\nlrr = 0.1\n");
  extra.get_string("task", "");
  try {
    extra.finish();
    FAIL("expected unknown-key error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("lrr") != std::string::npos);
  }
}

TEST_CASE("config rejects duplicates and malformed values") {
  CHECK_THROWS_AS(ConfigFile::parse_string("a = 1\na = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(ConfigFile::parse_string("just a line\n"), std::invalid_argument);
  ConfigFile cfg = ConfigFile::parse_string("lr = fast\n");
  CHECK_THROWS_AS(cfg.get_double("lr", 0.0), std::invalid_argument);
}

TEST_CASE("experiment config validates referenced files") {
  ConfigFile cfg = ConfigFile::parse_string(
      "task = erm\ntrain_csv = /nonexistent/a.csv\nval_csv = /nonexistent/b.csv\n"
      "test_csv = /nonexistent/c.csv\n");
  CHECK_THROWS_AS(load_experiment(cfg), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// experiment runner
// ----------------------------------------------------------------------------

namespace {

ExperimentConfig small_experiment(Task task, const fs::path& out, std::uint64_t seed) {
  ConfigFile file = ConfigFile::parse_string(
      "classes = 3\n"
      "dim = 2\n"
      "separation = 3.0\n"
      "sigma = 0.4\n"
      "imbalance = 5\n"
      "train_size = 240\n"
      "val_size = 120\n"
      "test_size = 120\n"
      "steps = 200\n"
      "lr = 0.3\n"
      "batch_size = 32\n"
      "outer_iters = 5\n"
      "inner_steps = 10\n"
      "postshift_iters = 20\n");
  ExperimentConfig cfg = load_experiment(file, seed, out.string());
  cfg.task = task;
  return cfg;
}

}  // namespace

TEST_CASE("ERM on separable data reports full training accuracy") {
  fs::path dir = temp_dir("erm");
  ExperimentConfig cfg = small_experiment(Task::Erm, dir, 11);
  ExperimentOutput out = run_experiment(cfg);
  CHECK(out.metrics["train_accuracy"].get<double>() == Catch::Approx(1.0));
  CHECK(fs::exists(dir / "metrics.json"));
  CHECK(fs::exists(dir / "confusion.csv"));
  CHECK(fs::exists(dir / "trajectory.jsonl"));
  CHECK(fs::exists(dir / "model.json"));
}

TEST_CASE("min-recall task writes exactly T trajectory lines") {
  fs::path dir = temp_dir("minrecall");
  ExperimentConfig cfg = small_experiment(Task::MinRecall, dir, 13);
  run_experiment(cfg);
  std::string text = read_file(dir / "trajectory.jsonl");
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 5);
}

TEST_CASE("repeated runs are byte-identical apart from the timestamp") {
  fs::path dir_a = temp_dir("det_a");
  fs::path dir_b = temp_dir("det_b");
  run_experiment(small_experiment(Task::MinRecall, dir_a, 17));
  run_experiment(small_experiment(Task::MinRecall, dir_b, 17));

  nlohmann::ordered_json a = nlohmann::ordered_json::parse(read_file(dir_a / "metrics.json"));
  nlohmann::ordered_json b = nlohmann::ordered_json::parse(read_file(dir_b / "metrics.json"));
  a.erase("timestamp");
  b.erase("timestamp");
  CHECK(a.dump() == b.dump());

  CHECK(read_file(dir_a / "confusion.csv") == read_file(dir_b / "confusion.csv"));
  CHECK(read_file(dir_a / "trajectory.jsonl") == read_file(dir_b / "trajectory.jsonl"));
  CHECK(read_file(dir_a / "model.json") == read_file(dir_b / "model.json"));
}

TEST_CASE("postshift with oracle probabilities runs end to end") {
  fs::path dir = temp_dir("postshift");
  ExperimentConfig cfg = small_experiment(Task::PostShift, dir, 19);
  cfg.oracle_eta = true;
  ExperimentOutput out = run_experiment(cfg);
  CHECK(out.metrics["val_min_recall"].get<double>() > 0.5);
}
