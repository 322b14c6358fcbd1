#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "leaffed/config.hpp"
#include "leaffed/experiment.hpp"
#include "leaffed/image_io.hpp"
#include "leaffed/synthetic.hpp"
#include "test_support.hpp"

using namespace leaffed;
using leaffed::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Three 8x8 classes, two clients, two rounds: about a second end to end.
ExperimentConfig small_config(const fs::path& out) {
  auto c = parse_experiment_config(R"({
    "seed": 3,
    "data": {"synthetic": {"classes": 3, "per_class": 30, "height": 8, "width": 8}},
    "model": {"backbone": "mlp-s", "hidden": 8, "deep_block": null},
    "federation": {"clients": 2, "rounds": 2, "batch_size": 8}
  })");
  c.output_dir = out;
  return c;
}

std::string config_error_path(std::string_view text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  FAIL("expected a config error for " << text);
  return {};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LEAFFED_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults") {
  const auto c = parse_experiment_config("{}");
  CHECK(c.seed == 42);
  CHECK(c.data.synthetic.classes == 8);
  CHECK(c.data.synthetic.per_class == 100);
  CHECK(c.data.split.train == doctest::Approx(0.7));
  CHECK(c.model.backbone == "cnn-s");
  CHECK(c.model.deep_block.has_value());
  CHECK(c.federation.clients == 5);
  CHECK(c.federation.rounds == 30);
  CHECK(c.federation.local_epochs == 1);
  CHECK(c.federation.batch_size == 32);
  CHECK(c.federation.optimizer.kind == OptimizerKind::adam);
  CHECK(c.federation.optimizer.learning_rate == doctest::Approx(0.001));
  CHECK_FALSE(c.mao.has_value());
  CHECK(c.averaging == Averaging::macro);
}

TEST_CASE("top-level seed flows into unset seeds") {
  const auto c = parse_experiment_config(R"({"seed": 9, "federation": {"seed": 4}})");
  CHECK(c.data.synthetic.seed == 9);
  CHECK(c.data.split.seed == 9);
  CHECK(c.model.seed == 9);
  CHECK(c.federation.seed == 4);
}

TEST_CASE("config json round trip") {
  for (const char* text : {"{}", R"({"mao": {"population": 5}, "model": {"deep_block": null}})",
                           R"({"data": {"augment": {"target_per_class": 120}}, "averaging": "weighted"})"}) {
    const std::string once = experiment_config_json(parse_experiment_config(text));
    CHECK(experiment_config_json(parse_experiment_config(once)) == once);
  }
  CHECK_FALSE(parse_experiment_config(R"({"model": {"deep_block": null}})").model.deep_block.has_value());
}

TEST_CASE("config errors name the field") {
  CHECK(config_error_path(R"({"model": {"backbone": "vgg"}})") == "model.backbone");
  CHECK(config_error_path(R"({"federation": {"clients": 0}})") == "federation.clients");
  CHECK(config_error_path(R"({"federation": {"clients": 2, "clients_per_round": 3}})") ==
        "federation.clients_per_round");
  CHECK(config_error_path(R"({"mao": {"tournament": 0}})") == "mao.tournament");
  CHECK(config_error_path(R"({"optimizer": {"learning_rate": -1}})") == "optimizer.learning_rate");
  CHECK(config_error_path(R"({"federation": {"rounds": "many"}})") == "federation.rounds");
  CHECK(config_error_path(R"({"federation": {"round": 3}})") == "federation.round");
  CHECK(config_error_path(R"({"data": {"source": "directory"}})") == "data.directory");
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
}

TEST_CASE("experiment artifacts and reproducibility") {
  TempDir a("app_a"), b("app_b");
  const auto ra = run_experiment(small_config(a.path()));
  const auto rb = run_experiment(small_config(b.path()));

  for (const char* f : {"config.json", "status.json", "manifest.json", "rounds.jsonl", "metrics.json", "metrics.csv",
                        "model.fsyn"}) {
    CHECK_MESSAGE(fs::exists(a.path() / f), f);
  }
  CHECK(fs::is_directory(a.path() / "test_split"));
  CHECK_FALSE(fs::exists(a.path() / "mao.jsonl"));

  for (const char* f : {"manifest.json", "rounds.jsonl", "metrics.json", "metrics.csv", "model.fsyn"}) {
    CHECK_MESSAGE(slurp(a.path() / f) == slurp(b.path() / f), f);
  }

  const auto status = nlohmann::json::parse(slurp(a.path() / "status.json"));
  CHECK(status["status"] == "complete");

  const auto manifest = nlohmann::json::parse(slurp(a.path() / "manifest.json"));
  CHECK(manifest["splits"]["train"]["samples"] == 63);
  CHECK(manifest["splits"]["val"]["samples"] == 9);
  CHECK(manifest["splits"]["test"]["samples"] == 18);

  std::istringstream rounds(slurp(a.path() / "rounds.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(rounds, line)) {
    // One line per participating client per round.
    const auto j = nlohmann::json::parse(line);
    CHECK(j["round"] == 1 + n / 2);
    CHECK(j["client_id"] == n % 2);
    ++n;
  }
  CHECK(n == 4);
  CHECK(ra.rounds.size() == 2);

  const auto metrics = nlohmann::json::parse(slurp(a.path() / "metrics.json"));
  CHECK(metrics["test"]["accuracy"].get<double>() == ra.test.accuracy);
  CHECK(metrics["generalization_gap"]["accuracy"].get<double>() ==
        doctest::Approx(ra.train.accuracy - ra.test.accuracy));
  CHECK(rb.test.f1 == ra.test.f1);
}

TEST_CASE("checkpoint evaluation reproduces the test metrics") {
  TempDir dir("app_eval");
  const auto r = run_experiment(small_config(dir.path()));
  const auto ev = evaluate_checkpoint(dir.path() / "model.fsyn", dir.path() / "test_split");
  CHECK(ev.class_names == r.class_names);
  CHECK(ev.report.accuracy == r.test.accuracy);
  CHECK(ev.report.f1 == r.test.f1);
  CHECK(ev.report.kappa == r.test.kappa);

  // An unseen domain from a different generator seed still scores.
  SyntheticSpec other{.classes = 3, .per_class = 10, .height = 8, .width = 8, .seed = 1234};
  write_dataset(generate_synthetic_dataset(other), dir.path() / "other");
  const auto ev2 = evaluate_checkpoint(dir.path() / "model.fsyn", dir.path() / "other");
  CHECK(ev2.report.per_class.size() == 3);
  CHECK(ev2.report.accuracy >= 0.0);

  other.classes = 4;
  write_dataset(generate_synthetic_dataset(other), dir.path() / "four");
  CHECK_THROWS_AS(evaluate_checkpoint(dir.path() / "model.fsyn", dir.path() / "four"), ValidationError);
}

TEST_CASE("a failing stage is recorded") {
  TempDir dir("app_fail");
  fs::create_directories(dir.path() / "data" / "a");
  std::ofstream(dir.path() / "data" / "a" / "broken.pgm") << "P5\n8 8\n255\n";
  ExperimentConfig c = small_config(dir.path() / "run");
  c.data.source = DataSource::directory;
  c.data.directory = dir.path() / "data";
  try {
    run_experiment(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "data");
    CHECK(std::string(e.what()).rfind("stage data: ", 0) == 0);
  }
  const auto status = nlohmann::json::parse(slurp(dir.path() / "run" / "status.json"));
  CHECK(status["status"] == "failed");
  CHECK(status["stage"] == "data");
}

TEST_CASE("search artifacts") {
  TempDir dir("app_mao");
  ExperimentConfig c = small_config(dir.path());
  MaoConfig mao;
  mao.population = 5;
  mao.generations = 1;
  mao.local_search_budget = 2;
  mao.seed = 3;
  c.mao = mao;
  const auto r = run_experiment(c);
  REQUIRE(r.search.has_value());
  CHECK(r.model.spec() == r.search->choice.model);
  CHECK(fs::exists(dir.path() / "mao_best.json"));
  std::istringstream lines(slurp(dir.path() / "mao.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) CHECK(nlohmann::json::parse(line)["generation"] == n++);
  CHECK(n == 2);
}

TEST_CASE("ablation reports") {
  TempDir dir("app_ablate");
  const auto r = run_ablation(small_config(dir.path()));
  CHECK_FALSE(r.baseline.model.spec().deep_block.has_value());
  CHECK(r.deep_block.model.spec().deep_block.has_value());
  CHECK(r.deep_block.model.parameter_count() > r.baseline.model.parameter_count());

  std::istringstream ablation(slurp(dir.path() / "ablation.csv"));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(ablation, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].rfind("baseline,", 0) == 0);
  CHECK(rows[2].rfind("deep_block,", 0) == 0);

  std::istringstream per_class(slurp(dir.path() / "per_class.csv"));
  int n = 0;
  while (std::getline(per_class, line)) ++n;
  CHECK(n == 1 + 2 * 3);

  const auto j = nlohmann::json::parse(slurp(dir.path() / "ablation.json"));
  CHECK(j["accuracy_delta"].get<double>() == doctest::Approx(r.deep_block.test.accuracy - r.baseline.test.accuracy));
}

TEST_CASE("cli exit codes") {
  TempDir dir("app_cli");
  const fs::path bad = dir.path() / "bad.json";
  std::ofstream(bad) << R"({"federation": {"clients": 0}})";
  CHECK(run_cli("run -c " + bad.string()) == 2);
  CHECK(run_cli("init-config -o " + (dir.path() / "default.json").string()) == 0);
  CHECK(parse_experiment_config(slurp(dir.path() / "default.json")).model.backbone == "cnn-s");
  CHECK(run_cli("-q gen-data --classes 2 --per-class 3 --height 8 --width 8 -o " + (dir.path() / "gen").string()) ==
        0);
  CHECK(load_dataset(dir.path() / "gen", 8, 8).size() == 6);
  CHECK(run_cli("-q gen-data -o " + (dir.path() / "gen").string()) == 1);
  CHECK(run_cli("evaluate") != 0);
}
