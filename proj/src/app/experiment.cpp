#include "leaffed/experiment.hpp"

#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>

#include "leaffed/augment.hpp"
#include "leaffed/checkpoint.hpp"
#include "leaffed/image_io.hpp"
#include "leaffed/synthetic.hpp"
#include "leaffed/train.hpp"

namespace leaffed {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// status.json: the only artifact that carries timestamps.
class StatusFile {
 public:
  explicit StatusFile(fs::path dir) : path_(std::move(dir) / "status.json"), started_(utc_now()) {
    write("running", nullptr);
  }

  void enter(const std::string& stage) {
    stage_ = stage;
    write("running", nullptr);
  }
  void complete() { write("complete", nullptr); }
  void fail(const std::string& error) { write("failed", error); }

 private:
  void write(const char* status, const ojson& error) {
    ojson j;
    j["status"] = status;
    j["stage"] = stage_;
    j["error"] = error;
    j["started_at"] = started_;
    j["updated_at"] = utc_now();
    write_text(path_, j.dump(2) + "\n");
  }

  fs::path path_;
  std::string started_;
  std::string stage_;
};

template <typename Fn>
auto run_stage(StatusFile& status, const std::string& name, const Logger& log, Fn&& fn) {
  status.enter(name);
  if (log) log("[" + name + "]");
  try {
    return fn();
  } catch (const StageError& e) {
    status.fail(e.what());
    throw;
  } catch (const std::exception& e) {
    StageError error(name, e.what());
    status.fail(error.what());
    throw error;
  }
}

ojson split_summary(const Dataset& ds) { return {{"samples", ds.size()}, {"class_counts", ds.class_counts()}}; }

std::string manifest_json(const PreparedData& data) {
  ojson j;
  j["dataset"] = ojson::parse(dataset_manifest(data.full));
  j["splits"] = {{"train", split_summary(data.splits.train)},
                 {"val", split_summary(data.splits.val)},
                 {"test", split_summary(data.splits.test)}};
  std::size_t augmented = 0;
  for (const auto& a : data.splits.train.augmentation) augmented += a.has_value() ? 1 : 0;
  j["augmented_train_samples"] = augmented;
  return j.dump(2) + "\n";
}

std::string variant_name(const ModelSpec& spec) { return spec.backbone + (spec.deep_block ? "+deep_block" : ""); }

std::string search_json(const ArchitectureSearchResult& s) {
  ojson j;
  j["model"] = ojson::parse(s.choice.model.to_json());
  j["learning_rate"] = s.choice.optimizer.learning_rate;
  j["fitness"] = *s.search.best.fitness;
  j["generations"] = s.search.log.size() - 1;
  j["trainings"] = s.trainings;
  return j.dump(2) + "\n";
}

ArchitectureSearchResult search_stage(const MaoConfig& mao, const ModelSpec& base, const OptimizerConfig& optimizer,
                                      const PreparedData& data, const fs::path& dir, const Logger& log) {
  std::ofstream lines(dir / "mao.jsonl", std::ios::binary | std::ios::trunc);
  const GeneLayout layout = architecture_layout();
  auto result = run_architecture_search(mao, base, optimizer, data.splits.train, data.splits.val,
                                        [&](const GenerationRecord& g) {
                                          lines << generation_jsonl(g, layout) << std::flush;
                                          if (log) {
                                            log("generation " + std::to_string(g.generation) + " best " +
                                                format_metric(g.best_fitness) + " mean " +
                                                format_metric(g.mean_fitness));
                                          }
                                        });
  if (!lines) throw Error("cannot write " + (dir / "mao.jsonl").string());
  write_text(dir / "mao_best.json", search_json(result));
  if (log) log("selected " + variant_name(result.choice.model));
  return result;
}

PreparedData data_stage(const ExperimentConfig& config, const fs::path& dir) {
  PreparedData data = prepare_data(config.data);
  write_text(dir / "manifest.json", manifest_json(data));
  return data;
}

}  // namespace

PreparedData prepare_data(const DataConfig& config) {
  PreparedData out;
  out.full = config.source == DataSource::synthetic ? generate_synthetic_dataset(config.synthetic)
                                                    : load_dataset(config.directory, config.height, config.width);
  out.splits = split_dataset(out.full, config.split);
  if (config.augment) out.splits.train = balance_with_augmentation(out.splits.train, *config.augment);
  return out;
}

ModelSpec model_for_data(const ModelSpec& spec, const Dataset& data) {
  ModelSpec out = spec;
  out.height = data.height();
  out.width = data.width();
  out.channels = data.channels();
  out.classes = data.class_count();
  out.validate();
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  StatusFile status(dir);
  write_text(dir / "config.json", experiment_config_json(config));

  const PreparedData data = run_stage(status, "data", log, [&] {
    PreparedData d = data_stage(config, dir);
    if (config.export_test_split) {
      fs::remove_all(dir / "test_split");
      write_dataset(d.splits.test, dir / "test_split");
    }
    return d;
  });

  ModelSpec spec = run_stage(status, "model", log, [&] { return model_for_data(config.model, data.full); });
  OptimizerConfig optimizer = config.federation.optimizer;
  std::optional<ArchitectureSearchResult> search;
  if (config.mao) {
    search = run_stage(status, "search", log, [&] { return search_stage(*config.mao, spec, optimizer, data, dir, log); });
    spec = search->choice.model;
    optimizer = search->choice.optimizer;
  }

  std::vector<RoundReport> rounds;
  const Model model = run_stage(status, "federated", log, [&] {
    FederationConfig fed = config.federation;
    fed.optimizer = optimizer;
    std::ofstream lines(dir / "rounds.jsonl", std::ios::binary | std::ios::trunc);
    auto fr = run_federation(Model(spec), data.splits.train, data.splits.val, fed, [&](const RoundReport& r) {
      lines << round_jsonl(r) << std::flush;
      if (log) {
        log("round " + std::to_string(r.round) + "/" + std::to_string(fed.rounds) + " val acc " +
            format_metric(r.global_val_accuracy.value_or(0.0)) + " val f1 " +
            format_metric(r.global_val_f1.value_or(0.0)));
      }
    });
    if (!lines) throw Error("cannot write " + (dir / "rounds.jsonl").string());
    rounds = std::move(fr.history);
    return std::move(fr.global);
  });

  const auto& names = data.full.class_names;
  auto [train_report, test_report] = run_stage(status, "evaluate", log, [&] {
    const auto& test = data.splits.test;
    const auto& train = data.splits.train;
    auto te = evaluate_scores(predict_probabilities(model, test), test.labels, spec.classes, config.averaging);
    auto tr = evaluate_scores(predict_probabilities(model, train), train.labels, spec.classes, config.averaging);
    write_text(dir / "metrics.json", metrics_json(tr, te, names));
    write_text(dir / "metrics.csv", report_csv_header() + report_csv_row(variant_name(spec), te));
    if (log) {
      log("test accuracy " + format_metric(te.accuracy) + " f1 " + format_metric(te.f1) + " kappa " +
          format_metric(te.kappa));
    }
    return std::pair{std::move(tr), std::move(te)};
  });

  run_stage(status, "checkpoint", log, [&] { save_checkpoint(model, dir / "model.fsyn"); });
  status.complete();
  return ExperimentResult{dir,    model,         optimizer, std::move(search), std::move(rounds), std::move(train_report),
                          std::move(test_report), names};
}

ArchitectureSearchResult run_search(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  StatusFile status(dir);
  write_text(dir / "config.json", experiment_config_json(config));
  const PreparedData data = run_stage(status, "data", log, [&] { return data_stage(config, dir); });
  const ModelSpec spec = run_stage(status, "model", log, [&] { return model_for_data(config.model, data.full); });
  MaoConfig mao;
  mao.seed = config.seed;
  if (config.mao) mao = *config.mao;
  auto result = run_stage(status, "search", log,
                          [&] { return search_stage(mao, spec, config.federation.optimizer, data, dir, log); });
  status.complete();
  return result;
}

AblationResult run_ablation(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  StatusFile status(dir);
  write_text(dir / "config.json", experiment_config_json(config));

  ExperimentConfig base = config;
  base.mao.reset();
  base.model.deep_block.reset();
  base.output_dir = dir / "baseline";
  ExperimentConfig deep = base;
  deep.model.deep_block = config.model.deep_block.value_or(DeepBlockSpec{});
  deep.output_dir = dir / "deep_block";

  AblationResult out{dir, run_stage(status, "baseline", log, [&] { return run_experiment(base, log); }),
                     run_stage(status, "deep_block", log, [&] { return run_experiment(deep, log); })};

  run_stage(status, "report", log, [&] {
    const auto& names = out.baseline.class_names;
    write_text(dir / "ablation.csv", report_csv_header() + report_csv_row("baseline", out.baseline.test) +
                                         report_csv_row("deep_block", out.deep_block.test));
    const std::vector<std::pair<std::string, const MetricsReport*>> variants{
        {"baseline", &out.baseline.test}, {"deep_block", &out.deep_block.test}};
    write_text(dir / "per_class.csv", per_class_csv(variants, names));
    write_text(dir / "per_class_delta.csv", per_class_delta_csv(out.baseline.test, out.deep_block.test, names));

    ojson j;
    for (const auto* r : {&out.baseline, &out.deep_block}) {
      ojson v;
      v["model"] = ojson::parse(r->model.spec().to_json());
      v["parameters"] = r->model.parameter_count();
      v["accuracy"] = r->test.accuracy;
      v["f1"] = r->test.f1;
      v["kappa"] = r->test.kappa;
      j[r == &out.baseline ? "baseline" : "deep_block"] = v;
    }
    j["accuracy_delta"] = out.deep_block.test.accuracy - out.baseline.test.accuracy;
    write_text(dir / "ablation.json", j.dump(2) + "\n");
    if (log) {
      log("baseline accuracy " + format_metric(out.baseline.test.accuracy) + ", deep_block accuracy " +
          format_metric(out.deep_block.test.accuracy));
    }
  });
  status.complete();
  return out;
}

CheckpointEvaluation evaluate_checkpoint(const fs::path& checkpoint, const fs::path& dataset_dir,
                                         Averaging averaging) {
  const Model model = load_checkpoint(checkpoint);
  const ModelSpec& spec = model.spec();
  const Dataset ds = load_dataset(dataset_dir, spec.height, spec.width);
  if (ds.channels() != spec.channels) {
    throw ValidationError("dataset images have " + std::to_string(ds.channels()) + " channels but the model expects " +
                          std::to_string(spec.channels));
  }
  if (ds.class_count() != spec.classes) {
    throw ValidationError("dataset has " + std::to_string(ds.class_count()) + " classes but the model predicts " +
                          std::to_string(spec.classes));
  }
  return {spec, ds.class_names, evaluate_scores(predict_probabilities(model, ds), ds.labels, spec.classes, averaging)};
}

std::string metrics_json(const MetricsReport& train, const MetricsReport& test,
                         std::span<const std::string> class_names) {
  ojson j;
  j["test"] = ojson::parse(report_json(test, class_names));
  j["train"] = ojson::parse(report_json(train, class_names));
  j["generalization_gap"] = {{"accuracy", train.accuracy - test.accuracy}, {"f1", train.f1 - test.f1}};
  return j.dump(2) + "\n";
}

std::string per_class_csv(std::span<const std::pair<std::string, const MetricsReport*>> variants,
                          std::span<const std::string> class_names) {
  std::string out = "variant,class,precision,recall,f1,support\n";
  for (const auto& [name, report] : variants) {
    for (std::size_t c = 0; c < report->per_class.size(); ++c) {
      const auto& m = report->per_class[c];
      out += name + "," + (c < class_names.size() ? class_names[c] : std::to_string(c)) + "," +
             format_metric(m.precision) + "," + format_metric(m.recall) + "," + format_metric(m.f1) + "," +
             std::to_string(m.support) + "\n";
    }
  }
  return out;
}

std::string per_class_delta_csv(const MetricsReport& before, const MetricsReport& after,
                                std::span<const std::string> class_names) {
  if (before.per_class.size() != after.per_class.size()) {
    throw ValidationError("reports cover different class counts");
  }
  std::string out = "class,precision_delta,recall_delta,f1_delta\n";
  for (std::size_t c = 0; c < before.per_class.size(); ++c) {
    const auto& a = before.per_class[c];
    const auto& b = after.per_class[c];
    out += (c < class_names.size() ? class_names[c] : std::to_string(c)) + "," +
           format_metric(b.precision - a.precision) + "," + format_metric(b.recall - a.recall) + "," +
           format_metric(b.f1 - a.f1) + "\n";
  }
  return out;
}

}  // namespace leaffed
