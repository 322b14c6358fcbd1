#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/architecture_search.hpp"
#include "leaffed/config.hpp"
#include "leaffed/federated.hpp"
#include "leaffed/metrics.hpp"
#include "leaffed/model.hpp"
#include "leaffed/split.hpp"

namespace leaffed {

// A failure inside one pipeline stage; the message reads
// "stage <name>: <cause>".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage " + stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using Logger = std::function<void(std::string_view)>;

struct PreparedData {
  Dataset full;
  DatasetSplits splits;  // splits.train is balanced when augmentation is on
};

PreparedData prepare_data(const DataConfig& config);

// The configured model spec with input shape and class count taken from `data`.
ModelSpec model_for_data(const ModelSpec& spec, const Dataset& data);

struct ExperimentResult {
  std::filesystem::path directory;
  Model model;
  OptimizerConfig optimizer;
  std::optional<ArchitectureSearchResult> search;
  std::vector<RoundReport> rounds;
  MetricsReport train;
  MetricsReport test;
  std::vector<std::string> class_names;
};

// data -> optional architecture search -> federated training -> evaluation
// on the test split -> reports and checkpoint in config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config, const Logger& log = {});

// Data preparation and the architecture search only.
ArchitectureSearchResult run_search(const ExperimentConfig& config, const Logger& log = {});

struct AblationResult {
  std::filesystem::path directory;
  ExperimentResult baseline;
  ExperimentResult deep_block;
};

// Trains the configured model without and with the deep block under the
// same data and seeds. The search stage is skipped.
AblationResult run_ablation(const ExperimentConfig& config, const Logger& log = {});

struct CheckpointEvaluation {
  ModelSpec spec;
  std::vector<std::string> class_names;
  MetricsReport report;
};

// Scores a saved model on every image of a dataset directory.
CheckpointEvaluation evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                         const std::filesystem::path& dataset_dir,
                                         Averaging averaging = Averaging::macro);

// metrics.json body: test and train reports plus their accuracy/F1 gap.
std::string metrics_json(const MetricsReport& train, const MetricsReport& test,
                         std::span<const std::string> class_names);

// Rows of variant, class, precision, recall, f1, support.
std::string per_class_csv(std::span<const std::pair<std::string, const MetricsReport*>> variants,
                          std::span<const std::string> class_names);

// Per class: second report minus first for precision, recall and F1.
std::string per_class_delta_csv(const MetricsReport& before, const MetricsReport& after,
                                std::span<const std::string> class_names);

}  // namespace leaffed
