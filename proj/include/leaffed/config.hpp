#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "leaffed/augment.hpp"
#include "leaffed/error.hpp"
#include "leaffed/federated.hpp"
#include "leaffed/memetic.hpp"
#include "leaffed/metrics.hpp"
#include "leaffed/model.hpp"
#include "leaffed/split.hpp"
#include "leaffed/synthetic.hpp"

namespace leaffed {

// Invalid configuration. The message starts with the offending field's
// dotted path, e.g. "federation.clients: must be at least 1".
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string path, const std::string& message)
      : ValidationError(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class DataSource { synthetic, directory };

// cnn-s with the deep block at its default size.
ModelSpec default_experiment_model();

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path directory;
  // Directory images are resized to this; synthetic data uses its own size.
  std::size_t height = 32;
  std::size_t width = 32;
  SplitSpec split;
  std::optional<AugmentSpec> augment;  // balances the training split when set
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "leaffed-run";
  std::uint64_t seed = 42;
  DataConfig data;
  // Input shape and class count are filled in from the data at run time.
  ModelSpec model = default_experiment_model();
  // federation.optimizer is the "optimizer" section of the document.
  FederationConfig federation;
  std::optional<MaoConfig> mao;
  Averaging averaging = Averaging::macro;
  bool export_test_split = true;

  // Throws ConfigError.
  void validate() const;
};

// Missing fields take their defaults; a missing seed anywhere takes the
// top-level "seed". "model.deep_block": null removes the deep block.
// Unknown fields are rejected. Throws ConfigError.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Every field, fully resolved. Parsing the output gives back the same config.
std::string experiment_config_json(const ExperimentConfig& config);

}  // namespace leaffed
