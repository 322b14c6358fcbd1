#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "leaffed/config.hpp"
#include "leaffed/experiment.hpp"
#include "leaffed/image_io.hpp"
#include "leaffed/synthetic.hpp"

namespace fs = std::filesystem;
using namespace leaffed;

namespace {

struct ConfigOptions {
  std::string config_path;
  std::string out;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Experiment config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", opts.out, "Output directory, overriding output_dir");
}

ExperimentConfig resolve_config(const ConfigOptions& opts) {
  ExperimentConfig config = opts.config_path.empty() ? parse_experiment_config("{}")
                                                     : load_experiment_config(opts.config_path);
  if (!opts.out.empty()) config.output_dir = opts.out;
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulation with memetic architecture search"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  ConfigOptions run_opts, mao_opts, fed_opts, ablate_opts;
  auto* run = app.add_subcommand("run", "Data, optional search, federated training, evaluation");
  add_config_options(run, run_opts);
  auto* run_mao = app.add_subcommand("run-mao", "Data preparation and architecture search only");
  add_config_options(run_mao, mao_opts);
  auto* run_fed = app.add_subcommand("run-fed", "Federated training and evaluation of the configured model");
  add_config_options(run_fed, fed_opts);
  auto* ablate = app.add_subcommand("ablate", "Compare the model with and without the deep block");
  add_config_options(ablate, ablate_opts);

  SyntheticSpec synth;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as a class-per-folder image tree");
  gen->add_option("-o,--out", gen_out, "Destination directory (must be empty or absent)")->required();
  gen->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
  gen->add_option("--per-class", synth.per_class, "Images per class")->capture_default_str();
  gen->add_option("--height", synth.height, "Image height")->capture_default_str();
  gen->add_option("--width", synth.width, "Image width")->capture_default_str();
  gen->add_option("--channels", synth.channels, "1 (PGM) or 3 (PPM)")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  gen->add_option("--noise", synth.noise, "Pixel noise standard deviation")->capture_default_str();
  gen->add_option("--jitter", synth.jitter, "Maximum blob-centre offset (unit coordinates)")->capture_default_str();

  std::string checkpoint, data_dir, eval_out, averaging = "macro";
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset directory");
  evaluate->add_option("-m,--checkpoint", checkpoint, "Model checkpoint (.fsyn)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-d,--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--averaging", averaging, "macro or weighted")->capture_default_str();
  evaluate->add_option("-o,--out", eval_out, "Also write metrics.json and metrics.csv here");

  std::string init_out;
  auto* init = app.add_subcommand("init-config", "Print the default experiment config");
  init->add_option("-o,--out", init_out, "Write to this file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  const Logger log = [&](std::string_view line) {
    if (!quiet) std::cerr << line << '\n';
  };

  try {
    if (*run) {
      run_experiment(resolve_config(run_opts), log);
    } else if (*run_mao) {
      run_search(resolve_config(mao_opts), log);
    } else if (*run_fed) {
      ExperimentConfig config = resolve_config(fed_opts);
      config.mao.reset();
      run_experiment(config, log);
    } else if (*ablate) {
      run_ablation(resolve_config(ablate_opts), log);
    } else if (*gen) {
      synth.validate();
      if (fs::exists(gen_out) && !fs::is_empty(gen_out)) throw Error(gen_out + " exists and is not empty");
      write_dataset(generate_synthetic_dataset(synth), gen_out);
      log("wrote " + std::to_string(synth.classes * synth.per_class) + " images to " + gen_out);
    } else if (*evaluate) {
      const auto result = evaluate_checkpoint(checkpoint, data_dir, parse_averaging(averaging));
      const std::string json = report_json(result.report, result.class_names);
      std::cout << json;
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_file(fs::path(eval_out) / "metrics.json", json);
        write_file(fs::path(eval_out) / "metrics.csv",
                   report_csv_header() + report_csv_row(result.spec.backbone, result.report));
      }
    } else if (*init) {
      const std::string text = experiment_config_json(parse_experiment_config("{}"));
      if (init_out.empty()) {
        std::cout << text;
      } else {
        write_file(init_out, text);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
