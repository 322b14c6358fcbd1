#include "leaffed/architecture_search.hpp"

#include <algorithm>
#include <cmath>

#include "leaffed/train.hpp"

namespace leaffed {

GeneLayout architecture_layout() {
  const double backbones = static_cast<double>(backbone_registry().size());
  return GeneLayout{{
      {"backbone", 0.0, backbones - 1.0, true, 1.0},
      {"hidden", 16.0, 64.0, true, 16.0},
      {"depth", 0.0, 1.0, true, 1.0},
      {"block_width", 16.0, 64.0, true, 16.0},
      {"loops", 1.0, 3.0, true, 1.0},
      {"repeats", 1.0, 4.0, true, 1.0},
      {"seq_width", 16.0, 64.0, true, 16.0},
      {"lr_exponent", -4.0, -2.0, false, 1.0},
  }};
}

ArchitectureChoice decode_architecture(const Chromosome& c, const ModelSpec& base,
                                       const OptimizerConfig& base_optimizer) {
  check_layout(c, architecture_layout());
  auto count = [&](std::size_t g) { return static_cast<std::size_t>(std::llround(c.genes[g])); };
  ArchitectureChoice out{base, base_optimizer};
  out.model.backbone = std::string(backbone_registry()[count(0)]);
  out.model.hidden = count(1);
  out.model.deep_block.reset();
  if (count(2) == 1) out.model.deep_block = DeepBlockSpec{count(3), count(4), count(5), count(6)};
  out.optimizer.learning_rate = std::pow(10.0, c.genes[7]);
  return out;
}

Chromosome encode_architecture(const ArchitectureChoice& choice) {
  const auto registry = backbone_registry();
  const auto it = std::find(registry.begin(), registry.end(), choice.model.backbone);
  if (it == registry.end()) throw ValidationError("unknown backbone '" + choice.model.backbone + "'");
  const DeepBlockSpec block = choice.model.deep_block.value_or(DeepBlockSpec{16, 1, 1, 16});
  Chromosome c{{static_cast<double>(it - registry.begin()), static_cast<double>(choice.model.hidden),
                choice.model.deep_block ? 1.0 : 0.0, static_cast<double>(block.width),
                static_cast<double>(block.loops), static_cast<double>(block.repeats),
                static_cast<double>(block.seq_width), std::log10(choice.optimizer.learning_rate)}};
  check_layout(c, architecture_layout());
  return c;
}

double argmax_accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw ValidationError("logits " + shape_string(logits.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.raw() + i * classes;
    correct += (std::max_element(row, row + classes) - row) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Evaluation evaluate_fitness(const Chromosome& c, const ModelSpec& base, const OptimizerConfig& base_optimizer,
                            const Dataset& train, const Dataset& val, const FitnessBudget& budget) {
  if (train.empty() || val.empty()) throw ValidationError("fitness needs non-empty training and validation sets");
  const ArchitectureChoice choice = decode_architecture(c, base, base_optimizer);
  Model model(choice.model);
  OptimizerState<float> opt(choice.optimizer);
  try {
    train_epochs(model, opt, train, {.epochs = budget.epochs, .batch_size = budget.batch_size, .seed = budget.seed});
  } catch (const NumericError&) {
    return {0.0, budget.epochs, true};
  }
  const Tensor logits = predict_logits(model, val);
  for (float v : logits.data()) {
    if (!std::isfinite(v)) return {0.0, budget.epochs, true};
  }
  return {argmax_accuracy(logits, val.labels), budget.epochs, false};
}

ArchitectureSearchResult run_architecture_search(const MaoConfig& config, const ModelSpec& base,
                                                 const OptimizerConfig& base_optimizer, const Dataset& train,
                                                 const Dataset& val,
                                                 const std::function<void(const GenerationRecord&)>& on_generation) {
  const GeneLayout layout = architecture_layout();
  const FitnessBudget budget{config.finetune_epochs, config.batch_size, derive_seed(config.seed, 0xf17)};
  FitnessEvaluator evaluator([&](const Chromosome& c) {
    return evaluate_fitness(c, base, base_optimizer, train, val, budget);
  });
  ArchitectureSearchResult out;
  out.search = run_mao(config, layout, evaluator, kBackboneGene, on_generation);
  out.choice = decode_architecture(out.search.best.chromosome, base, base_optimizer);
  out.trainings = evaluator.computed();
  return out;
}

}  // namespace leaffed
