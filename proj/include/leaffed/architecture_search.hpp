#pragma once

#include <span>

#include "leaffed/dataset.hpp"
#include "leaffed/memetic.hpp"
#include "leaffed/model.hpp"
#include "leaffed/optimizer.hpp"

namespace leaffed {

// Genes, in order: backbone (registry index), hidden, depth (0 puts the head
// on the backbone, 1 inserts the deep block), block_width, loops, repeats,
// seq_width, lr_exponent (learning rate = 10^gene).
GeneLayout architecture_layout();
inline constexpr std::size_t kBackboneGene = 0;

struct ArchitectureChoice {
  ModelSpec model;
  OptimizerConfig optimizer;
};

// Input shape, class count and seed come from `base`; optimizer kind and
// moments settings from `base_optimizer`.
ArchitectureChoice decode_architecture(const Chromosome& c, const ModelSpec& base,
                                       const OptimizerConfig& base_optimizer);
Chromosome encode_architecture(const ArchitectureChoice& choice);

// Fraction of rows whose argmax logit (lowest index on ties) equals the label.
double argmax_accuracy(const Tensor& logits, std::span<const int> labels);

struct FitnessBudget {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
};

// Builds the decoded model, trains it for budget.epochs on `train` and scores
// it on `val`. A diverging run scores 0 and is flagged.
Evaluation evaluate_fitness(const Chromosome& c, const ModelSpec& base, const OptimizerConfig& base_optimizer,
                            const Dataset& train, const Dataset& val, const FitnessBudget& budget);

struct ArchitectureSearchResult {
  MaoResult search;
  ArchitectureChoice choice;
  std::size_t trainings = 0;  // distinct chromosomes actually trained
};

ArchitectureSearchResult run_architecture_search(const MaoConfig& config, const ModelSpec& base,
                                                 const OptimizerConfig& base_optimizer, const Dataset& train,
                                                 const Dataset& val,
                                                 const std::function<void(const GenerationRecord&)>& on_generation = {});

}  // namespace leaffed
