#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leaffed/error.hpp"
#include "leaffed/random.hpp"

namespace leaffed {

// One gene. Integer genes live on the grid lower + k * step; real genes are
// continuous in [lower, upper] and are read as base-10 exponents.
struct GeneSpec {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  bool integer = true;
  double step = 1.0;

  std::size_t levels() const;  // grid size of an integer gene
};

struct GeneLayout {
  std::vector<GeneSpec> genes;

  std::size_t size() const noexcept { return genes.size(); }
  std::size_t index_of(const std::string& name) const;
  void validate() const;
};

struct Chromosome {
  std::vector<double> genes;

  friend auto operator<=>(const Chromosome&, const Chromosome&) = default;
};

// Clamps to the bounds and, for integer genes, rounds to the nearest grid value.
double snap_gene(const GeneSpec& spec, double value);
bool within_layout(const Chromosome& c, const GeneLayout& layout);
void check_layout(const Chromosome& c, const GeneLayout& layout);

struct Evaluation {
  double fitness = 0.0;
  std::size_t epochs = 0;
  bool diverged = false;
};

using FitnessFunction = std::function<Evaluation(const Chromosome&)>;

// Memoizes a fitness function by chromosome. Safe to share between threads.
class FitnessEvaluator {
 public:
  explicit FitnessEvaluator(FitnessFunction fn) : fn_(std::move(fn)) {}
  Evaluation operator()(const Chromosome& c);
  std::size_t requests() const;
  std::size_t computed() const;

 private:
  FitnessFunction fn_;
  mutable std::mutex mutex_;
  std::map<Chromosome, Evaluation> cache_;
  std::size_t requests_ = 0;
};

struct Individual {
  Chromosome chromosome;
  std::optional<double> fitness;
  std::size_t epochs_used = 0;
  bool diverged = false;

  bool evaluated() const noexcept { return fitness.has_value(); }
};

struct MaoConfig {
  std::size_t population = 11;
  std::size_t generations = 15;
  std::size_t tournament = 3;
  double mutation_probability = 0.2;
  double mutation_scale = 0.1;  // multiples of each gene's range
  std::size_t finetune_epochs = 1;
  std::size_t local_search_budget = 8;  // neighbour evaluations per offspring
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  bool parallel = false;
  std::size_t threads = 0;

  void validate() const;
};

// `population` individuals drawn uniformly from the layout. When
// coverage_gene is set, its first min(population, levels) members take
// distinct values of that gene.
std::vector<Individual> init_population(const MaoConfig& config, const GeneLayout& layout, Rng& rng,
                                        std::optional<std::size_t> coverage_gene = {});

Individual evaluate_individual(const Chromosome& c, FitnessEvaluator& evaluator);

// Index of the fittest individual; ties go to the lower index.
std::size_t best_index(std::span<const Individual> population);

// k distinct members, fittest wins, ties to the lower population index.
std::size_t tournament_select(std::span<const Individual> population, std::size_t k, Rng& rng);

Chromosome crossover_with_mask(const Chromosome& p1, const Chromosome& p2, const std::vector<bool>& mask);
Chromosome uniform_crossover(const Chromosome& p1, const Chromosome& p2, Rng& rng);

// Each gene, with probability p_m, receives Normal(0, lambda * range) noise
// and is snapped back onto the layout.
Chromosome mutate(const Chromosome& c, const GeneLayout& layout, double p_m, double lambda, Rng& rng);

// Neighbour of gene `gene` one move up (+1) or down (-1): a grid step for
// integer genes, a factor 2^(1/4) on the decoded value for real genes.
// Empty when the move leaves the bounds.
std::optional<Chromosome> neighbour(const Chromosome& c, const GeneLayout& layout, std::size_t gene, int direction);

// First-improvement coordinate hill climb spending at most `budget`
// evaluations. Returns an individual at least as fit as `start`.
Individual local_search(const Individual& start, const GeneLayout& layout, FitnessEvaluator& evaluator,
                        std::size_t budget);

struct GenerationRecord {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  Chromosome best;
};

std::string generation_jsonl(const GenerationRecord& record, const GeneLayout& layout);

struct MaoResult {
  Individual best;
  std::vector<GenerationRecord> log;  // generation 0 is the initial population
  std::vector<Individual> population;
};

// Elitist generational search: the best individual survives and
// population - 1 offspring are bred by tournament, crossover and mutation,
// then refined by local search.
MaoResult run_mao(const MaoConfig& config, const GeneLayout& layout, FitnessEvaluator& evaluator,
                  std::optional<std::size_t> coverage_gene = {},
                  const std::function<void(const GenerationRecord&)>& on_generation = {});

// Deterministic multimodal test landscape over an integer grid: a
// Rastrigin surface whose ripples trap coordinate search every `period`
// cells.
struct LandscapeSpec {
  std::size_t genes = 4;
  std::size_t levels = 10;
  double period = 3.0;
  double ripple = 1.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct Landscape {
  GeneLayout layout;
  FitnessFunction fitness;
  Chromosome summit;  // the unique optimum, fitness 1
};

// 1 / (1 + sum_g u_g^2 + ripple * (1 - cos(2 pi u_g))), u_g = (x_g - summit_g) / period.
Landscape make_landscape(const LandscapeSpec& spec);

}  // namespace leaffed
