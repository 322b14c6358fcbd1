#include "leaffed/memetic.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "leaffed/parallel.hpp"

namespace leaffed {

namespace {

const double kRealStep = std::log10(2.0) / 4.0;
constexpr std::size_t kRedrawLimit = 8;

}  // namespace

std::size_t GeneSpec::levels() const {
  return static_cast<std::size_t>(std::llround((upper - lower) / step)) + 1;
}

std::size_t GeneLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < genes.size(); ++i) {
    if (genes[i].name == name) return i;
  }
  throw ValidationError("no gene named '" + name + "'");
}

void GeneLayout::validate() const {
  if (genes.empty()) throw ValidationError("gene layout is empty");
  for (const auto& g : genes) {
    if (!std::isfinite(g.lower) || !std::isfinite(g.upper) || g.lower > g.upper) {
      throw ValidationError("gene '" + g.name + "' has invalid bounds");
    }
    if (g.integer) {
      if (!(g.step > 0.0) || g.lower != std::round(g.lower) || g.step != std::round(g.step)) {
        throw ValidationError("integer gene '" + g.name + "' needs integral bounds and a positive integral step");
      }
      const double span = (g.upper - g.lower) / g.step;
      if (span != std::round(span)) {
        throw ValidationError("gene '" + g.name + "' range is not a whole number of steps");
      }
    }
  }
}

double snap_gene(const GeneSpec& spec, double value) {
  value = std::clamp(value, spec.lower, spec.upper);
  if (!spec.integer) return value;
  const double k = std::round((value - spec.lower) / spec.step);
  return std::min(spec.upper, spec.lower + k * spec.step);
}

bool within_layout(const Chromosome& c, const GeneLayout& layout) {
  if (c.genes.size() != layout.size()) return false;
  for (std::size_t i = 0; i < c.genes.size(); ++i) {
    const double v = c.genes[i];
    if (!std::isfinite(v) || snap_gene(layout.genes[i], v) != v) return false;
  }
  return true;
}

void check_layout(const Chromosome& c, const GeneLayout& layout) {
  if (c.genes.size() != layout.size()) {
    throw ValidationError("chromosome has " + std::to_string(c.genes.size()) + " genes, layout has " +
                          std::to_string(layout.size()));
  }
  if (!within_layout(c, layout)) throw ValidationError("chromosome is outside the gene layout");
}

Evaluation FitnessEvaluator::operator()(const Chromosome& c) {
  {
    std::lock_guard lock(mutex_);
    ++requests_;
    if (auto it = cache_.find(c); it != cache_.end()) return it->second;
  }
  Evaluation e = fn_(c);
  if (!std::isfinite(e.fitness) || e.fitness < 0.0 || e.fitness > 1.0) {
    throw NumericError("fitness " + std::to_string(e.fitness) + " is outside [0, 1]");
  }
  std::lock_guard lock(mutex_);
  cache_.emplace(c, e);
  return e;
}

std::size_t FitnessEvaluator::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t FitnessEvaluator::computed() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

void MaoConfig::validate() const {
  if (population < 2) throw ValidationError("mao.population: must be at least 2");
  if (tournament < 1 || tournament > population) {
    throw ValidationError("mao.tournament: must be between 1 and mao.population");
  }
  if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0)) {
    throw ValidationError("mao.mutation_probability: must be in [0, 1]");
  }
  if (!(mutation_scale >= 0.0) || !std::isfinite(mutation_scale)) {
    throw ValidationError("mao.mutation_scale: must be non-negative");
  }
  if (batch_size < 1) throw ValidationError("mao.batch_size: must be at least 1");
}

std::vector<Individual> init_population(const MaoConfig& config, const GeneLayout& layout, Rng& rng,
                                        std::optional<std::size_t> coverage_gene) {
  config.validate();
  layout.validate();
  std::vector<std::size_t> cover_values;
  if (coverage_gene) {
    if (*coverage_gene >= layout.size() || !layout.genes[*coverage_gene].integer) {
      throw ValidationError("coverage gene must be an integer gene of the layout");
    }
    cover_values = iota_indices(layout.genes[*coverage_gene].levels());
    rng.shuffle(std::span(cover_values));
  }
  std::vector<Individual> pop(config.population);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    auto& genes = pop[i].chromosome.genes;
    genes.resize(layout.size());
    for (std::size_t g = 0; g < layout.size(); ++g) {
      const auto& spec = layout.genes[g];
      genes[g] = spec.integer ? spec.lower + spec.step * static_cast<double>(rng.below(spec.levels()))
                              : rng.uniform(spec.lower, spec.upper);
    }
    if (coverage_gene && i < cover_values.size()) {
      const auto& spec = layout.genes[*coverage_gene];
      genes[*coverage_gene] = spec.lower + spec.step * static_cast<double>(cover_values[i]);
    }
  }
  return pop;
}

Individual evaluate_individual(const Chromosome& c, FitnessEvaluator& evaluator) {
  const Evaluation e = evaluator(c);
  return {c, e.fitness, e.epochs, e.diverged};
}

std::size_t best_index(std::span<const Individual> population) {
  if (population.empty()) throw ValidationError("population is empty");
  std::size_t best = 0;
  for (std::size_t i = 0; i < population.size(); ++i) {
    if (!population[i].evaluated()) throw ValidationError("individual " + std::to_string(i) + " is unevaluated");
    if (*population[i].fitness > *population[best].fitness) best = i;
  }
  return best;
}

std::size_t tournament_select(std::span<const Individual> population, std::size_t k, Rng& rng) {
  if (k < 1 || k > population.size()) {
    throw ValidationError("tournament size " + std::to_string(k) + " does not fit a population of " +
                          std::to_string(population.size()));
  }
  auto idx = iota_indices(population.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::size_t winner = idx[0];
  for (std::size_t i = 0; i < k; ++i) {
    const auto& ind = population[idx[i]];
    if (!ind.evaluated()) throw ValidationError("tournament entrant " + std::to_string(idx[i]) + " is unevaluated");
    if (*ind.fitness > *population[winner].fitness) winner = idx[i];
  }
  return winner;
}

Chromosome crossover_with_mask(const Chromosome& p1, const Chromosome& p2, const std::vector<bool>& mask) {
  if (p1.genes.size() != p2.genes.size() || mask.size() != p1.genes.size()) {
    throw ValidationError("crossover parents and mask must have equal gene counts");
  }
  Chromosome child;
  child.genes.resize(p1.genes.size());
  for (std::size_t i = 0; i < mask.size(); ++i) child.genes[i] = mask[i] ? p1.genes[i] : p2.genes[i];
  return child;
}

Chromosome uniform_crossover(const Chromosome& p1, const Chromosome& p2, Rng& rng) {
  if (p1.genes.size() != p2.genes.size()) throw ValidationError("crossover parents have different gene counts");
  std::vector<bool> mask(p1.genes.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.coin();
  return crossover_with_mask(p1, p2, mask);
}

Chromosome mutate(const Chromosome& c, const GeneLayout& layout, double p_m, double lambda, Rng& rng) {
  if (c.genes.size() != layout.size()) throw ValidationError("chromosome does not match the gene layout");
  Chromosome out = c;
  for (std::size_t i = 0; i < out.genes.size(); ++i) {
    if (rng.uniform() >= p_m) continue;
    const auto& spec = layout.genes[i];
    out.genes[i] = snap_gene(spec, out.genes[i] + rng.normal(0.0, lambda * (spec.upper - spec.lower)));
  }
  return out;
}

std::optional<Chromosome> neighbour(const Chromosome& c, const GeneLayout& layout, std::size_t gene, int direction) {
  const auto& spec = layout.genes.at(gene);
  const double moved = c.genes.at(gene) + direction * (spec.integer ? spec.step : kRealStep);
  if (moved < spec.lower || moved > spec.upper) return std::nullopt;
  Chromosome out = c;
  out.genes[gene] = moved;
  return out;
}

Individual local_search(const Individual& start, const GeneLayout& layout, FitnessEvaluator& evaluator,
                        std::size_t budget) {
  if (!start.evaluated()) throw ValidationError("local search needs an evaluated individual");
  Individual best = start;
  std::size_t spent = 0;
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t g = 0; g < layout.size(); ++g) {
      for (int direction : {+1, -1}) {
        const auto candidate = neighbour(best.chromosome, layout, g, direction);
        if (!candidate) continue;
        if (spent == budget) return best;
        ++spent;
        Individual next = evaluate_individual(*candidate, evaluator);
        if (*next.fitness > *best.fitness) {
          best = std::move(next);
          improved = true;
          break;
        }
      }
    }
  }
  return best;
}

std::string generation_jsonl(const GenerationRecord& record, const GeneLayout& layout) {
  nlohmann::ordered_json genes = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < layout.size() && i < record.best.genes.size(); ++i) {
    genes[layout.genes[i].name] = record.best.genes[i];
  }
  nlohmann::ordered_json j;
  j["generation"] = record.generation;
  j["best_fitness"] = record.best_fitness;
  j["mean_fitness"] = record.mean_fitness;
  j["best_chromosome"] = genes;
  return j.dump() + "\n";
}

namespace {

GenerationRecord summarize(std::size_t generation, std::span<const Individual> pop) {
  const std::size_t b = best_index(pop);
  double sum = 0.0;
  for (const auto& ind : pop) sum += *ind.fitness;
  return {generation, *pop[b].fitness, sum / static_cast<double>(pop.size()), pop[b].chromosome};
}

}  // namespace

MaoResult run_mao(const MaoConfig& config, const GeneLayout& layout, FitnessEvaluator& evaluator,
                  std::optional<std::size_t> coverage_gene,
                  const std::function<void(const GenerationRecord&)>& on_generation) {
  Rng rng(config.seed);
  std::vector<Individual> pop = init_population(config, layout, rng, coverage_gene);
  const std::size_t threads = config.parallel ? config.threads : 1;
  parallel_for(pop.size(), threads, [&](std::size_t i) { pop[i] = evaluate_individual(pop[i].chromosome, evaluator); });

  MaoResult result;
  auto record = [&](std::size_t g) {
    result.log.push_back(summarize(g, pop));
    if (on_generation) on_generation(result.log.back());
  };
  record(0);

  for (std::size_t g = 1; g <= config.generations; ++g) {
    std::vector<Chromosome> children(pop.size() - 1);
    std::set<Chromosome> taken;
    for (const auto& ind : pop) taken.insert(ind.chromosome);
    for (auto& child : children) {
      const std::size_t a = tournament_select(pop, config.tournament, rng);
      const std::size_t b = tournament_select(pop, config.tournament, rng);
      child = mutate(uniform_crossover(pop[a].chromosome, pop[b].chromosome, rng), layout,
                     config.mutation_probability, config.mutation_scale, rng);
      // Clones of chromosomes already present are mutated in every gene.
      for (std::size_t attempt = 0; attempt < kRedrawLimit && taken.count(child) != 0; ++attempt) {
        child = mutate(child, layout, 1.0, config.mutation_scale, rng);
      }
      taken.insert(child);
    }
    std::vector<Individual> next(pop.size());
    next[0] = pop[best_index(pop)];
    parallel_for(children.size(), threads, [&](std::size_t i) {
      next[i + 1] = local_search(evaluate_individual(children[i], evaluator), layout, evaluator,
                                 config.local_search_budget);
    });
    pop = std::move(next);
    record(g);
  }
  result.best = pop[best_index(pop)];
  result.population = std::move(pop);
  return result;
}

}  // namespace leaffed
