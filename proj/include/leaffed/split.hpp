#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "leaffed/dataset.hpp"

namespace leaffed {

// Distributes `total` items proportionally to `weights`: floors first, then
// one extra item each to the largest remainders (ties to the lower index).
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights);

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  std::uint64_t seed = 42;
  bool stratified = true;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle then assignment; each index list is returned sorted.
// Stratified splits need at least 10 samples per class.
SplitIndices split_indices(std::span<const int> labels, std::size_t classes, const SplitSpec& spec,
                           std::span<const std::string> class_names = {});

struct DatasetSplits {
  Dataset train, val, test;
};

DatasetSplits split_dataset(const Dataset& ds, const SplitSpec& spec);

enum class ShardStrategy { iid, dirichlet, label_skew };
std::string_view shard_strategy_name(ShardStrategy s);
ShardStrategy parse_shard_strategy(std::string_view name);

struct ShardSpec {
  ShardStrategy strategy = ShardStrategy::iid;
  double alpha = 0.5;                  // dirichlet concentration
  std::size_t classes_per_client = 2;  // label_skew
  std::uint64_t seed = 42;
  std::size_t max_attempts = 100;
};

struct ShardPlan {
  ShardSpec spec;
  std::vector<std::vector<std::size_t>> shards;  // positions in the pool, sorted

  std::size_t clients() const noexcept { return shards.size(); }
};

// Partitions pool positions 0..labels.size()-1 across `clients` nonempty shards.
ShardPlan shard_to_clients(std::span<const int> labels, std::size_t classes, std::size_t clients,
                           const ShardSpec& spec);

}  // namespace leaffed
