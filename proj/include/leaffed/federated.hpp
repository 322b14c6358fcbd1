#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/dataset.hpp"
#include "leaffed/error.hpp"
#include "leaffed/model.hpp"
#include "leaffed/optimizer.hpp"
#include "leaffed/split.hpp"

namespace leaffed {

enum class AggregationErrorKind { empty, shape_mismatch, weight_sum };

class AggregationError : public Error {
 public:
  AggregationError(AggregationErrorKind kind, const std::string& message) : Error(message), kind_(kind) {}
  AggregationErrorKind kind() const noexcept { return kind_; }

 private:
  AggregationErrorKind kind_;
};

// `weights`: p = sum_k w_k p_k. `deltas`: p = g + sum_k w_k (p_k - g).
enum class AggregationMode { weights, deltas };
std::string_view aggregation_name(AggregationMode m);
AggregationMode parse_aggregation(std::string_view name);

struct FederationConfig {
  std::size_t clients = 5;
  std::size_t rounds = 30;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  std::size_t clients_per_round = 0;  // 0 selects every client each round
  OptimizerConfig optimizer;
  ShardSpec shards;
  AggregationMode aggregation = AggregationMode::weights;
  // Count n_k as batches x batch_size instead of the exact sample count.
  bool batch_count_weights = false;
  bool parallel = false;
  std::size_t threads = 0;  // 0 means one per selected client
  std::uint64_t seed = 42;

  void validate() const;
};

// weight_k = n_k / sum(n). Throws on an empty list or a zero count.
std::vector<double> compute_scaling_weights(std::span<const std::size_t> counts);

// ceil(samples / batch_size) * batch_size.
std::size_t batch_count_samples(std::size_t samples, std::size_t batch_size);

// Independent deep copies of the global model.
std::vector<Model> clone_global(const Model& global, std::size_t count);

// Weighted average accumulated in double, clients taken in list order,
// stored as float. Weights must sum to 1 within 1e-9.
std::vector<Tensor> aggregate_fedavg(std::span<const std::vector<Tensor>> updates, std::span<const double> weights);

// Parameter differences against the round's global, in double.
std::vector<Tensor64> parameter_delta(std::span<const Tensor> updated, std::span<const Tensor> global);

// global + sum_k weight_k * delta_k, accumulated in double.
std::vector<Tensor> aggregate_deltas(std::span<const Tensor> global, std::span<const std::vector<Tensor64>> deltas,
                                     std::span<const double> weights);

// Training seed of client `id` under federation seed `seed`.
std::uint64_t client_seed(std::uint64_t seed, std::size_t id);

struct ClientState {
  std::size_t id = 0;
  Dataset data;
  Model model;
  OptimizerState<float> optimizer;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  std::size_t samples = 0;
  std::vector<Tensor> params;
  double loss = 0.0;      // last local epoch, 0 when no epoch ran
  double accuracy = 0.0;
};

// Replaces the client's model with a clone of `global`, trains it for
// `epochs` epochs (shuffle streams starting at epoch_offset) and returns
// the updated parameters. The client's optimizer state carries over.
ClientUpdate client_local_update(ClientState& client, const Model& global, std::size_t epochs,
                                 std::size_t batch_size, std::uint64_t seed, std::size_t epoch_offset);

struct ClientRoundRecord {
  std::size_t client_id = 0;
  std::size_t samples = 0;  // n_k used for weighting
  double weight = 0.0;
  double local_loss = 0.0;
  double local_accuracy = 0.0;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based index of the completed round
  std::vector<ClientRoundRecord> clients;
  std::optional<double> global_val_accuracy;
  std::optional<double> global_val_f1;
};

// One JSON object per participating client.
std::string round_jsonl(const RoundReport& report);

class Federation {
 public:
  // Shards `train` across config.clients clients.
  Federation(const Model& initial, const Dataset& train, const Dataset& val, FederationConfig config);

  RoundReport run_round();

  const Model& global() const noexcept { return global_; }
  std::size_t round() const noexcept { return round_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const FederationConfig& config() const noexcept { return config_; }
  const ShardPlan& shard_plan() const noexcept { return plan_; }

  // Client ids taking part in round `round` (0-based), ascending.
  std::vector<std::size_t> select_clients(std::size_t round) const;

 private:
  FederationConfig config_;
  Model global_;
  const Dataset* val_;
  ShardPlan plan_;
  std::vector<ClientState> clients_;
  std::size_t round_ = 0;
};

struct FederationResult {
  Model global;
  std::vector<RoundReport> history;
};

FederationResult run_federation(const Model& initial, const Dataset& train, const Dataset& val,
                                const FederationConfig& config,
                                const std::function<void(const RoundReport&)>& on_round = {});

}  // namespace leaffed
