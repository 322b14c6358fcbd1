#include "leaffed/federated.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "leaffed/kernels.hpp"
#include "leaffed/metrics.hpp"
#include "leaffed/parallel.hpp"
#include "leaffed/random.hpp"
#include "leaffed/train.hpp"

namespace leaffed {

std::string_view aggregation_name(AggregationMode m) { return m == AggregationMode::weights ? "weights" : "deltas"; }

AggregationMode parse_aggregation(std::string_view name) {
  if (name == "weights") return AggregationMode::weights;
  if (name == "deltas") return AggregationMode::deltas;
  throw ValidationError("unknown aggregation mode '" + std::string(name) + "' (expected weights or deltas)");
}

void FederationConfig::validate() const {
  if (clients < 1) throw ValidationError("federation.clients: must be at least 1");
  if (clients_per_round > clients) {
    throw ValidationError("federation.clients_per_round: must not exceed federation.clients");
  }
  if (batch_size < 1) throw ValidationError("federation.batch_size: must be at least 1");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ValidationError("optimizer.learning_rate: must be positive and finite");
  }
}

std::vector<double> compute_scaling_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw AggregationError(AggregationErrorKind::empty, "no clients to weight");
  double total = 0.0;
  for (std::size_t n : counts) {
    if (n == 0) throw ValidationError("every client needs at least one sample");
    total += static_cast<double>(n);
  }
  std::vector<double> w;
  w.reserve(counts.size());
  for (std::size_t n : counts) w.push_back(static_cast<double>(n) / total);
  return w;
}

std::size_t batch_count_samples(std::size_t samples, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  return (samples + batch_size - 1) / batch_size * batch_size;
}

std::vector<Model> clone_global(const Model& global, std::size_t count) { return std::vector<Model>(count, global); }

namespace {

void check_weights(std::size_t updates, std::span<const double> weights) {
  if (updates == 0) throw AggregationError(AggregationErrorKind::empty, "no client updates to aggregate");
  if (weights.size() != updates) {
    throw AggregationError(AggregationErrorKind::weight_sum, std::to_string(weights.size()) + " weights for " +
                                                                 std::to_string(updates) + " updates");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw AggregationError(AggregationErrorKind::weight_sum, "weights must be finite and non-negative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw AggregationError(AggregationErrorKind::weight_sum, "aggregation weights sum to " + std::to_string(sum));
  }
}

template <typename A, typename B>
void check_shapes(std::span<const A> reference, std::span<const B> update, std::size_t client) {
  if (update.size() != reference.size()) {
    throw AggregationError(AggregationErrorKind::shape_mismatch,
                           "update " + std::to_string(client) + " has " + std::to_string(update.size()) +
                               " tensors, expected " + std::to_string(reference.size()));
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (update[i].shape() != reference[i].shape()) {
      throw AggregationError(AggregationErrorKind::shape_mismatch,
                             "update " + std::to_string(client) + " tensor " + std::to_string(i) + " has shape " +
                                 shape_string(update[i].shape()) + ", expected " +
                                 shape_string(reference[i].shape()));
    }
  }
}

}  // namespace

std::vector<Tensor> aggregate_fedavg(std::span<const std::vector<Tensor>> updates, std::span<const double> weights) {
  check_weights(updates.size(), weights);
  const std::span<const Tensor> reference = updates[0];
  for (std::size_t k = 1; k < updates.size(); ++k) check_shapes<Tensor, Tensor>(reference, updates[k], k);
  std::vector<Tensor> out;
  out.reserve(reference.size());
  std::vector<double> acc;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    acc.assign(reference[i].size(), 0.0);
    for (std::size_t k = 0; k < updates.size(); ++k) {
      kernels::accumulate_scaled(updates[k][i].raw(), weights[k], acc.data(), acc.size());
    }
    Tensor p(reference[i].shape());
    for (std::size_t j = 0; j < acc.size(); ++j) p[j] = static_cast<float>(acc[j]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Tensor64> parameter_delta(std::span<const Tensor> updated, std::span<const Tensor> global) {
  check_shapes<Tensor, Tensor>(global, updated, 0);
  std::vector<Tensor64> out;
  out.reserve(global.size());
  for (std::size_t i = 0; i < global.size(); ++i) {
    Tensor64 d(global[i].shape());
    for (std::size_t j = 0; j < d.size(); ++j) {
      d[j] = static_cast<double>(updated[i][j]) - static_cast<double>(global[i][j]);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Tensor> aggregate_deltas(std::span<const Tensor> global, std::span<const std::vector<Tensor64>> deltas,
                                     std::span<const double> weights) {
  check_weights(deltas.size(), weights);
  for (std::size_t k = 0; k < deltas.size(); ++k) check_shapes<Tensor, Tensor64>(global, deltas[k], k);
  std::vector<Tensor> out;
  out.reserve(global.size());
  for (std::size_t i = 0; i < global.size(); ++i) {
    std::vector<double> acc(global[i].size(), 0.0);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      const double* d = deltas[k][i].raw();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weights[k] * d[j];
    }
    Tensor p(global[i].shape());
    for (std::size_t j = 0; j < acc.size(); ++j) p[j] = static_cast<float>(static_cast<double>(global[i][j]) + acc[j]);
    out.push_back(std::move(p));
  }
  return out;
}

std::uint64_t client_seed(std::uint64_t seed, std::size_t id) { return derive_seed(seed, 0xc11e47, id); }

ClientUpdate client_local_update(ClientState& client, const Model& global, std::size_t epochs,
                                 std::size_t batch_size, std::uint64_t seed, std::size_t epoch_offset) {
  client.model = global;
  ClientUpdate update;
  update.client_id = client.id;
  update.samples = client.data.size();
  const auto history = train_epochs(client.model, client.optimizer, client.data,
                                    {.epochs = epochs, .batch_size = batch_size, .seed = seed,
                                     .epoch_offset = epoch_offset});
  if (!history.empty()) {
    update.loss = history.back().loss;
    update.accuracy = history.back().accuracy;
  }
  update.params = client.model.parameters();
  return update;
}

std::string round_jsonl(const RoundReport& report) {
  std::string out;
  for (const auto& c : report.clients) {
    nlohmann::ordered_json j;
    j["round"] = report.round;
    j["client_id"] = c.client_id;
    j["n_k"] = c.samples;
    j["weight"] = c.weight;
    j["local_loss"] = c.local_loss;
    j["local_acc"] = c.local_accuracy;
    j["global_val_acc"] = report.global_val_accuracy ? nlohmann::ordered_json(*report.global_val_accuracy)
                                                     : nlohmann::ordered_json();
    j["global_val_f1"] =
        report.global_val_f1 ? nlohmann::ordered_json(*report.global_val_f1) : nlohmann::ordered_json();
    out += j.dump() + "\n";
  }
  return out;
}

Federation::Federation(const Model& initial, const Dataset& train, const Dataset& val, FederationConfig config)
    : config_(std::move(config)), global_(initial), val_(&val) {
  config_.validate();
  if (train.class_count() != initial.spec().classes) {
    throw ValidationError("training data has " + std::to_string(train.class_count()) +
                          " classes but the model predicts " + std::to_string(initial.spec().classes));
  }
  plan_ = shard_to_clients(train.labels, train.class_count(), config_.clients, config_.shards);
  clients_.reserve(config_.clients);
  for (std::size_t k = 0; k < config_.clients; ++k) {
    clients_.push_back({k, train.subset(plan_.shards[k]), initial, OptimizerState<float>(config_.optimizer)});
  }
}

std::vector<std::size_t> Federation::select_clients(std::size_t round) const {
  auto ids = iota_indices(config_.clients);
  const std::size_t m = config_.clients_per_round == 0 ? config_.clients : config_.clients_per_round;
  if (m == config_.clients) return ids;
  Rng rng(derive_seed(config_.seed, 0x5e1ec7, round));
  rng.shuffle(ids);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

RoundReport Federation::run_round() {
  const std::size_t t = round_;
  const auto selected = select_clients(t);
  std::vector<ClientUpdate> updates(selected.size());
  auto work = [&](std::size_t slot) {
    ClientState& client = clients_[selected[slot]];
    updates[slot] = client_local_update(client, global_, config_.local_epochs, config_.batch_size,
                                        client_seed(config_.seed, client.id), t * config_.local_epochs);
  };

  parallel_for(selected.size(), config_.parallel ? config_.threads : 1, work);

  std::vector<std::size_t> counts;
  for (const auto& u : updates) {
    counts.push_back(config_.batch_count_weights ? batch_count_samples(u.samples, config_.batch_size) : u.samples);
  }
  const auto weights = compute_scaling_weights(counts);
  std::vector<Tensor> next_params;
  if (config_.aggregation == AggregationMode::weights) {
    std::vector<std::vector<Tensor>> sets;
    sets.reserve(updates.size());
    for (auto& u : updates) sets.push_back(std::move(u.params));
    next_params = aggregate_fedavg(sets, weights);
  } else {
    std::vector<std::vector<Tensor64>> deltas;
    deltas.reserve(updates.size());
    for (const auto& u : updates) deltas.push_back(parameter_delta(u.params, global_.parameters()));
    next_params = aggregate_deltas(global_.parameters(), deltas, weights);
  }
  global_.parameters() = std::move(next_params);
  ++round_;

  RoundReport report;
  report.round = round_;
  for (std::size_t s = 0; s < updates.size(); ++s) {
    report.clients.push_back({updates[s].client_id, counts[s], weights[s], updates[s].loss, updates[s].accuracy});
  }
  if (!val_->empty()) {
    const auto probs = predict_probabilities(global_, *val_);
    const auto r = evaluate_scores(probs, val_->labels, val_->class_count());
    report.global_val_accuracy = r.accuracy;
    report.global_val_f1 = r.f1;
  }
  return report;
}

FederationResult run_federation(const Model& initial, const Dataset& train, const Dataset& val,
                                const FederationConfig& config,
                                const std::function<void(const RoundReport&)>& on_round) {
  Federation fed(initial, train, val, config);
  FederationResult result{initial, {}};
  for (std::size_t r = 0; r < config.rounds; ++r) {
    result.history.push_back(fed.run_round());
    if (on_round) on_round(result.history.back());
  }
  result.global = fed.global();
  return result;
}

}  // namespace leaffed
