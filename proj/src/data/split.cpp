#include "leaffed/split.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "leaffed/random.hpp"

namespace leaffed {

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  if (weights.empty()) throw ValidationError("largest_remainder needs at least one weight");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("weights must not all be zero");

  std::vector<std::size_t> counts(weights.size());
  std::vector<double> remainder(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    // Absorb rounding noise such as 0.7 * 100 = 69.99999999999999.
    const double base = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(base);
    remainder[i] = quota - base;
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) counts[order[i % order.size()]] += 1;
  while (assigned > total) {
    // Only reachable through the epsilon above; take back from the largest.
    auto it = std::max_element(counts.begin(), counts.end());
    *it -= 1;
    --assigned;
  }
  return counts;
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ValidationError("split fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
}

SplitIndices split_indices(std::span<const int> labels, std::size_t classes, const SplitSpec& spec,
                           std::span<const std::string> class_names) {
  spec.validate();
  const std::array<double, 3> fractions{spec.train, spec.val, spec.test};
  Rng rng(derive_seed(spec.seed, 0x5b1170));
  SplitIndices out;
  auto assign = [&](std::vector<std::size_t> pool) {
    rng.shuffle(pool);
    const auto counts = largest_remainder(pool.size(), fractions);
    auto it = pool.begin();
    out.train.insert(out.train.end(), it, it + counts[0]);
    it += counts[0];
    out.val.insert(out.val.end(), it, it + counts[1]);
    it += counts[1];
    out.test.insert(out.test.end(), it, pool.end());
  };

  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    for (std::size_t c = 0; c < classes; ++c) {
      if (by_class[c].size() < 10) {
        const std::string name = c < class_names.size() ? class_names[c] : "class " + std::to_string(c);
        throw ValidationError("stratified split needs at least 10 samples per class; '" + name + "' has " +
                              std::to_string(by_class[c].size()));
      }
      assign(std::move(by_class[c]));
    }
  } else {
    assign(iota_indices(labels.size()));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplits split_dataset(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds.labels, ds.class_count(), spec, ds.class_names);
  return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

std::string_view shard_strategy_name(ShardStrategy s) {
  switch (s) {
    case ShardStrategy::iid:
      return "iid";
    case ShardStrategy::dirichlet:
      return "dirichlet";
    case ShardStrategy::label_skew:
      return "label_skew";
  }
  return "unknown";
}

ShardStrategy parse_shard_strategy(std::string_view name) {
  if (name == "iid") return ShardStrategy::iid;
  if (name == "dirichlet") return ShardStrategy::dirichlet;
  if (name == "label_skew") return ShardStrategy::label_skew;
  throw ValidationError("unknown shard strategy '" + std::string(name) + "' (expected iid, dirichlet or label_skew)");
}

namespace {

std::vector<std::vector<std::size_t>> group_by_class(std::span<const int> labels, std::size_t classes) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || c >= classes) throw ValidationError("label " + std::to_string(labels[i]) + " out of range");
    by_class[c].push_back(i);
  }
  return by_class;
}

std::vector<std::vector<std::size_t>> shard_iid(std::size_t n, std::size_t clients, Rng& rng) {
  auto order = iota_indices(n);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> shards(clients);
  const std::vector<double> equal(clients, 1.0);
  const auto sizes = largest_remainder(n, equal);
  auto it = order.begin();
  for (std::size_t k = 0; k < clients; ++k) {
    shards[k].assign(it, it + sizes[k]);
    it += sizes[k];
  }
  return shards;
}

std::vector<std::vector<std::size_t>> shard_dirichlet(const std::vector<std::vector<std::size_t>>& by_class,
                                                      std::size_t clients, double alpha, Rng& rng) {
  std::vector<std::vector<std::size_t>> shards(clients);
  std::vector<double> p(clients);
  for (auto pool : by_class) {
    if (pool.empty()) continue;
    rng.shuffle(pool);
    double sum = 0.0;
    for (auto& x : p) sum += (x = rng.gamma(alpha));
    if (!(sum > 0.0)) std::fill(p.begin(), p.end(), 1.0);
    const auto counts = largest_remainder(pool.size(), p);
    auto it = pool.begin();
    for (std::size_t k = 0; k < clients; ++k) {
      shards[k].insert(shards[k].end(), it, it + counts[k]);
      it += counts[k];
    }
  }
  return shards;
}

std::vector<std::vector<std::size_t>> shard_label_skew(const std::vector<std::vector<std::size_t>>& by_class,
                                                       std::size_t clients, std::size_t per_client, Rng& rng) {
  const std::size_t classes = by_class.size();
  // Client k owns classes (k*c + j) mod C; every class ends up with an owner
  // because K*c >= C.
  std::vector<std::vector<std::size_t>> owners(classes);
  for (std::size_t k = 0; k < clients; ++k) {
    for (std::size_t j = 0; j < per_client; ++j) {
      auto& o = owners[(k * per_client + j) % classes];
      if (std::find(o.begin(), o.end(), k) == o.end()) o.push_back(k);
    }
  }
  std::vector<std::vector<std::size_t>> shards(clients);
  for (std::size_t c = 0; c < classes; ++c) {
    auto pool = by_class[c];
    rng.shuffle(pool);
    const std::vector<double> equal(owners[c].size(), 1.0);
    const auto counts = largest_remainder(pool.size(), equal);
    auto it = pool.begin();
    for (std::size_t j = 0; j < owners[c].size(); ++j) {
      shards[owners[c][j]].insert(shards[owners[c][j]].end(), it, it + counts[j]);
      it += counts[j];
    }
  }
  return shards;
}

}  // namespace

ShardPlan shard_to_clients(std::span<const int> labels, std::size_t classes, std::size_t clients,
                           const ShardSpec& spec) {
  if (clients == 0) throw ValidationError("number of clients must be positive");
  if (labels.size() < clients) {
    throw ValidationError("cannot shard " + std::to_string(labels.size()) + " samples across " +
                          std::to_string(clients) + " clients");
  }
  const auto by_class = group_by_class(labels, classes);
  std::size_t present = 0;
  for (const auto& pool : by_class) present += pool.empty() ? 0 : 1;
  if (spec.strategy == ShardStrategy::dirichlet && !(spec.alpha > 0.0 && std::isfinite(spec.alpha))) {
    throw ValidationError("dirichlet alpha must be positive and finite");
  }
  if (spec.strategy == ShardStrategy::label_skew) {
    if (spec.classes_per_client == 0 || spec.classes_per_client > classes) {
      throw ValidationError("label_skew classes_per_client must lie in 1.." + std::to_string(classes));
    }
    if (clients * spec.classes_per_client < classes) {
      throw ValidationError("label_skew with " + std::to_string(clients) + " clients x " +
                            std::to_string(spec.classes_per_client) + " classes cannot cover " +
                            std::to_string(classes) + " classes");
    }
    if (present != classes) throw ValidationError("label_skew needs every class present in the pool");
  }

  Rng rng(derive_seed(spec.seed, 0x54a2d));
  const std::size_t attempts = std::max<std::size_t>(1, spec.max_attempts);
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    std::vector<std::vector<std::size_t>> shards;
    switch (spec.strategy) {
      case ShardStrategy::iid:
        shards = shard_iid(labels.size(), clients, rng);
        break;
      case ShardStrategy::dirichlet:
        shards = shard_dirichlet(by_class, clients, spec.alpha, rng);
        break;
      case ShardStrategy::label_skew:
        shards = shard_label_skew(by_class, clients, spec.classes_per_client, rng);
        break;
    }
    if (std::all_of(shards.begin(), shards.end(), [](const auto& s) { return !s.empty(); })) {
      for (auto& s : shards) std::sort(s.begin(), s.end());
      return {spec, std::move(shards)};
    }
  }
  throw ValidationError("could not draw " + std::to_string(clients) + " nonempty shards with strategy " +
                        std::string(shard_strategy_name(spec.strategy)) + " after " + std::to_string(attempts) +
                        " attempts");
}

}  // namespace leaffed
