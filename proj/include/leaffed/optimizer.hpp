#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/tensor.hpp"

namespace leaffed {

enum class OptimizerKind { sgd, adam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Per-model optimizer memory. Moments are allocated on the first Adam step
// and always shape-match the parameters they track.
template <typename T>
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(OptimizerConfig cfg) : config(cfg) {}

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// p' = p - lr * g for every parameter. `names` (optional) labels errors.
template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, T learning_rate,
              std::span<const std::string> names = {});

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
               OptimizerState<T>& state, std::span<const std::string> names = {});

// Dispatches on state.config.kind; always advances state.step by one.
template <typename T>
void optimizer_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
                    OptimizerState<T>& state, std::span<const std::string> names = {});

}  // namespace leaffed
