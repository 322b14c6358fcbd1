#include "leaffed/optimizer.hpp"

#include <cmath>

#include "leaffed/kernels.hpp"

namespace leaffed {
namespace {

template <typename T>
void check_step_inputs(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
                       std::span<const std::string> names) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "#" + std::to_string(i);
    if (params[i].shape() != grads[i].shape()) {
      throw ShapeError("optimizer: parameter " + label + " has shape " + shape_string(params[i].shape()) +
                       " but gradient has shape " + shape_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("optimizer: non-finite gradient for parameter " + label);
    }
  }
}

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, T learning_rate,
              std::span<const std::string> names) {
  check_step_inputs(params, grads, names);
  for (std::size_t i = 0; i < params.size(); ++i) {
    kernels::sgd_update(params[i].raw(), grads[i].raw(), learning_rate, params[i].size());
  }
}

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, OptimizerState<T>& state,
               std::span<const std::string> names) {
  if (state.config.kind != OptimizerKind::adam) throw ValidationError("adam_step: optimizer state is not adam");
  check_step_inputs(params, grads, names);
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const auto& cfg = state.config;
  const kernels::AdamCoefficients<T> coeff{
      static_cast<T>(cfg.beta1),
      static_cast<T>(1.0 - cfg.beta1),
      static_cast<T>(cfg.beta2),
      static_cast<T>(1.0 - cfg.beta2),
      static_cast<T>(1.0 - std::pow(cfg.beta1, t)),
      static_cast<T>(1.0 - std::pow(cfg.beta2, t)),
      static_cast<T>(cfg.learning_rate),
      static_cast<T>(cfg.epsilon),
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: moment shape " + shape_string(state.first_moment[i].shape()) +
                       " does not match parameter " + shape_string(params[i].shape()));
    }
    kernels::adam_update(params[i].raw(), grads[i].raw(), state.first_moment[i].raw(),
                         state.second_moment[i].raw(), coeff, params[i].size());
  }
}

template <typename T>
void optimizer_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
                    OptimizerState<T>& state, std::span<const std::string> names) {
  if (state.config.kind == OptimizerKind::adam) {
    adam_step(params, grads, state, names);
    return;
  }
  sgd_step(params, grads, static_cast<T>(state.config.learning_rate), names);
  state.step += 1;
}

#define LEAFFED_INSTANTIATE_OPTIMIZER(T)                                                                  \
  template void sgd_step<T>(std::span<BasicTensor<T>>, std::span<const BasicTensor<T>>, T,               \
                            std::span<const std::string>);                                              \
  template void adam_step<T>(std::span<BasicTensor<T>>, std::span<const BasicTensor<T>>, OptimizerState<T>&, \
                             std::span<const std::string>);                                             \
  template void optimizer_step<T>(std::span<BasicTensor<T>>, std::span<const BasicTensor<T>>,            \
                                  OptimizerState<T>&, std::span<const std::string>);

LEAFFED_INSTANTIATE_OPTIMIZER(float)
LEAFFED_INSTANTIATE_OPTIMIZER(double)

}  // namespace leaffed
