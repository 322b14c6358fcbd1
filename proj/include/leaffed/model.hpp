#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/tape.hpp"
#include "leaffed/tensor.hpp"

namespace leaffed {

struct DeepBlockSpec {
  std::size_t width = 32;      // dense units added per loop
  std::size_t loops = 2;       // dense + concat iterations
  std::size_t repeats = 3;     // timesteps produced by repeat_vector
  std::size_t seq_width = 32;  // units of the shared per-timestep dense

  void validate() const;
  friend bool operator==(const DeepBlockSpec&, const DeepBlockSpec&) = default;
};

struct ModelSpec {
  std::string backbone = "mlp-s";
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t classes = 8;
  std::size_t hidden = 32;  // units of the backbone's dense layers
  std::optional<DeepBlockSpec> deep_block;
  std::uint64_t seed = 42;

  // Throws ValidationError; unknown backbones list the registry keys.
  void validate() const;
  Shape input_shape() const { return {height, width, channels}; }

  std::string to_json() const;
  static ModelSpec from_json(std::string_view text);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Registered backbone ids in a fixed order.
std::span<const std::string_view> backbone_registry();
bool is_backbone(std::string_view id);

struct LayerInfo {
  std::string name;
  std::string kind;
  Shape output;  // per-sample shape, batch axis omitted
};

// A built network: ordered layers plus named parameter tensors. Construction
// initializes parameters deterministically from spec.seed (He-uniform
// weights, zero biases).
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;
  Tensor& parameter(std::string_view name);
  const Tensor& parameter(std::string_view name) const;

  // Width of the backbone's flattened feature vector.
  std::size_t feature_width() const noexcept { return feature_width_; }

  // (n, H, W, C) -> logits (n, classes). Does not touch parameters.
  Tensor forward(const Tensor& batch) const;

  // Records the network on `tape`; `params` follow parameter order.
  template <typename T>
  Var forward_on_tape(Tape<T>& tape, Var input, std::span<const Var> params) const;

  // Throws ShapeError unless batch is (n, H, W, C) with n >= 1.
  void check_batch(const Tensor& batch) const;

 private:
  ModelSpec spec_;
  std::vector<LayerInfo> layers_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::size_t feature_width_ = 0;
};

}  // namespace leaffed
