#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "leaffed/dataset.hpp"
#include "leaffed/model.hpp"
#include "leaffed/optimizer.hpp"

namespace leaffed {

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  // Global index of the first epoch; selects the shuffle stream so that a
  // run split into chunks sees the same batch order as one long run.
  std::size_t epoch_offset = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean cross-entropy over the epoch's samples
  double accuracy = 0.0;  // training accuracy measured before each update
};

using TrainHistory = std::vector<EpochStats>;

struct BatchGradients {
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<Tensor> grads;  // in parameter order
};

// Stacks the listed samples into an (n, H, W, C) batch.
Tensor gather_batch(const Dataset& ds, std::span<const std::size_t> indices);

BatchGradients loss_and_gradients(const Model& model, const Tensor& batch, std::span<const int> labels);

// Epoch order for global epoch `epoch`: a Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Minibatch training with a per-epoch seeded shuffle. Throws on an empty
// dataset and NumericError when the loss stops being finite.
TrainHistory train_epochs(Model& model, OptimizerState<float>& optimizer, const Dataset& ds,
                          const TrainOptions& options);

// Logits for every sample, (n, classes).
Tensor predict_logits(const Model& model, const Dataset& ds, std::size_t batch_size = 256);

// Row-wise softmax of predict_logits as doubles, row-major (n, classes).
std::vector<double> predict_probabilities(const Model& model, const Dataset& ds, std::size_t batch_size = 256);

}  // namespace leaffed
