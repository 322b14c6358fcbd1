#include "leaffed/train.hpp"

#include <algorithm>
#include <cmath>

#include "leaffed/random.hpp"

namespace leaffed {

Tensor gather_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t stride = ds.sample_size();
  std::vector<float> pixels(indices.size() * stride);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto img = ds.image(indices[i]);
    std::copy(img.begin(), img.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return Tensor({indices.size(), ds.height(), ds.width(), ds.channels()}, std::move(pixels));
}

BatchGradients loss_and_gradients(const Model& model, const Tensor& batch, std::span<const int> labels) {
  model.check_batch(batch);
  if (labels.size() != batch.dim(0)) throw ValidationError("label count does not match the batch");
  const std::size_t classes = model.spec().classes;
  Tape<float> tape;
  std::vector<Var> params;
  params.reserve(model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    params.push_back(tape.variable(model.parameters()[i], model.parameter_names()[i]));
  }
  const Var logits = model.forward_on_tape(tape, tape.constant(batch), params);
  const Var loss = ops::softmax_cross_entropy(tape, logits, onehot_rows<float>(labels, classes));
  tape.backward(loss);

  BatchGradients out;
  out.loss = tape.value(loss)[0];
  const Tensor& lv = tape.value(logits);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = lv.raw() + i * classes;
    const auto pred = std::max_element(row, row + classes) - row;
    out.correct += pred == labels[i] ? 1 : 0;
  }
  out.grads.reserve(params.size());
  for (Var p : params) out.grads.push_back(tape.grad(p));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  auto order = iota_indices(n);
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(order);
  return order;
}

TrainHistory train_epochs(Model& model, OptimizerState<float>& optimizer, const Dataset& ds,
                          const TrainOptions& options) {
  if (ds.empty()) throw ValidationError("cannot train on an empty dataset");
  if (options.batch_size == 0) throw ValidationError("batch size must be positive");
  if (ds.class_count() != model.spec().classes) {
    throw ValidationError("dataset has " + std::to_string(ds.class_count()) + " classes but the model predicts " +
                          std::to_string(model.spec().classes));
  }
  TrainHistory history;
  const std::size_t n = ds.size();
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const std::size_t epoch = options.epoch_offset + e;
    const auto order = epoch_order(n, options.seed, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t stop = std::min(n, start + options.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = ds.labels[idx[i]];
      BatchGradients g = loss_and_gradients(model, gather_batch(ds, idx), labels);
      if (!std::isfinite(g.loss)) {
        throw NumericError("training diverged: loss is " + std::to_string(g.loss) + " at epoch " +
                           std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      }
      loss_sum += g.loss * static_cast<double>(idx.size());
      correct += g.correct;
      optimizer_step<float>(model.parameters(), g.grads, optimizer, model.parameter_names());
    }
    history.push_back({epoch, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  return history;
}

Tensor predict_logits(const Model& model, const Dataset& ds, std::size_t batch_size) {
  if (ds.empty()) throw ValidationError("cannot predict on an empty dataset");
  batch_size = std::max<std::size_t>(1, batch_size);
  const std::size_t classes = model.spec().classes;
  std::vector<float> out;
  out.reserve(ds.size() * classes);
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t stop = std::min(ds.size(), start + batch_size);
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const Tensor logits = model.forward(gather_batch(ds, idx));
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return Tensor({ds.size(), classes}, std::move(out));
}

std::vector<double> predict_probabilities(const Model& model, const Dataset& ds, std::size_t batch_size) {
  const Tensor64 probs = softmax_rows(predict_logits(model, ds, batch_size).cast<double>());
  return probs.values();
}

}  // namespace leaffed
