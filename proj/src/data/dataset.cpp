#include "leaffed/dataset.hpp"

#include <algorithm>

namespace leaffed {

std::string_view provenance_name(Provenance p) {
  return p == Provenance::synthetic ? "synthetic" : "directory";
}

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::horizontal_flip:
      return "horizontal_flip";
    case Transform::rotation:
      return "rotation";
    case Transform::translation:
      return "translation";
  }
  return "unknown";
}

Transform parse_transform(std::string_view name) {
  if (name == "horizontal_flip") return Transform::horizontal_flip;
  if (name == "rotation") return Transform::rotation;
  if (name == "translation") return Transform::translation;
  throw ValidationError("unknown transform '" + std::string(name) +
                        "' (expected horizontal_flip, rotation or translation)");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_names = class_names;
  out.provenance = provenance;
  const std::size_t stride = sample_size();
  std::vector<float> pixels(indices.size() * stride);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw ValidationError("subset index " + std::to_string(src) + " out of range");
    std::copy_n(images.raw() + src * stride, stride, pixels.data() + i * stride);
    out.labels.push_back(labels[src]);
    if (!augmentation.empty()) out.augmentation.push_back(augmentation[src]);
  }
  out.images = Tensor({indices.size(), height(), width(), channels()}, std::move(pixels));
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (int label : labels) counts.at(static_cast<std::size_t>(label)) += 1;
  return counts;
}

void Dataset::validate() const {
  if (class_names.empty()) throw DataError(DataErrorKind::no_classes, "dataset has no class names");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw DataError(DataErrorKind::inconsistent_dataset,
                    "image tensor " + shape_string(images.shape()) + " does not hold " +
                        std::to_string(labels.size()) + " samples");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_names.size()) {
      throw DataError(DataErrorKind::inconsistent_dataset, "label " + std::to_string(label) + " out of range");
    }
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError(DataErrorKind::inconsistent_dataset, "pixel value outside [0, 1]");
    }
  }
  if (!augmentation.empty() && augmentation.size() != labels.size()) {
    throw DataError(DataErrorKind::inconsistent_dataset, "augmentation records do not match sample count");
  }
}

}  // namespace leaffed
