#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leaffed/error.hpp"
#include "leaffed/tensor.hpp"

namespace leaffed {

enum class DataErrorKind {
  malformed_header,
  unsupported_magic,
  truncated_pixels,
  empty_class_directory,
  no_classes,
  inconsistent_dataset,
  io_failure,
};

class DataError : public Error {
 public:
  DataError(DataErrorKind kind, const std::string& message) : Error(message), kind_(kind) {}
  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

enum class Provenance { synthetic, directory };
std::string_view provenance_name(Provenance p);

enum class Transform { horizontal_flip, rotation, translation };
std::string_view transform_name(Transform t);
Transform parse_transform(std::string_view name);

// How an appended sample was derived from an original.
struct AugmentRecord {
  std::size_t source = 0;
  Transform transform = Transform::horizontal_flip;
  double rotation_degrees = 0.0;
  int shift_x = 0;
  int shift_y = 0;
};

// Labeled images stored as one (N, H, W, C) tensor with pixel values in
// [0, 1]. Labels index class_names.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Provenance provenance = Provenance::synthetic;
  // Empty, or one entry per sample (nullopt for originals).
  std::vector<std::optional<AugmentRecord>> augmentation;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
  std::size_t class_count() const noexcept { return class_names.size(); }
  std::size_t sample_size() const { return height() * width() * channels(); }

  std::span<const float> image(std::size_t i) const {
    return images.data().subspan(i * sample_size(), sample_size());
  }

  // Copies the listed samples in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  std::vector<std::size_t> class_counts() const;

  // Checks shape/label/range invariants; throws DataError.
  void validate() const;
};

}  // namespace leaffed
