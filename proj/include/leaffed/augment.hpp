#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "leaffed/dataset.hpp"

namespace leaffed {

struct AugmentSpec {
  std::vector<Transform> transforms{Transform::horizontal_flip, Transform::rotation, Transform::translation};
  std::size_t target_per_class = 0;  // 0 means the current largest class count
  std::uint64_t seed = 42;
  double max_rotation_degrees = 15.0;
  double max_translation_fraction = 0.10;

  void validate() const;
};

// Geometric transforms of one (H, W, C) image.
Tensor flip_horizontal(const Tensor& image);
// Rotation about the image centre, bilinear sampling, zero outside.
Tensor rotate(const Tensor& image, double degrees);
// Integer shift; vacated pixels are zero.
Tensor translate(const Tensor& image, int shift_x, int shift_y);
Tensor apply_augmentation(const Tensor& image, const AugmentRecord& record);

// Brings every class to exactly the target count by appending seeded
// transforms of uniformly chosen originals of that class. Originals keep
// their positions; appended samples follow, class by class.
Dataset balance_with_augmentation(const Dataset& ds, const AugmentSpec& spec);

}  // namespace leaffed
