#pragma once

#include <cstddef>
#include <cstdint>

#include "leaffed/dataset.hpp"

namespace leaffed {

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t per_class = 100;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;  // 1 or 3
  std::uint64_t seed = 42;
  double noise = 0.04;   // std-dev of per-pixel Gaussian noise
  double jitter = 0.10;  // max blob-centre offset, unit coordinates

  void validate() const;
};

// Procedural leaf images: an elliptical blob whose position, size, stripe
// frequency and tint depend on the class, plus seeded jitter and noise.
// Pixels are 8-bit quantized so a written copy reloads bit-for-bit.
// Samples are ordered class by class.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace leaffed
