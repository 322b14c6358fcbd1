#include "leaffed/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "leaffed/random.hpp"

namespace leaffed {

void AugmentSpec::validate() const {
  if (transforms.empty()) throw ValidationError("augmentation needs at least one transform");
  if (!(max_rotation_degrees >= 0.0 && max_rotation_degrees <= 15.0)) {
    throw ValidationError("rotation bound must lie in [0, 15] degrees");
  }
  if (!(max_translation_fraction >= 0.0 && max_translation_fraction <= 0.10)) {
    throw ValidationError("translation bound must lie in [0, 0.1] of the image size");
  }
}

namespace {

void require_image(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("expected an (H, W, C) image, got " + shape_string(image.shape()));
}

}  // namespace

Tensor flip_horizontal(const Tensor& image) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape(), 0.0f);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double degrees) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  auto pixel = [&](long y, long x, std::size_t k) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return image[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c + k];
  };
  Tensor out(image.shape(), 0.0f);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1.0 - ax) * pixel(y0, x0, k) + ax * pixel(y0, x0 + 1, k);
        const double bottom = (1.0 - ax) * pixel(y0 + 1, x0, k) + ax * pixel(y0 + 1, x0 + 1, k);
        out[(y * w + x) * c + k] = static_cast<float>(std::clamp((1.0 - ay) * top + ay * bottom, 0.0, 1.0));
      }
    }
  }
  return out;
}

Tensor translate(const Tensor& image, int shift_x, int shift_y) {
  require_image(image);
  const long h = static_cast<long>(image.dim(0)), w = static_cast<long>(image.dim(1));
  const std::size_t c = image.dim(2);
  Tensor out(image.shape(), 0.0f);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const long sx = x - shift_x, sy = y - shift_y;
      if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
      for (std::size_t k = 0; k < c; ++k) {
        out[static_cast<std::size_t>(y * w + x) * c + k] = image[static_cast<std::size_t>(sy * w + sx) * c + k];
      }
    }
  }
  return out;
}

Tensor apply_augmentation(const Tensor& image, const AugmentRecord& record) {
  switch (record.transform) {
    case Transform::horizontal_flip:
      return flip_horizontal(image);
    case Transform::rotation:
      return rotate(image, record.rotation_degrees);
    case Transform::translation:
      return translate(image, record.shift_x, record.shift_y);
  }
  throw ValidationError("unknown transform");
}

Dataset balance_with_augmentation(const Dataset& ds, const AugmentSpec& spec) {
  spec.validate();
  ds.validate();
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw ValidationError("cannot balance: class '" + ds.class_names[c] + "' has no samples");
  }
  const std::size_t largest = *std::max_element(counts.begin(), counts.end());
  const std::size_t target = spec.target_per_class == 0 ? largest : spec.target_per_class;
  if (target < largest) {
    throw ValidationError("augmentation target " + std::to_string(target) + " is below the largest class count " +
                          std::to_string(largest));
  }

  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  const std::size_t appended_total = target * counts.size() - ds.size();
  if (appended_total == 0) return ds;
  Dataset out = ds;
  if (out.augmentation.empty()) out.augmentation.assign(ds.size(), std::nullopt);

  const std::size_t h = ds.height(), w = ds.width(), ch = ds.channels();
  const int max_dx = static_cast<int>(std::floor(spec.max_translation_fraction * static_cast<double>(w)));
  const int max_dy = static_cast<int>(std::floor(spec.max_translation_fraction * static_cast<double>(h)));
  std::vector<float> pixels(ds.images.values());
  pixels.reserve(pixels.size() + appended_total * ds.sample_size());

  for (std::size_t c = 0; c < counts.size(); ++c) {
    Rng rng(derive_seed(spec.seed, 0xa06, c));
    for (std::size_t added = counts[c]; added < target; ++added) {
      AugmentRecord record;
      record.source = by_class[c][rng.below(by_class[c].size())];
      record.transform = spec.transforms[rng.below(spec.transforms.size())];
      if (record.transform == Transform::rotation) {
        record.rotation_degrees = rng.uniform(-spec.max_rotation_degrees, spec.max_rotation_degrees);
      } else if (record.transform == Transform::translation) {
        record.shift_x = static_cast<int>(rng.below(2 * max_dx + 1)) - max_dx;
        record.shift_y = static_cast<int>(rng.below(2 * max_dy + 1)) - max_dy;
      }
      const auto src = ds.image(record.source);
      const Tensor image({h, w, ch}, std::vector<float>(src.begin(), src.end()));
      const Tensor augmented = apply_augmentation(image, record);
      pixels.insert(pixels.end(), augmented.data().begin(), augmented.data().end());
      out.labels.push_back(static_cast<int>(c));
      out.augmentation.push_back(record);
    }
  }
  out.images = Tensor({out.labels.size(), h, w, ch}, std::move(pixels));
  return out;
}

}  // namespace leaffed
