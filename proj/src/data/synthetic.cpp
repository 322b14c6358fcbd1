#include "leaffed/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "leaffed/random.hpp"

namespace leaffed {

void SyntheticSpec::validate() const {
  if (classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (per_class < 1) throw ValidationError("synthetic data needs at least 1 sample per class");
  if (height < 4 || width < 4) throw ValidationError("synthetic images must be at least 4x4");
  if (channels != 1 && channels != 3) throw ValidationError("synthetic images have 1 or 3 channels");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ValidationError("synthetic noise must lie in [0, 1]");
  if (!(jitter >= 0.0 && jitter <= 0.25)) throw ValidationError("synthetic jitter must lie in [0, 0.25]");
}

namespace {

struct ClassStyle {
  double cx, cy;        // blob centre, unit coordinates
  double radius;        // unit radius
  double aspect;        // y/x radius ratio
  double frequency;     // stripe cycles across the blob
  double orientation;   // stripe direction, radians
  double tint[3];
};

ClassStyle style_for(std::size_t c, std::size_t classes) {
  constexpr double pi = std::numbers::pi;
  const double angle = 2.0 * pi * static_cast<double>(c) / static_cast<double>(classes);
  ClassStyle s{};
  s.cx = 0.5 + 0.22 * std::cos(angle);
  s.cy = 0.5 + 0.22 * std::sin(angle);
  s.radius = 0.15 + 0.04 * static_cast<double>(c % 3);
  s.aspect = 0.7 + 0.15 * static_cast<double>(c % 4);
  s.frequency = 1.5 + 1.25 * static_cast<double>(c % 4);
  s.orientation = pi * static_cast<double>(c) / static_cast<double>(classes);
  s.tint[0] = 0.25 + 0.5 * static_cast<double>(c % 2);
  s.tint[1] = 0.85 - 0.1 * static_cast<double>(c % 3);
  s.tint[2] = 0.2 + 0.15 * static_cast<double>((c / 2) % 3);
  return s;
}

std::string class_name(std::size_t c, std::size_t classes) {
  std::string digits = std::to_string(c);
  const std::size_t width = std::max<std::size_t>(2, std::to_string(classes - 1).size());
  digits.insert(0, width - digits.size(), '0');
  return "class_" + digits;
}

}  // namespace

Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.classes * spec.per_class;
  const std::size_t h = spec.height, w = spec.width, ch = spec.channels;
  Dataset ds;
  ds.provenance = Provenance::synthetic;
  for (std::size_t c = 0; c < spec.classes; ++c) ds.class_names.push_back(class_name(c, spec.classes));
  std::vector<float> pixels(n * h * w * ch);
  ds.labels.reserve(n);

  for (std::size_t c = 0; c < spec.classes; ++c) {
    const ClassStyle style = style_for(c, spec.classes);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t sample = c * spec.per_class + i;
      Rng rng(derive_seed(spec.seed, c, i));
      const double cx = style.cx + rng.uniform(-spec.jitter, spec.jitter);
      const double cy = style.cy + rng.uniform(-spec.jitter, spec.jitter);
      const double rx = style.radius * rng.uniform(0.85, 1.15);
      const double ry = rx * style.aspect;
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dir_x = std::cos(style.orientation), dir_y = std::sin(style.orientation);
      const double background = rng.uniform(0.05, 0.15);
      float* out = pixels.data() + sample * h * w * ch;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
          const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
          const double ex = (u - cx) / rx, ey = (v - cy) / ry;
          const bool inside = ex * ex + ey * ey <= 1.0;
          double intensity = background;
          if (inside) {
            const double along = (ex * dir_x + ey * dir_y) * 0.5;
            const double stripe = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * style.frequency * along + phase);
            intensity = 0.55 + 0.35 * stripe;
          }
          for (std::size_t k = 0; k < ch; ++k) {
            const double tint = ch == 1 ? 1.0 : (inside ? style.tint[k] : 1.0);
            const double value = std::clamp(intensity * tint + spec.noise * rng.normal(), 0.0, 1.0);
            out[(y * w + x) * ch + k] = static_cast<float>(std::lround(value * 255.0)) / 255.0f;
          }
        }
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  ds.images = Tensor({n, h, w, ch}, std::move(pixels));
  return ds;
}

}  // namespace leaffed
