#include <cmath>
#include <numbers>

#include "leaffed/memetic.hpp"

namespace leaffed {

void LandscapeSpec::validate() const {
  if (genes < 1) throw ValidationError("landscape needs at least one gene");
  if (levels < 2) throw ValidationError("landscape genes need at least two levels");
  if (!(period > 0.0) || !std::isfinite(period)) throw ValidationError("landscape period must be positive");
  if (!(ripple >= 0.0) || !std::isfinite(ripple)) throw ValidationError("landscape ripple must be non-negative");
}

Landscape make_landscape(const LandscapeSpec& spec) {
  spec.validate();
  Landscape out;
  Rng rng(derive_seed(spec.seed, 0x1a4d));
  for (std::size_t g = 0; g < spec.genes; ++g) {
    out.layout.genes.push_back({"x" + std::to_string(g), 0.0, static_cast<double>(spec.levels - 1), true, 1.0});
    out.summit.genes.push_back(static_cast<double>(rng.below(spec.levels)));
  }
  out.fitness = [centre = out.summit.genes, period = spec.period, ripple = spec.ripple](const Chromosome& c) {
    double cost = 0.0;
    for (std::size_t g = 0; g < centre.size(); ++g) {
      const double u = (c.genes.at(g) - centre[g]) / period;
      cost += u * u + ripple * (1.0 - std::cos(2.0 * std::numbers::pi * u));
    }
    return Evaluation{1.0 / (1.0 + cost), 0, false};
  };
  return out;
}

}  // namespace leaffed
