#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "leaffed/tape.hpp"

namespace leaffed {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator so
  // that exactly-zero gradients compare by absolute difference.
  double denominator_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coordinates_per_parameter = 0;
  std::uint64_t sample_seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  bool passed = true;
};

// Builds a scalar on the tape from the given parameter leaves.
using ScalarFunction = std::function<Var(Tape<double>&, std::span<const Var>)>;

// Compares tape gradients with central differences at 64-bit precision.
// The reported error is a maximum over every checked coordinate.
GradCheckReport grad_check(const ScalarFunction& fn, std::span<const Tensor64> params,
                           const GradCheckOptions& options = {});

}  // namespace leaffed
