#include "leaffed/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "leaffed/random.hpp"

namespace leaffed {
namespace {

double evaluate(const ScalarFunction& fn, std::span<const Tensor64> params) {
  Tape<double> tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  const Var out = fn(tape, leaves);
  const auto& value = tape.value(out);
  if (value.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  return value[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& fn, std::span<const Tensor64> params,
                           const GradCheckOptions& options) {
  std::vector<Tensor64> analytic;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < params.size(); ++i) {
      leaves.push_back(tape.variable(params[i], "p" + std::to_string(i)));
    }
    const Var out = fn(tape, leaves);
    tape.backward(out);
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor64> probe(params.begin(), params.end());
  Rng rng(options.sample_seed);
  for (std::size_t pi = 0; pi < probe.size(); ++pi) {
    auto coords = iota_indices(probe[pi].size());
    if (options.max_coordinates_per_parameter > 0 && coords.size() > options.max_coordinates_per_parameter) {
      rng.shuffle(coords);
      coords.resize(options.max_coordinates_per_parameter);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double original = probe[pi][idx];
      const double up = original + options.step;
      const double down = original - options.step;
      probe[pi][idx] = up;
      const double f_up = evaluate(fn, probe);
      probe[pi][idx] = down;
      const double f_down = evaluate(fn, probe);
      probe[pi][idx] = original;
      // Divide by the representable step actually taken.
      const double numeric = (f_up - f_down) / (up - down);
      const double exact = analytic[pi][idx];
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.denominator_floor});
      const double rel_err = abs_err / denom;
      ++report.coordinates_checked;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel_err > report.max_relative_error) {
        report.max_relative_error = rel_err;
        report.worst_parameter = pi;
        report.worst_index = idx;
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace leaffed
