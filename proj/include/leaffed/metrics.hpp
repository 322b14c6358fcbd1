#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leaffed {

// counts[true * classes + pred].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * classes_ + pred); }
  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t classes);

enum class Averaging { macro, weighted };
std::string_view averaging_name(Averaging a);
Averaging parse_averaging(std::string_view name);

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

// One-vs-rest curve summary; classes without both positives and negatives
// are nullopt and left out of the mean.
struct CurveMetrics {
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

struct MetricsReport {
  Averaging averaging = Averaging::macro;
  std::vector<ClassMetrics> per_class;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double kappa = 0.0;
  std::optional<CurveMetrics> auc;
  std::optional<CurveMetrics> average_precision;
};

// Zero denominators give 0. Throws ValidationError on an empty matrix.
MetricsReport classification_report(const ConfusionMatrix& cm, Averaging averaging = Averaging::macro);

double cohens_kappa(const ConfusionMatrix& cm);

// `scores` is row-major (n, classes).
CurveMetrics roc_auc_ovr(std::span<const double> scores, std::span<const int> labels, std::size_t classes);
CurveMetrics average_precision_ovr(std::span<const double> scores, std::span<const int> labels,
                                   std::size_t classes);

// Index of the largest score per row; ties go to the lower class index.
std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes);

// Full report from per-class scores: argmax predictions plus AUC and AP
// (omitted when no class has both positives and negatives).
MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, std::size_t classes,
                              Averaging averaging = Averaging::macro);

std::string report_json(const MetricsReport& report, std::span<const std::string> class_names);

// Columns: model, precision, recall, f1, accuracy, kappa.
std::string report_csv_header();
std::string report_csv_row(std::string_view model, const MetricsReport& report);

// Fixed 6-decimal formatting used by every CSV/JSON writer.
std::string format_metric(double v);

}  // namespace leaffed
