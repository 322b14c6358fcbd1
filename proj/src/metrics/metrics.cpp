#include "leaffed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>

#include "leaffed/error.hpp"

namespace leaffed {

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t n) {
  if (truth >= classes_ || pred >= classes_) throw ValidationError("confusion matrix index out of range");
  counts_[truth * classes_ + pred] += n;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += counts_[c * classes_ + c];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t classes) {
  if (preds.size() != labels.size()) {
    throw ValidationError("prediction count " + std::to_string(preds.size()) + " does not match label count " +
                          std::to_string(labels.size()));
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || preds[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes ||
        static_cast<std::size_t>(preds[i]) >= classes) {
      throw ValidationError("label or prediction out of range at sample " + std::to_string(i));
    }
    cm.add(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

std::string_view averaging_name(Averaging a) { return a == Averaging::macro ? "macro" : "weighted"; }

Averaging parse_averaging(std::string_view name) {
  if (name == "macro") return Averaging::macro;
  if (name == "weighted") return Averaging::weighted;
  throw ValidationError("unknown averaging '" + std::string(name) + "' (expected macro or weighted)");
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.classes() == 0 || cm.total() == 0) throw ValidationError("metrics need a nonempty confusion matrix");
}

void check_scores(std::span<const double> scores, std::span<const int> labels, std::size_t classes) {
  if (classes == 0 || scores.size() != labels.size() * classes) {
    throw ValidationError("score matrix must be (" + std::to_string(labels.size()) + ", " + std::to_string(classes) +
                          ")");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("scores must be finite");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ValidationError("label out of range");
  }
}

template <typename PerClass>
CurveMetrics one_vs_rest(std::span<const double> scores, std::span<const int> labels, std::size_t classes,
                         const char* what, PerClass&& per_class) {
  check_scores(scores, labels, classes);
  CurveMetrics out;
  out.per_class.resize(classes);
  std::size_t defined = 0;
  double sum = 0.0;
  std::vector<double> column(labels.size());
  std::vector<bool> positive(labels.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores[i * classes + c];
      positive[i] = labels[i] == static_cast<int>(c);
      pos += positive[i];
    }
    if (pos == 0 || pos == labels.size()) continue;
    const double v = per_class(column, positive, pos);
    out.per_class[c] = v;
    sum += v;
    ++defined;
  }
  if (defined == 0) {
    throw ValidationError(std::string(what) + " undefined: no class has both positive and negative samples");
  }
  out.mean = sum / static_cast<double>(defined);
  return out;
}

}  // namespace

MetricsReport classification_report(const ConfusionMatrix& cm, Averaging averaging) {
  require_nonempty(cm);
  const std::size_t classes = cm.classes();
  const std::uint64_t total = cm.total();
  MetricsReport r;
  r.averaging = averaging;
  r.per_class.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    ClassMetrics& m = r.per_class[c];
    m.tp = cm.at(c, c);
    m.fp = cm.col_sum(c) - m.tp;
    m.fn = cm.row_sum(c) - m.tp;
    m.tn = total - m.tp - m.fp - m.fn;
    m.support = m.tp + m.fn;
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    const double pr = m.precision + m.recall;
    m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const ClassMetrics& m = r.per_class[c];
    const double w = averaging == Averaging::macro ? 1.0 / static_cast<double>(classes) : ratio(m.support, total);
    r.precision += w * m.precision;
    r.recall += w * m.recall;
    r.f1 += w * m.f1;
  }
  r.accuracy = ratio(cm.trace(), total);
  r.kappa = cohens_kappa(cm);
  return r;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  const double total = static_cast<double>(cm.total());
  const double po = static_cast<double>(cm.trace()) / total;
  double pe = 0.0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    pe += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c));
  }
  pe /= total * total;
  if (pe >= 1.0) return 0.0;
  return std::clamp((po - pe) / (1.0 - pe), -1.0, 1.0);
}

CurveMetrics roc_auc_ovr(std::span<const double> scores, std::span<const int> labels, std::size_t classes) {
  std::vector<std::size_t> order(labels.size());
  return one_vs_rest(scores, labels, classes, "ROC-AUC",
                     [&](const std::vector<double>& s, const std::vector<bool>& positive, std::size_t pos) {
                       std::iota(order.begin(), order.end(), 0);
                       std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
                       // Twice the rank sum of positives; tied groups share
                       // the average rank (first + last, in doubled units).
                       std::uint64_t doubled = 0;
                       for (std::size_t i = 0; i < order.size();) {
                         std::size_t j = i;
                         std::uint64_t tied_pos = 0;
                         while (j < order.size() && s[order[j]] == s[order[i]]) tied_pos += positive[order[j++]];
                         doubled += tied_pos * ((i + 1) + j);
                         i = j;
                       }
                       const std::uint64_t neg = s.size() - pos;
                       const std::uint64_t doubled_u = doubled - pos * (pos + 1);
                       return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos * neg));
                     });
}

CurveMetrics average_precision_ovr(std::span<const double> scores, std::span<const int> labels,
                                   std::size_t classes) {
  std::vector<std::size_t> order(labels.size());
  return one_vs_rest(scores, labels, classes, "average precision",
                     [&](const std::vector<double>& s, const std::vector<bool>& positive, std::size_t pos) {
                       std::iota(order.begin(), order.end(), 0);
                       std::stable_sort(order.begin(), order.end(),
                                        [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
                       double sum = 0.0;
                       std::size_t tp = 0;
                       for (std::size_t k = 0; k < order.size(); ++k) {
                         if (!positive[order[k]]) continue;
                         ++tp;
                         sum += static_cast<double>(tp) / static_cast<double>(k + 1);
                       }
                       return sum / static_cast<double>(pos);
                     });
}

std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes) {
  if (classes == 0 || scores.size() % classes != 0) throw ValidationError("score matrix has a ragged shape");
  std::vector<int> out(scores.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = scores.subspan(i * classes, classes);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, std::size_t classes,
                              Averaging averaging) {
  check_scores(scores, labels, classes);
  const auto preds = argmax_rows(scores, classes);
  MetricsReport r = classification_report(confusion_matrix(preds, labels, classes), averaging);
  try {
    r.auc = roc_auc_ovr(scores, labels, classes);
    r.average_precision = average_precision_ovr(scores, labels, classes);
  } catch (const ValidationError&) {
    r.auc.reset();
    r.average_precision.reset();
  }
  return r;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v == 0.0 ? 0.0 : v);
  return buf;
}

namespace {

nlohmann::ordered_json curve_json(const CurveMetrics& m) {
  nlohmann::ordered_json j;
  j["mean"] = m.mean;
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& v : m.per_class) per.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json());
  return j;
}

}  // namespace

std::string report_json(const MetricsReport& r, std::span<const std::string> class_names) {
  nlohmann::ordered_json j;
  j["averaging"] = averaging_name(r.averaging);
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["kappa"] = r.kappa;
  if (r.auc) j["auc"] = curve_json(*r.auc);
  if (r.average_precision) j["average_precision"] = curve_json(*r.average_precision);
  auto& rows = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    nlohmann::ordered_json row;
    row["class"] = c < class_names.size() ? class_names[c] : std::to_string(c);
    row["precision"] = m.precision;
    row["recall"] = m.recall;
    row["f1"] = m.f1;
    row["support"] = m.support;
    row["tp"] = m.tp;
    row["fp"] = m.fp;
    row["fn"] = m.fn;
    row["tn"] = m.tn;
    rows.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string report_csv_header() { return "model,precision,recall,f1,accuracy,kappa\n"; }

std::string report_csv_row(std::string_view model, const MetricsReport& r) {
  return std::string(model) + "," + format_metric(r.precision) + "," + format_metric(r.recall) + "," +
         format_metric(r.f1) + "," + format_metric(r.accuracy) + "," + format_metric(r.kappa) + "\n";
}

}  // namespace leaffed
