#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmtra/corpus.hpp"
#include "cmtra/errors.hpp"

namespace cmtra::eval {

/// counts[g][p] = number of samples with gold label g predicted as p, both
/// indexed by position in `labels`.
struct ConfusionMatrix {
  std::vector<OffenseLabel> labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t size() const noexcept { return labels.size(); }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }
  std::size_t row_sum(std::size_t g) const {
    std::size_t n = 0;
    for (auto c : counts[g]) n += c;
    return n;
  }
  std::size_t col_sum(std::size_t p) const {
    std::size_t n = 0;
    for (const auto& row : counts) n += row[p];
    return n;
  }
  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
  }
  std::size_t true_positives(std::size_t c) const { return counts[c][c]; }
  std::size_t false_positives(std::size_t c) const { return col_sum(c) - counts[c][c]; }
  std::size_t false_negatives(std::size_t c) const { return row_sum(c) - counts[c][c]; }
};

inline ConfusionMatrix confusion_matrix(std::span<const OffenseLabel> gold, std::span<const OffenseLabel> pred,
                                        std::span<const OffenseLabel> labels) {
  if (gold.size() != pred.size()) {
    throw LengthMismatchError("gold has " + std::to_string(gold.size()) + " labels, predictions " +
                              std::to_string(pred.size()));
  }
  if (gold.empty()) throw EmptyEvaluationError("no samples to score");
  ConfusionMatrix cm{{labels.begin(), labels.end()},
                     std::vector<std::vector<std::size_t>>(labels.size(), std::vector<std::size_t>(labels.size()))};
  auto position = [&](OffenseLabel l) {
    auto it = std::find(labels.begin(), labels.end(), l);
    if (it == labels.end()) throw LabelSetError("label " + std::string(short_code(l)) + " outside the label set");
    return static_cast<std::size_t>(it - labels.begin());
  };
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm.counts[position(gold[i])][position(pred[i])];
  return cm;
}

inline ConfusionMatrix confusion_matrix(const std::vector<OffenseLabel>& gold, const std::vector<OffenseLabel>& pred,
                                        const std::vector<OffenseLabel>& labels) {
  return confusion_matrix(std::span<const OffenseLabel>(gold), std::span<const OffenseLabel>(pred),
                          std::span<const OffenseLabel>(labels));
}

/// Harmonic mean; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct ClassMetrics {
  OffenseLabel label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool zero_division = false;  // some ratio had a zero denominator and was reported as 0
};

inline std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out;
  out.reserve(cm.size());
  for (std::size_t c = 0; c < cm.size(); ++c) {
    ClassMetrics m;
    m.label = cm.labels[c];
    const auto tp = static_cast<double>(cm.true_positives(c));
    const auto predicted = cm.col_sum(c);
    const auto actual = cm.row_sum(c);
    m.support = actual;
    if (predicted > 0) m.precision = tp / static_cast<double>(predicted);
    else m.zero_division = true;
    if (actual > 0) m.recall = tp / static_cast<double>(actual);
    else m.zero_division = true;
    if (m.precision + m.recall > 0.0) m.f1 = f1_score(m.precision, m.recall);
    else m.zero_division = true;
    out.push_back(m);
  }
  return out;
}

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  Averages macro;
  Averages weighted;
  std::size_t total_support = 0;
};

/// Accuracy = trace / total; macro = unweighted mean over classes; weighted
/// = support-weighted mean (weight of a class = support / total).
inline MetricsReport aggregate_metrics(const std::vector<ClassMetrics>& per_class, const ConfusionMatrix& cm) {
  if (per_class.size() != cm.size()) throw LengthMismatchError("per-class metrics do not cover the label set");
  const std::size_t total = cm.total();
  if (total == 0) throw EmptyEvaluationError("confusion matrix is empty");
  MetricsReport r;
  r.per_class = per_class;
  r.total_support = total;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  const double k = static_cast<double>(per_class.size());
  for (const auto& m : per_class) {
    r.macro.precision += m.precision / k;
    r.macro.recall += m.recall / k;
    r.macro.f1 += m.f1 / k;
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.weighted.precision += m.precision * w;
    r.weighted.recall += m.recall * w;
    r.weighted.f1 += m.f1 * w;
  }
  return r;
}

inline MetricsReport evaluate(const ConfusionMatrix& cm) { return aggregate_metrics(per_class_prf(cm), cm); }

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace detail

/// Aligned table: one row per class in label-set order, then Accuracy,
/// Macro Average and Weighted Average. Four decimals.
inline std::string format_report(const MetricsReport& r) {
  constexpr int name_w = 32, col_w = 11;
  std::ostringstream os;
  os << std::left << std::setw(name_w) << "" << std::right << std::setw(col_w) << "precision" << std::setw(col_w)
     << "recall" << std::setw(col_w) << "f1-score" << std::setw(col_w) << "support" << "\n\n";
  for (const auto& m : r.per_class) {
    os << std::left << std::setw(name_w) << display_name(m.label) << std::right << std::setw(col_w)
       << detail::fixed4(m.precision) << std::setw(col_w) << detail::fixed4(m.recall) << std::setw(col_w)
       << detail::fixed4(m.f1) << std::setw(col_w) << m.support << '\n';
  }
  os << '\n';
  os << std::left << std::setw(name_w) << "Accuracy" << std::right << std::setw(col_w) << "" << std::setw(col_w) << ""
     << std::setw(col_w) << detail::fixed4(r.accuracy) << std::setw(col_w) << r.total_support << '\n';
  auto avg_row = [&](const char* name, const Averages& a) {
    os << std::left << std::setw(name_w) << name << std::right << std::setw(col_w) << detail::fixed4(a.precision)
       << std::setw(col_w) << detail::fixed4(a.recall) << std::setw(col_w) << detail::fixed4(a.f1)
       << std::setw(col_w) << r.total_support << '\n';
  };
  avg_row("Macro Average", r.macro);
  avg_row("Weighted Average", r.weighted);
  return os.str();
}

/// Full-precision machine form of the report plus the raw matrix.
inline nlohmann::json report_json(const MetricsReport& r, const ConfusionMatrix& cm) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : r.per_class) {
    classes.push_back({{"label", std::string(short_code(m.label))},
                       {"name", std::string(display_name(m.label))},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"zero_division", m.zero_division}});
  }
  nlohmann::json labels = nlohmann::json::array();
  for (auto l : cm.labels) labels.push_back(std::string(short_code(l)));
  return {{"classes", classes},
          {"accuracy", r.accuracy},
          {"macro_avg", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}},
          {"weighted_avg", {{"precision", r.weighted.precision}, {"recall", r.weighted.recall}, {"f1", r.weighted.f1}}},
          {"total_support", r.total_support},
          {"confusion_matrix", {{"labels", labels}, {"counts", cm.counts}}}};
}

/// Heatmap data: header plus one row per (gold, predicted) cell with the
/// count and its fraction of the gold row (0 for an empty row).
inline std::string heatmap_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "gold,predicted,count,row_fraction\n";
  os << std::setprecision(17);
  for (std::size_t g = 0; g < cm.size(); ++g) {
    const auto row = cm.row_sum(g);
    for (std::size_t p = 0; p < cm.size(); ++p) {
      const double frac = row == 0 ? 0.0 : static_cast<double>(cm.counts[g][p]) / static_cast<double>(row);
      os << short_code(cm.labels[g]) << ',' << short_code(cm.labels[p]) << ',' << cm.counts[g][p] << ',' << frac
         << '\n';
    }
  }
  return os.str();
}

struct ClassificationReport {
  std::string text;
  nlohmann::json record;
  std::string heatmap;
};

inline ClassificationReport classification_report(const MetricsReport& r, const ConfusionMatrix& cm) {
  return {format_report(r), report_json(r, cm), heatmap_csv(cm)};
}

}  // namespace cmtra::eval
