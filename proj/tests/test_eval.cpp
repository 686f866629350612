#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "cmtra/eval.hpp"
#include "support/metric_oracle.hpp"

using namespace cmtra;
using namespace cmtra::eval;

namespace {

constexpr auto NO = OffenseLabel::NotOffensive;
constexpr auto OL = OffenseLabel::OtherLanguage;

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(ConfusionMatrix, HandTally) {
  const auto cm = confusion_matrix({NO, NO, OL}, {NO, OL, OL}, {NO, OL});
  EXPECT_EQ(cm.counts[0][0], 1u);
  EXPECT_EQ(cm.counts[0][1], 1u);
  EXPECT_EQ(cm.counts[1][1], 1u);
  EXPECT_EQ(cm.counts[1][0], 0u);
  EXPECT_EQ(cm.true_positives(1), 1u);
  EXPECT_EQ(cm.false_positives(1), 1u);
  EXPECT_EQ(cm.false_negatives(0), 1u);
  EXPECT_EQ(cm.total(), 3u);
}

TEST(ConfusionMatrix, PerfectPredictionsAreDiagonal) {
  Rng rng(1);
  const auto inst = fx::random_instance(rng);
  const auto cm = confusion_matrix(inst.gold, inst.gold, inst.labels);
  for (std::size_t g = 0; g < cm.size(); ++g)
    for (std::size_t p = 0; p < cm.size(); ++p)
      EXPECT_EQ(cm.counts[g][p], g == p ? cm.row_sum(g) : 0u);
  EXPECT_EQ(cm.trace(), inst.gold.size());
}

TEST(ConfusionMatrix, SingleSample) {
  const auto cm = confusion_matrix({OL}, {NO}, label_set(Language::Tamil));
  std::size_t ones = 0, sum = 0;
  for (const auto& row : cm.counts)
    for (auto c : row) {
      ones += c == 1;
      sum += c;
    }
  EXPECT_EQ(ones, 1u);
  EXPECT_EQ(sum, 1u);
  EXPECT_EQ(cm.counts[1][0], 1u);
}

TEST(ConfusionMatrix, Errors) {
  EXPECT_THROW(confusion_matrix({NO}, {NO, OL}, {NO, OL}), LengthMismatchError);
  EXPECT_THROW(confusion_matrix({}, {}, {NO, OL}), EmptyEvaluationError);
  EXPECT_THROW(confusion_matrix({OffenseLabel::TargetedOther}, {NO}, label_set(Language::Malayalam)), LabelSetError);
}

TEST(PerClass, PublishedF1Identities) {
  EXPECT_NEAR(f1_score(0.8408, 0.9496), 0.8919, 5e-5);  // Malayalam OL
  EXPECT_NEAR(f1_score(0.9285, 0.8456), 0.8851, 5e-5);  // Tamil NO
  // Kannada NO from the 4-decimal P and R lands at 0.78126; the published
  // F1 is still reachable from P, R anywhere in their rounding intervals.
  EXPECT_NEAR(f1_score(0.8216, 0.7447), 0.781262236, 1e-9);
  const double lo = f1_score(0.8216 - 5e-5, 0.7447 - 5e-5), hi = f1_score(0.8216 + 5e-5, 0.7447 + 5e-5);
  EXPECT_LT(lo, 0.78125);
  EXPECT_GT(hi, 0.78115);
}

TEST(PerClass, ZeroTruePositivesReportZeroWithFlag) {
  // Tamil OTO: gold present, never predicted correctly.
  const std::vector<OffenseLabel> gold{OffenseLabel::TargetedOther, OffenseLabel::TargetedOther, NO, NO};
  const std::vector<OffenseLabel> pred{NO, NO, NO, OffenseLabel::TargetedOther};
  const auto m = per_class_prf(confusion_matrix(gold, pred, label_set(Language::Tamil)));
  const auto& oto = m[index_of(OffenseLabel::TargetedOther)];
  EXPECT_EQ(oto.precision, 0.0);
  EXPECT_EQ(oto.recall, 0.0);
  EXPECT_EQ(oto.f1, 0.0);
  EXPECT_TRUE(oto.zero_division);
  EXPECT_EQ(oto.support, 2u);
}

TEST(PerClass, AbsentClassIsAllZeroWithFlag) {
  const auto m = per_class_prf(confusion_matrix({NO, OL}, {NO, OL}, label_set(Language::Kannada)));
  const auto& ou = m[index_of(OffenseLabel::Untargeted)];
  EXPECT_EQ(ou.precision, 0.0);
  EXPECT_EQ(ou.recall, 0.0);
  EXPECT_EQ(ou.f1, 0.0);
  EXPECT_EQ(ou.support, 0u);
  EXPECT_TRUE(ou.zero_division);
  EXPECT_FALSE(m[0].zero_division);
}

TEST(Aggregate, PublishedMalayalamMacroPrecision) {
  const auto labels = label_set(Language::Malayalam);
  const auto cm = confusion_matrix({NO}, {NO}, labels);
  const double p[] = {0.9875, 0.8408, 0.5926, 0.5217, 0.6897};
  std::vector<ClassMetrics> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows.push_back({labels[i], p[i], 0.0, 0.0, i == 0 ? 1u : 0u, false});
  EXPECT_NEAR(aggregate_metrics(rows, cm).macro.precision, 0.7265, 1e-4);
}

TEST(Aggregate, Errors) {
  const auto cm = confusion_matrix({NO}, {NO}, {NO, OL});
  EXPECT_THROW(aggregate_metrics({}, cm), LengthMismatchError);
  ConfusionMatrix empty{{NO, OL}, {{0, 0}, {0, 0}}};
  EXPECT_THROW(aggregate_metrics(per_class_prf(empty), empty), EmptyEvaluationError);
}

TEST(Aggregate, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const auto inst = fx::random_instance(rng);
    const auto r = evaluate(confusion_matrix(inst.gold, inst.pred, inst.labels));
    EXPECT_LE(fx::max_metric_error(r, fx::oracle_metrics(inst.gold, inst.pred, inst.labels)), 1e-12) << t;
  }
}

TEST(Aggregate, AlgebraicIdentities) {
  Rng rng(7);
  for (int t = 0; t < 500; ++t) {
    const auto inst = fx::random_instance(rng);
    const auto cm = confusion_matrix(inst.gold, inst.pred, inst.labels);
    const auto r = evaluate(cm);
    EXPECT_NEAR(r.weighted.recall, r.accuracy, 1e-12);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) {
      tp += cm.true_positives(c);
      fp += cm.false_positives(c);
      fn += cm.false_negatives(c);
    }
    EXPECT_NEAR(static_cast<double>(tp), r.accuracy * static_cast<double>(r.total_support), 1e-9);
    // micro precision = micro recall = accuracy
    EXPECT_NEAR(static_cast<double>(tp) / static_cast<double>(tp + fp), r.accuracy, 1e-12);
    EXPECT_NEAR(static_cast<double>(tp) / static_cast<double>(tp + fn), r.accuracy, 1e-12);
    for (const auto& m : r.per_class) {
      for (double v : {m.precision, m.recall, m.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      if (m.precision > 0 && m.recall > 0) {
        EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
        EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-15);
      }
    }
  }
}

TEST(Aggregate, PermutationInvariant) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    auto inst = fx::random_instance(rng);
    const auto before = evaluate(confusion_matrix(inst.gold, inst.pred, inst.labels));
    std::vector<std::size_t> order(inst.gold.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<OffenseLabel> g, p;
    for (auto i : order) {
      g.push_back(inst.gold[i]);
      p.push_back(inst.pred[i]);
    }
    const auto after = evaluate(confusion_matrix(g, p, inst.labels));
    EXPECT_EQ(report_json(before, confusion_matrix(inst.gold, inst.pred, inst.labels)),
              report_json(after, confusion_matrix(g, p, inst.labels)));
  }
}

TEST(Report, RowCountsPerLanguage) {
  for (auto lang : kAllLanguages) {
    const auto labels = label_set(lang);
    const auto cm = confusion_matrix(labels, labels, labels);
    const auto rep = classification_report(evaluate(cm), cm);
    std::istringstream in(rep.text);
    std::size_t class_rows = 0, summary_rows = 0;
    for (std::string line; std::getline(in, line);) {
      for (auto l : labels) class_rows += line.rfind(std::string(display_name(l)), 0) == 0 ? 1 : 0;
      for (auto s : {"Accuracy", "Macro Average", "Weighted Average"}) summary_rows += line.rfind(s, 0) == 0 ? 1 : 0;
    }
    EXPECT_EQ(class_rows, lang == Language::Malayalam ? 5u : 6u);
    EXPECT_EQ(summary_rows, 3u);
    EXPECT_EQ(rep.text.find("Offensive Targeted Others") == std::string::npos, lang == Language::Malayalam);
    EXPECT_EQ(count_lines(rep.heatmap), 1 + labels.size() * labels.size());
    EXPECT_EQ(rep.record["classes"].size(), labels.size());
  }
}

TEST(Report, TextUsesFourDecimalsAndJsonFullPrecision) {
  const std::vector<OffenseLabel> gold{NO, NO, NO, OL, OL, OL};
  const std::vector<OffenseLabel> pred{NO, NO, OL, OL, OL, NO};
  const auto cm = confusion_matrix(gold, pred, {NO, OL});
  const auto r = evaluate(cm);
  const auto text = format_report(r);
  EXPECT_NE(text.find("0.6667"), std::string::npos);
  EXPECT_EQ(text.find("0.66666"), std::string::npos);
  const auto j = report_json(r, cm);
  EXPECT_EQ(j["accuracy"].get<double>(), 4.0 / 6.0);
  EXPECT_EQ(j["confusion_matrix"]["counts"][0][1], 1);
}

TEST(Report, HeatmapRowFractions) {
  const auto cm = confusion_matrix({NO, NO, NO, OL}, {NO, OL, OL, OL}, {NO, OL, OffenseLabel::Untargeted});
  const auto csv = heatmap_csv(cm);
  EXPECT_NE(csv.find("NO,OL,2,0.66666666666666663"), std::string::npos);
  EXPECT_NE(csv.find("OL,OL,1,1\n"), std::string::npos);
  EXPECT_NE(csv.find("OU,OU,0,0\n"), std::string::npos);
  EXPECT_EQ(csv.rfind("gold,predicted,count,row_fraction\n", 0), 0u);
}
