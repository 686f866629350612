#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmtra/corpus.hpp"
#include "cmtra/errors.hpp"
#include "cmtra/model.hpp"
#include "cmtra/nn/ops.hpp"
#include "cmtra/random.hpp"

namespace cmtra::pseudo {

/// Anything that assigns a probability vector over its language's label set
/// to a text. The classifier is one; tests plug in stubs.
template <typename L>
concept Labeler = requires(const L& l, std::string_view text) {
  { l.language() } -> std::convertible_to<Language>;
  { l.probabilities(text) } -> std::convertible_to<std::vector<double>>;
};

class ModelLabeler {
 public:
  explicit ModelLabeler(const ClassifierModel& model) : model_(&model) {}

  Language language() const { return model_->language; }

  std::vector<double> probabilities(std::string_view text) const {
    const auto ids = encode_text(text, model_->vocab, model_->config.max_len);
    return forward_sample(*model_, ids, false).probs;
  }

 private:
  const ClassifierModel* model_;
};

struct PseudoLabelRun {
  std::string source_model;
  std::optional<double> threshold;
  std::size_t labeled = 0;
  std::size_t skipped = 0;
  ClassCounts histogram{};
};

inline nlohmann::json to_json(const PseudoLabelRun& run) {
  nlohmann::json hist = nlohmann::json::object();
  for (auto l : kAllLabels) hist[std::string(short_code(l))] = run.histogram[index_of(l)];
  return {{"source_model", run.source_model},
          {"threshold", run.threshold ? nlohmann::json(*run.threshold) : nlohmann::json(nullptr)},
          {"labeled", run.labeled},
          {"skipped", run.skipped},
          {"histogram", hist}};
}

struct PseudoLabelResult {
  Dataset dataset;
  PseudoLabelRun run;
};

/// Labels every transliterated sample with the labeler's argmax (ties to the
/// lowest class index). With a threshold, samples whose top probability is
/// below it are dropped and counted. Order is preserved.
template <Labeler L>
PseudoLabelResult generate_pseudo_labels(const L& labeler, const Dataset& transliterated,
                                         std::optional<double> threshold = std::nullopt,
                                         std::string source_model = "classifier") {
  if (labeler.language() != transliterated.language()) {
    throw LanguageMismatchError("labeler is " + std::string(to_string(labeler.language())) + ", data is " +
                                std::string(to_string(transliterated.language())));
  }
  if (transliterated.split() == Split::Test) throw DataError("the test split is never pseudo-labeled");
  if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) {
    throw ConfigError("pseudo-label threshold must lie in [0, 1]");
  }
  const auto labels = label_set(transliterated.language());
  PseudoLabelResult out{Dataset(transliterated.language(), transliterated.split()),
                        PseudoLabelRun{std::move(source_model), threshold, 0, 0, {}}};
  out.dataset.reserve(transliterated.size());
  for (std::size_t i = 0; i < transliterated.size(); ++i) {
    const auto& sample = transliterated[i];
    if (sample.origin != Origin::Transliterated) {
      throw DataError("sample " + std::to_string(i) + " is not transliterated");
    }
    const auto probs = labeler.probabilities(sample.text);
    if (probs.size() != labels.size()) throw ShapeError("labeler returned the wrong number of classes");
    const auto best = nn::argmax(probs);
    if (threshold && probs[best] < *threshold) {
      ++out.run.skipped;
      continue;
    }
    LabeledComment c = sample;
    c.label = labels[best];
    ++out.run.histogram[index_of(labels[best])];
    ++out.run.labeled;
    out.dataset.add(std::move(c));
  }
  return out;
}

inline PseudoLabelResult generate_pseudo_labels(const ClassifierModel& model, const Dataset& transliterated,
                                                std::optional<double> threshold = std::nullopt,
                                                std::string source_model = "classifier") {
  return generate_pseudo_labels(ModelLabeler(model), transliterated, threshold, std::move(source_model));
}

/// Gold code-mixed samples followed by the pseudo-labeled ones, then one
/// shuffle from the seed's "cmtra" stream. Origins are kept.
inline Dataset build_cm_tra(const Dataset& cm_train, const Dataset& pseudo_labeled, std::uint64_t seed) {
  if (cm_train.language() != pseudo_labeled.language()) {
    throw LanguageMismatchError("code-mixed and pseudo-labeled sets differ in language");
  }
  for (std::size_t i = 0; i < cm_train.size(); ++i) {
    if (!cm_train[i].label) throw UnlabeledSampleError("code-mixed sample " + std::to_string(i) + " has no label");
  }
  for (std::size_t i = 0; i < pseudo_labeled.size(); ++i) {
    if (!pseudo_labeled[i].label) {
      throw UnlabeledSampleError("pseudo-labeled sample " + std::to_string(i) + " has no label");
    }
  }
  Dataset merged = merge_datasets(cm_train, pseudo_labeled);
  Rng rng = Rng::substream(seed, "cmtra");
  merged.shuffle(rng);
  return merged;
}

}  // namespace cmtra::pseudo
