#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cmtra/corpus.hpp"
#include "cmtra/model.hpp"
#include "cmtra/nn/matrix.hpp"
#include "cmtra/random.hpp"

namespace cmtra::fx {

inline nn::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (auto& x : m.storage()) x = rng.uniform(-scale, scale);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

/// Scratch directory under the build tree, wiped on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cmtra_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Romanized words that the bundled grapheme tables cover completely.
inline const std::vector<std::string>& roman_words() {
  static const std::vector<std::string> words = {
      "padam", "super", "mass",  "thalaivar", "semma",  "mokka", "trailer", "vera",  "level",
      "waste", "nalla", "illa",  "amma",      "kadhal", "chetta", "kollam", "nanna", "chennagide",
      "guru",  "anna",  "bhai",  "sakkath",   "mosam",  "kidu",   "poli",   "worst", "hero"};
  return words;
}

/// Random labeled code-mixed corpus drawing labels uniformly from the
/// language's label set.
inline Dataset toy_corpus(Language lang, std::size_t n, std::uint64_t seed, Split split = Split::Train) {
  Rng rng(seed);
  const auto labels = label_set(lang);
  const auto& words = roman_words();
  Dataset ds(lang, split);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const auto len = 2 + rng.below(5);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) text += ' ';
      text += words[rng.below(words.size())];
    }
    ds.add({text, labels[rng.below(labels.size())], lang, Origin::CodeMixed});
  }
  return ds;
}

/// Two classes with disjoint vocabularies: NO texts use "alphaK" tokens, OL
/// texts "betaK". Balanced and interleaved.
inline Dataset separable_corpus(Language lang, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds(lang, Split::Train);
  for (std::size_t i = 0; i < n; ++i) {
    const bool b = i % 2 == 1;
    std::string text;
    const auto len = 3 + rng.below(5);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) text += ' ';
      text += (b ? "beta" : "alpha") + std::to_string(rng.below(10));
    }
    ds.add({text, b ? OffenseLabel::OtherLanguage : OffenseLabel::NotOffensive, lang, Origin::CodeMixed});
  }
  return ds;
}

inline std::string to_tsv(const Dataset& ds) {
  std::string out;
  for (const auto& c : ds) out += serialize_tsv_record(c) + "\n";
  return out;
}

/// A model built directly from a config, bypassing the language/class-count
/// check, with every tensor uniform in [-scale, scale] and layer-norm scales
/// near 1.
inline ClassifierModel raw_model(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed,
                                 double scale = 0.5) {
  ClassifierModel m;
  m.language = Language::Kannada;
  std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]"};
  for (std::size_t i = 3; i < vocab_size; ++i) tokens.push_back("t" + std::to_string(i));
  m.vocab = Vocab::from_tokens(tokens);
  m.config = cfg;
  m.weights = ModelWeights::zeros(cfg, vocab_size);
  Rng rng(seed);
  m.weights.for_each([&](const std::string& name, nn::Matrix& t, std::size_t) {
    const bool gamma = name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
    for (auto& x : t.storage()) x = (gamma ? 1.0 : 0.0) + rng.uniform(-scale, scale);
  });
  return m;
}

}  // namespace cmtra::fx
