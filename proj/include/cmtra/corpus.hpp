#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cmtra/errors.hpp"
#include "cmtra/random.hpp"
#include "cmtra/utf8.hpp"

namespace cmtra {

// ---------------------------------------------------------------------------
// Labels and languages
// ---------------------------------------------------------------------------

/// The six offense classes, declared in canonical report order.
enum class OffenseLabel : std::uint8_t {
  NotOffensive = 0,
  OtherLanguage = 1,
  TargetedIndividual = 2,
  TargetedGroup = 3,
  TargetedOther = 4,
  Untargeted = 5,
};

inline constexpr std::size_t kNumLabels = 6;

inline constexpr std::array<OffenseLabel, kNumLabels> kAllLabels = {
    OffenseLabel::NotOffensive,       OffenseLabel::OtherLanguage, OffenseLabel::TargetedIndividual,
    OffenseLabel::TargetedGroup,      OffenseLabel::TargetedOther, OffenseLabel::Untargeted,
};

inline constexpr std::size_t index_of(OffenseLabel l) { return static_cast<std::size_t>(l); }

/// Short code used in tables: NO, OL, OTI, OTG, OTO, OU.
inline std::string_view short_code(OffenseLabel l) {
  static constexpr std::array<std::string_view, kNumLabels> codes = {"NO", "OL", "OTI",
                                                                     "OTG", "OTO", "OU"};
  return codes[index_of(l)];
}

/// Row names of the classification report.
inline std::string_view display_name(OffenseLabel l) {
  static constexpr std::array<std::string_view, kNumLabels> names = {
      "Not Offensive",
      "Other Language",
      "Offensive Targeted Individual",
      "Offensive Targeted Group",
      "Offensive Targeted Others",
      "Offensive Untargeted",
  };
  return names[index_of(l)];
}

enum class Language : std::uint8_t { Kannada, Malayalam, Tamil };

inline constexpr std::array<Language, 3> kAllLanguages = {Language::Kannada, Language::Malayalam,
                                                          Language::Tamil};

inline std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::Kannada: return "kannada";
    case Language::Malayalam: return "malayalam";
    case Language::Tamil: return "tamil";
  }
  return "?";
}

inline Language parse_language(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  if (lower == "kannada" || lower == "kn") return Language::Kannada;
  if (lower == "malayalam" || lower == "ml") return Language::Malayalam;
  if (lower == "tamil" || lower == "ta") return Language::Tamil;
  throw ConfigError("unknown language '" + std::string(s) + "'");
}

/// Canonical label string for a language: the spelling the distributed files
/// use, with the Other-Language class named after the language.
inline std::string canonical_string(OffenseLabel l, Language lang) {
  switch (l) {
    case OffenseLabel::NotOffensive: return "Not_offensive";
    case OffenseLabel::OtherLanguage:
      switch (lang) {
        case Language::Kannada: return "not-Kannada";
        case Language::Malayalam: return "not-malayalam";
        case Language::Tamil: return "not-Tamil";
      }
      break;
    case OffenseLabel::TargetedIndividual: return "Offensive_Targeted_Insult_Individual";
    case OffenseLabel::TargetedGroup: return "Offensive_Targeted_Insult_Group";
    case OffenseLabel::TargetedOther: return "Offensive_Targeted_Insult_Other";
    case OffenseLabel::Untargeted: return "Offensive_Untargetede";
  }
  return "?";
}

/// Every raw label spelling accepted by the parser. Strings outside this
/// table are rejected; nothing is coerced.
inline const std::map<std::string, OffenseLabel, std::less<>>& label_aliases() {
  static const std::map<std::string, OffenseLabel, std::less<>> table = {
      {"Not_offensive", OffenseLabel::NotOffensive},
      {"Not_Offensive", OffenseLabel::NotOffensive},
      {"not-Kannada", OffenseLabel::OtherLanguage},
      {"not-kannada", OffenseLabel::OtherLanguage},
      {"not-malayalam", OffenseLabel::OtherLanguage},
      {"not-Malayalam", OffenseLabel::OtherLanguage},
      {"not-Tamil", OffenseLabel::OtherLanguage},
      {"not-tamil", OffenseLabel::OtherLanguage},
      {"Offensive_Targeted_Insult_Individual", OffenseLabel::TargetedIndividual},
      {"Offensive_Targeted_Insult_Group", OffenseLabel::TargetedGroup},
      {"Offensive_Targeted_Insult_Other", OffenseLabel::TargetedOther},
      {"Offensive_Untargetede", OffenseLabel::Untargeted},
      {"Offensive_Untargeted", OffenseLabel::Untargeted},
      {"NO", OffenseLabel::NotOffensive},
      {"OL", OffenseLabel::OtherLanguage},
      {"OTI", OffenseLabel::TargetedIndividual},
      {"OTG", OffenseLabel::TargetedGroup},
      {"OTO", OffenseLabel::TargetedOther},
      {"OU", OffenseLabel::Untargeted},
  };
  return table;
}

inline OffenseLabel parse_label(std::string_view raw) {
  const auto& table = label_aliases();
  auto it = table.find(raw);
  if (it == table.end()) throw LabelParseError("unknown label '" + std::string(raw) + "'");
  return it->second;
}

/// Labels a language's annotation scheme permits, in canonical order.
/// Malayalam has no Targeted-Other class.
inline std::vector<OffenseLabel> label_set(Language lang) {
  std::vector<OffenseLabel> out;
  for (auto l : kAllLabels) {
    if (lang == Language::Malayalam && l == OffenseLabel::TargetedOther) continue;
    out.push_back(l);
  }
  return out;
}

inline bool permits(Language lang, OffenseLabel l) {
  return !(lang == Language::Malayalam && l == OffenseLabel::TargetedOther);
}

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

enum class Origin : std::uint8_t { CodeMixed, Transliterated };

inline std::string_view to_string(Origin o) { return o == Origin::CodeMixed ? "cm" : "tra"; }

inline Origin parse_origin(std::string_view s) {
  if (s == "cm") return Origin::CodeMixed;
  if (s == "tra") return Origin::Transliterated;
  throw DataError("unknown origin tag '" + std::string(s) + "'");
}

enum class Split : std::uint8_t { Train, Dev, Test, Unsplit };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Unsplit: return "unsplit";
  }
  return "?";
}

struct LabeledComment {
  std::string text;
  std::optional<OffenseLabel> label;
  Language language = Language::Kannada;
  Origin origin = Origin::CodeMixed;

  friend bool operator==(const LabeledComment&, const LabeledComment&) = default;
};

/// Ordered samples of a single language. Order is insertion order; the only
/// reordering is an explicit seeded shuffle.
class Dataset {
 public:
  Dataset(Language language, Split split) : language_(language), split_(split) {}

  Language language() const noexcept { return language_; }
  Split split() const noexcept { return split_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  const std::vector<LabeledComment>& samples() const noexcept { return samples_; }
  const LabeledComment& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  void add(LabeledComment c) {
    if (c.language != language_) {
      throw LanguageMismatchError("sample language " + std::string(to_string(c.language)) +
                                  " does not match dataset language " +
                                  std::string(to_string(language_)));
    }
    samples_.push_back(std::move(c));
  }

  void reserve(std::size_t n) { samples_.reserve(n); }

  void shuffle(Rng& rng) { rng.shuffle(samples_); }

 private:
  Language language_;
  Split split_;
  std::vector<LabeledComment> samples_;
};

using WarningSink = std::function<void(std::string_view)>;

inline void stderr_warning(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// TSV records
// ---------------------------------------------------------------------------

/// Parses `<text>\t<label>` (labeled) or `<text>` / `<text>\t` (unlabeled).
/// The label is whatever follows the last tab.
inline LabeledComment parse_tsv_record(std::string_view line, Language language, bool labeled) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  LabeledComment out;
  out.language = language;
  out.origin = Origin::CodeMixed;

  std::string_view text = line;
  const auto tab = line.rfind('\t');
  if (labeled) {
    if (tab == std::string_view::npos) throw LabelParseError("labeled record has no tab");
    text = line.substr(0, tab);
    const auto label = parse_label(utf8::trim(line.substr(tab + 1)));
    if (!permits(language, label)) {
      throw LabelSetError("label " + std::string(short_code(label)) + " not permitted for " +
                          std::string(to_string(language)));
    }
    out.label = label;
  } else if (tab != std::string_view::npos) {
    text = line.substr(0, tab);
  }
  if (utf8::trim(text).empty()) throw EmptyTextError("empty text");
  out.text = std::string(text);
  return out;
}

inline std::string serialize_tsv_record(const LabeledComment& c) {
  if (!c.label) return c.text;
  return c.text + '\t' + canonical_string(*c.label, c.language);
}

/// Three-column form `<text>\t<label>\t<origin>` used for transliterated,
/// pseudo-labeled and CM-TRA files. An empty label field means unlabeled.
inline LabeledComment parse_tagged_record(std::string_view line, Language language) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto tab = line.rfind('\t');
  if (tab == std::string_view::npos) throw DataError("tagged record has no origin column");
  const auto rest = line.substr(0, tab);
  const auto label_tab = rest.rfind('\t');
  if (label_tab == std::string_view::npos) throw DataError("tagged record has no label column");
  const bool labeled = !utf8::trim(rest.substr(label_tab + 1)).empty();
  auto c = parse_tsv_record(rest, language, labeled);
  c.origin = parse_origin(utf8::trim(line.substr(tab + 1)));
  return c;
}

inline std::string serialize_tagged_record(const LabeledComment& c) {
  const std::string label = c.label ? canonical_string(*c.label, c.language) : std::string();
  return c.text + '\t' + label + '\t' + std::string(to_string(c.origin));
}

inline bool is_known_header(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  static constexpr std::array<std::string_view, 5> headers = {
      "text\tlabel", "Text\tLabel", "comment\tlabel", "Comment\tLabel", "text\tlabel\torigin"};
  for (auto h : headers) {
    if (line == h) return true;
  }
  return false;
}

enum class RecordFormat { Plain, Tagged };

inline Dataset read_dataset(std::istream& in, Language language, Split split, bool labeled,
                            RecordFormat format = RecordFormat::Plain,
                            const WarningSink& warn = stderr_warning,
                            std::string_view source = "<stream>") {
  Dataset ds(language, split);
  std::string line;
  std::size_t lineno = 0;
  std::size_t blanks = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (lineno == 1 && is_known_header(line)) continue;
    if (utf8::trim(line).empty()) {
      ++blanks;
      continue;
    }
    try {
      ds.add(format == RecordFormat::Tagged ? parse_tagged_record(line, language)
                                            : parse_tsv_record(line, language, labeled));
    } catch (const RecordError&) {
      throw;
    } catch (const Error& e) {
      throw RecordError(lineno, std::string(source) + ": " + e.what());
    }
  }
  if (blanks > 0 && warn) {
    warn(std::string(source) + ": skipped " + std::to_string(blanks) + " blank line(s)");
  }
  return ds;
}

/// Loads one split file. Samples get origin CodeMixed.
inline Dataset load_split(const std::string& path, Language language, Split split, bool labeled,
                          const WarningSink& warn = stderr_warning) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto ds = read_dataset(in, language, split, labeled, RecordFormat::Plain, warn, path);
  if (in.bad()) throw IoError("read failure on " + path);
  return ds;
}

inline Dataset load_tagged(const std::string& path, Language language, Split split,
                           const WarningSink& warn = stderr_warning) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_dataset(in, language, split, true, RecordFormat::Tagged, warn, path);
}

inline void write_dataset(std::ostream& out, const Dataset& ds, RecordFormat format = RecordFormat::Plain) {
  for (const auto& c : ds) {
    out << (format == RecordFormat::Tagged ? serialize_tagged_record(c) : serialize_tsv_record(c))
        << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds,
                         RecordFormat format = RecordFormat::Plain) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_dataset(out, ds, format);
  if (!out) throw IoError("write failure on " + path);
}

// ---------------------------------------------------------------------------
// Dataset statistics and combinators
// ---------------------------------------------------------------------------

using ClassCounts = std::array<std::size_t, kNumLabels>;

inline ClassCounts class_distribution(const Dataset& ds) {
  ClassCounts counts{};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& label = ds[i].label;
    if (!label) throw UnlabeledSampleError("sample " + std::to_string(i) + " has no label");
    ++counts[index_of(*label)];
  }
  return counts;
}

struct LabelViolation {
  std::size_t index;
  OffenseLabel label;
};

struct ValidationResult {
  std::vector<LabelViolation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

inline ValidationResult validate_labels(const Dataset& ds) {
  ValidationResult result;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& label = ds[i].label;
    if (label && !permits(ds.language(), *label)) result.violations.push_back({i, *label});
  }
  return result;
}

/// Concatenation: samples of `a`, then samples of `b`. The split tag is kept
/// when both agree and becomes Unsplit otherwise.
inline Dataset merge_datasets(const Dataset& a, const Dataset& b) {
  if (a.language() != b.language()) {
    throw LanguageMismatchError("cannot merge " + std::string(to_string(a.language())) + " with " +
                                std::string(to_string(b.language())));
  }
  Dataset out(a.language(), a.split() == b.split() ? a.split() : Split::Unsplit);
  out.reserve(a.size() + b.size());
  for (const auto& c : a) out.add(c);
  for (const auto& c : b) out.add(c);
  return out;
}

/// Samples whose origin matches, in order.
inline Dataset filter_origin(const Dataset& ds, Origin origin) {
  Dataset out(ds.language(), ds.split());
  for (const auto& c : ds) {
    if (c.origin == origin) out.add(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Published split sizes, used to surface discrepancies as warnings.
// ---------------------------------------------------------------------------

struct PublishedSplit {
  std::size_t size;          // split size table
  ClassCounts class_counts;  // class-wise table; all zeros when unpublished
};

inline std::optional<PublishedSplit> published_split(Language lang, Split split) {
  // Order within ClassCounts: NO, OL, OTI, OTG, OTO, OU.
  switch (lang) {
    case Language::Kannada:
      if (split == Split::Train) return PublishedSplit{6217, {3544, 1522, 487, 329, 123, 212}};
      if (split == Split::Dev) return PublishedSplit{777, {}};
      if (split == Split::Test) return PublishedSplit{778, {417, 185, 75, 44, 14, 33}};
      break;
    case Language::Malayalam:
      if (split == Split::Train) return PublishedSplit{16010, {14153, 1287, 239, 140, 0, 191}};
      if (split == Split::Dev) return PublishedSplit{1999, {}};
      if (split == Split::Test) return PublishedSplit{2001, {1765, 157, 27, 23, 0, 29}};
      break;
    case Language::Tamil:
      if (split == Split::Train) return PublishedSplit{35129, {25415, 1454, 2343, 2557, 454, 2906}};
      if (split == Split::Dev) return PublishedSplit{4388, {}};
      if (split == Split::Test) return PublishedSplit{4392, {3190, 165, 315, 288, 71, 368}};
      break;
  }
  return std::nullopt;
}

/// Compares a loaded split against the published figures and returns one
/// message per mismatch. The dataset itself is never adjusted.
inline std::vector<std::string> published_discrepancies(const Dataset& ds) {
  std::vector<std::string> out;
  const auto ref = published_split(ds.language(), ds.split());
  if (!ref) return out;
  const std::string where =
      std::string(to_string(ds.language())) + " " + std::string(to_string(ds.split()));
  if (ds.size() != ref->size) {
    out.push_back(where + ": " + std::to_string(ds.size()) + " samples, published split size is " +
                  std::to_string(ref->size));
  }
  std::size_t ref_total = 0;
  for (auto c : ref->class_counts) ref_total += c;
  if (ref_total == 0) return out;
  // Per-class comparison only makes sense for something sized like the
  // distributed file.
  if (ds.size() != ref->size && ds.size() != ref_total) return out;
  if (ds.size() != ref_total) {
    out.push_back(where + ": " + std::to_string(ds.size()) +
                  " samples, published class counts sum to " + std::to_string(ref_total));
  }
  bool all_labeled = true;
  for (const auto& c : ds) all_labeled = all_labeled && c.label.has_value();
  if (!all_labeled) return out;
  const auto counts = class_distribution(ds);
  for (auto l : kAllLabels) {
    if (counts[index_of(l)] != ref->class_counts[index_of(l)]) {
      out.push_back(where + ": class " + std::string(short_code(l)) + " has " +
                    std::to_string(counts[index_of(l)]) + ", published " +
                    std::to_string(ref->class_counts[index_of(l)]));
    }
  }
  return out;
}

}  // namespace cmtra
