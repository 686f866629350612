#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cmtra/corpus.hpp"
#include "cmtra/errors.hpp"
#include "cmtra/utf8.hpp"

namespace cmtra::translit {

enum class Script : std::uint8_t { Latin, Kannada, Malayalam, Tamil, Neutral };

inline std::string_view to_string(Script s) {
  switch (s) {
    case Script::Latin: return "latin";
    case Script::Kannada: return "kannada";
    case Script::Malayalam: return "malayalam";
    case Script::Tamil: return "tamil";
    case Script::Neutral: return "neutral";
  }
  return "?";
}

inline bool is_ascii_letter(char32_t ch) { return (ch >= U'a' && ch <= U'z') || (ch >= U'A' && ch <= U'Z'); }

/// Total over all scalar values. Latin covers ASCII letters, the Latin-1
/// letters and Latin Extended-A/B plus Latin Extended Additional.
inline Script detect_script(char32_t ch) {
  if (is_ascii_letter(ch)) return Script::Latin;
  if (ch >= 0x00C0 && ch <= 0x00FF && ch != 0x00D7 && ch != 0x00F7) return Script::Latin;
  if (ch >= 0x0100 && ch <= 0x024F) return Script::Latin;
  if (ch >= 0x1E00 && ch <= 0x1EFF) return Script::Latin;
  if (ch >= 0x0C80 && ch <= 0x0CFF) return Script::Kannada;
  if (ch >= 0x0D00 && ch <= 0x0D7F) return Script::Malayalam;
  if (ch >= 0x0B80 && ch <= 0x0BFF) return Script::Tamil;
  return Script::Neutral;
}

inline Script script_of(Language lang) {
  switch (lang) {
    case Language::Kannada: return Script::Kannada;
    case Language::Malayalam: return Script::Malayalam;
    case Language::Tamil: return Script::Tamil;
  }
  return Script::Neutral;
}

inline char32_t virama(Language lang) {
  switch (lang) {
    case Language::Kannada: return 0x0CCD;
    case Language::Malayalam: return 0x0D4D;
    case Language::Tamil: return 0x0BCD;
  }
  return 0;
}

struct SpanSegment {
  std::string text;
  Script script;

  friend bool operator==(const SpanSegment&, const SpanSegment&) = default;
};

/// Splits text into maximal single-script runs. Neutral characters join the
/// preceding run; leading neutrals join the first scripted run. A string with
/// no scripted characters is one Neutral span.
inline std::vector<SpanSegment> segment_spans(std::string_view text) {
  std::vector<SpanSegment> spans;
  std::string pending_neutral;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t ch = utf8::decode_one(text, pos);
    const std::string_view bytes = text.substr(start, pos - start);
    const Script s = detect_script(ch);
    if (s == Script::Neutral) {
      if (spans.empty()) {
        pending_neutral.append(bytes);
      } else {
        spans.back().text.append(bytes);
      }
      continue;
    }
    if (spans.empty()) {
      spans.push_back({std::move(pending_neutral), s});
      pending_neutral.clear();
    } else if (spans.back().script != s) {
      spans.push_back({std::string(), s});
    }
    spans.back().text.append(bytes);
  }
  if (spans.empty() && !pending_neutral.empty()) spans.push_back({std::move(pending_neutral), Script::Neutral});
  return spans;
}

enum class PositionClass : std::uint8_t { IndependentVowel, Consonant, VowelSign, Special };

inline PositionClass parse_position_class(std::string_view s) {
  if (s == "independent_vowel") return PositionClass::IndependentVowel;
  if (s == "consonant") return PositionClass::Consonant;
  if (s == "vowel_sign") return PositionClass::VowelSign;
  if (s == "special") return PositionClass::Special;
  throw ConfigError("unknown position class '" + std::string(s) + "'");
}

/// One row of a grapheme table. A key ending in '$' only matches when the
/// following character is not a Latin letter (word-final rules).
struct GraphemeEntry {
  std::string latin_key;
  std::string native_value;
  PositionClass position_class;

  bool word_final() const noexcept { return !latin_key.empty() && latin_key.back() == '$'; }
  std::string_view match_key() const noexcept {
    std::string_view k = latin_key;
    if (word_final()) k.remove_suffix(1);
    return k;
  }
};

/// Latin-to-native substitution table for one language, ordered
/// longest-key-first. Keys are unique per position class: a vowel appears once
/// as an independent vowel and once as a vowel sign.
class GraphemeMapping {
 public:
  GraphemeMapping(Language language, std::vector<GraphemeEntry> entries)
      : language_(language), entries_(std::move(entries)) {
    std::set<std::pair<std::string, PositionClass>> seen;
    const Script target = script_of(language_);
    for (const auto& e : entries_) {
      if (e.match_key().empty()) throw ConfigError("grapheme table has an empty key");
      for (char c : e.latin_key) {
        if (!((c >= 'a' && c <= 'z') || c == '$')) {
          throw ConfigError("grapheme key '" + e.latin_key + "' is not ASCII lowercase");
        }
      }
      if (!seen.insert({e.latin_key, e.position_class}).second) {
        throw ConfigError("duplicate grapheme key '" + e.latin_key + "'");
      }
      for (char32_t ch : utf8::decode(e.native_value)) {
        if (detect_script(ch) != target) {
          throw ConfigError("grapheme value for '" + e.latin_key + "' leaves the " +
                            std::string(to_string(language_)) + " block");
        }
      }
      if (e.position_class != PositionClass::VowelSign && e.native_value.empty()) {
        throw ConfigError("only vowel signs may map to the empty string ('" + e.latin_key + "')");
      }
    }
    // Longest first; ties broken by key then class so file order never matters.
    std::stable_sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
      const auto la = a.match_key().size(), lb = b.match_key().size();
      if (la != lb) return la > lb;
      if (a.word_final() != b.word_final()) return a.word_final();
      if (a.latin_key != b.latin_key) return a.latin_key < b.latin_key;
      return a.position_class < b.position_class;
    });
    for (const auto& e : entries_) max_key_len_ = std::max(max_key_len_, e.match_key().size());
  }

  Language language() const noexcept { return language_; }
  const std::vector<GraphemeEntry>& entries() const noexcept { return entries_; }
  std::size_t max_key_len() const noexcept { return max_key_len_; }

  /// Longest entry of an allowed class matching `s` at `pos`.
  template <typename Allowed>
  const GraphemeEntry* longest_match(std::string_view s, std::size_t pos, Allowed&& allowed) const {
    for (const auto& e : entries_) {
      if (!allowed(e.position_class)) continue;
      const auto key = e.match_key();
      if (s.compare(pos, key.size(), key) != 0) continue;
      if (e.word_final()) {
        const std::size_t next = pos + key.size();
        if (next < s.size() && is_ascii_letter(static_cast<unsigned char>(s[next]))) continue;
      }
      return &e;
    }
    return nullptr;
  }

 private:
  Language language_;
  std::vector<GraphemeEntry> entries_;
  std::size_t max_key_len_ = 0;
};

/// Parses `<latin_key>\t<native_value>\t<position_class>` lines; '#' starts a
/// comment line.
inline GraphemeMapping parse_mapping(std::istream& in, Language language) {
  std::vector<GraphemeEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ConfigError("grapheme table line " + std::to_string(lineno) + ": expected 3 fields");
    }
    entries.push_back({fields[0], fields[1], parse_position_class(fields[2])});
  }
  return GraphemeMapping(language, std::move(entries));
}

inline GraphemeMapping load_mapping(const std::string& path, Language language) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grapheme table " + path);
  return parse_mapping(in, language);
}

/// File name of a language's table inside a table directory.
inline std::string mapping_path(const std::string& dir, Language language) {
  return dir + "/" + std::string(to_string(language)) + ".tsv";
}

struct TranslitStats {
  std::size_t unmapped_chars = 0;
};

/// Greedy longest-prefix transduction of a Latin span. A consonant followed by
/// a vowel key takes that vowel's sign; a consonant with no following vowel
/// gets a virama. Characters that match nothing are copied through and
/// counted when they are letters.
inline std::string transliterate_span(std::string_view latin_text, const GraphemeMapping& mapping,
                                      TranslitStats* stats = nullptr) {
  const std::u32string original = utf8::decode(latin_text);
  // Lowercase copy for matching; ASCII only, other characters never match.
  std::string lower;
  std::vector<std::size_t> offset;  // lower index -> original index
  for (std::size_t i = 0; i < original.size(); ++i) {
    const char32_t ch = original[i];
    if (ch < 0x80) {
      lower.push_back(static_cast<char>(ch >= U'A' && ch <= U'Z' ? ch - U'A' + U'a' : ch));
    } else {
      lower.push_back('\x7F');  // never part of a key
    }
    offset.push_back(i);
  }

  const std::string virama_str = utf8::encode(std::u32string(1, virama(mapping.language())));
  std::string out;
  bool pending_consonant = false;
  auto close_consonant = [&] {
    if (pending_consonant) out += virama_str;
    pending_consonant = false;
  };

  std::size_t pos = 0;
  while (pos < lower.size()) {
    const GraphemeEntry* hit = nullptr;
    if (pending_consonant) {
      hit = mapping.longest_match(lower, pos, [](PositionClass c) {
        return c == PositionClass::VowelSign || c == PositionClass::Consonant || c == PositionClass::Special;
      });
    } else {
      hit = mapping.longest_match(lower, pos, [](PositionClass c) {
        return c == PositionClass::IndependentVowel || c == PositionClass::Consonant ||
               c == PositionClass::Special;
      });
    }
    if (hit == nullptr) {
      close_consonant();
      const char32_t ch = original[offset[pos]];
      utf8::append(out, ch);
      if (stats != nullptr && detect_script(ch) == Script::Latin) ++stats->unmapped_chars;
      ++pos;
      continue;
    }
    switch (hit->position_class) {
      case PositionClass::VowelSign:
        out += hit->native_value;
        pending_consonant = false;
        break;
      case PositionClass::Consonant:
        close_consonant();
        out += hit->native_value;
        pending_consonant = true;
        break;
      case PositionClass::IndependentVowel:
      case PositionClass::Special:
        close_consonant();
        out += hit->native_value;
        break;
    }
    pos += hit->match_key().size();
  }
  close_consonant();
  return out;
}

/// Replaces every Latin span with its transliteration. Native-script and
/// neutral content is copied byte for byte.
inline std::string transliterate_text(std::string_view text, Language language,
                                      const GraphemeMapping& mapping, TranslitStats* stats = nullptr) {
  if (mapping.language() != language) {
    throw LanguageMismatchError("grapheme table is for " + std::string(to_string(mapping.language())) +
                                ", text is " + std::string(to_string(language)));
  }
  std::string out;
  out.reserve(text.size() * 2);
  for (const auto& span : segment_spans(text)) {
    if (span.script == Script::Latin) {
      out += transliterate_span(span.text, mapping, stats);
    } else {
      out += span.text;
    }
  }
  return out;
}

/// Transliterates every sample. Labels are carried over (or dropped when
/// `keep_labels` is false) and the origin becomes Transliterated.
inline Dataset transliterate_dataset(const Dataset& ds, const GraphemeMapping& mapping, bool keep_labels,
                                     TranslitStats* stats = nullptr) {
  Dataset out(ds.language(), ds.split());
  out.reserve(ds.size());
  for (const auto& c : ds) {
    LabeledComment t = c;
    t.text = transliterate_text(c.text, ds.language(), mapping, stats);
    if (!keep_labels) t.label.reset();
    t.origin = Origin::Transliterated;
    out.add(std::move(t));
  }
  return out;
}

}  // namespace cmtra::translit
