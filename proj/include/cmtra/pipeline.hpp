#pragma once

// End-to-end experiment orchestration and the per-stage helpers the CLI
// exposes as subcommands. Requires linking OpenSSL's libcrypto (digests).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "cmtra/corpus.hpp"
#include "cmtra/errors.hpp"
#include "cmtra/eval.hpp"
#include "cmtra/model.hpp"
#include "cmtra/pseudo.hpp"
#include "cmtra/random.hpp"
#include "cmtra/translit.hpp"

#ifndef CMTRA_VERSION
#define CMTRA_VERSION "0.0.0-dev"
#endif

namespace cmtra::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = CMTRA_VERSION;

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (std::size_t i = 0; i < n; ++i) os << std::setw(2) << static_cast<unsigned>(data[i]);
  return os.str();
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  return to_hex(md, len);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Variant { CM, TRA, CMTRA };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::CM: return "cm";
    case Variant::TRA: return "tra";
    case Variant::CMTRA: return "cmtra";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "cm") return Variant::CM;
  if (s == "tra") return Variant::TRA;
  if (s == "cmtra") return Variant::CMTRA;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected cm, tra or cmtra)");
}

/// Where the transliterated half gets its labels.
enum class TraLabels { Pseudo, Gold };

/// Shared: one model labels the transliterated data, then continues training
/// on the variant's set. Separate: the labeler is its own model and the final
/// model starts fresh.
enum class LabelerMode { Shared, Separate };

struct ExperimentConfig {
  Language language = Language::Tamil;
  Variant variant = Variant::CMTRA;
  std::string train_path;
  std::string dev_path;  // optional
  std::string test_path;
  std::string translit_table;
  std::string out_dir = "run";
  std::uint64_t seed = 42;
  std::optional<double> threshold;
  TraLabels tra_labels = TraLabels::Pseudo;
  LabelerMode labeler = LabelerMode::Shared;
  ModelConfig model;
  TrainConfig train;
  std::optional<ModelConfig> labeler_model;
  std::optional<TrainConfig> labeler_train;
  std::size_t min_freq = 1;
  std::string model_tag = "transformer-bilstm";

  bool transliterates() const { return variant != Variant::CM; }
  bool pseudo_labels() const { return transliterates() && tra_labels == TraLabels::Pseudo; }

  /// Applies the single seed and the language's class count everywhere.
  void normalize() {
    model.seed = seed;
    train.seed = seed;
    model.num_classes = label_set(language).size();
    if (labeler_model) labeler_model->num_classes = model.num_classes;
  }

  void validate() const {
    if (train_path.empty()) throw ConfigError("no training file configured");
    if (test_path.empty()) throw ConfigError("no test file configured");
    if (transliterates() && translit_table.empty()) throw ConfigError("variant needs a transliteration table");
    if (out_dir.empty()) throw ConfigError("no output directory configured");
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
    if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    if (model_tag.empty() || model_tag.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError("model_tag must be a non-empty name without separators");
    }
    model.validate();
    train.validate();
    if (labeler_model) labeler_model->validate();
    if (labeler_train) labeler_train->validate();
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{{"language", std::string(to_string(c.language))},
                   {"variant", std::string(to_string(c.variant))},
                   {"data", {{"train", c.train_path}, {"dev", c.dev_path}, {"test", c.test_path}}},
                   {"translit_table", c.translit_table},
                   {"out", c.out_dir},
                   {"seed", c.seed},
                   {"threshold", c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr)},
                   {"tra_labels", c.tra_labels == TraLabels::Pseudo ? "pseudo" : "gold"},
                   {"labeler", c.labeler == LabelerMode::Shared ? "shared" : "separate"},
                   {"model", c.model},
                   {"train", c.train},
                   {"min_freq", c.min_freq},
                   {"model_tag", c.model_tag}};
  if (c.labeler_model) j["labeler_model"] = *c.labeler_model;
  if (c.labeler_train) j["labeler_train"] = *c.labeler_train;
  return j;
}

/// Reads a config object. Relative data paths resolve against `base`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };
  try {
    ExperimentConfig c;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("language")) c.language = parse_language(j.at("language").get<std::string>());
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.train_path = resolve(d.value("train", ""));
      c.dev_path = resolve(d.value("dev", ""));
      c.test_path = resolve(d.value("test", ""));
    }
    c.translit_table = resolve(j.value("translit_table", ""));
    c.out_dir = resolve(j.value("out", c.out_dir));
    c.seed = j.value("seed", c.seed);
    if (j.contains("threshold") && !j.at("threshold").is_null()) c.threshold = j.at("threshold").get<double>();
    const auto tra = j.value("tra_labels", std::string("pseudo"));
    if (tra == "pseudo") c.tra_labels = TraLabels::Pseudo;
    else if (tra == "gold") c.tra_labels = TraLabels::Gold;
    else throw ConfigError("tra_labels must be 'pseudo' or 'gold'");
    const auto lab = j.value("labeler", std::string("shared"));
    if (lab == "shared") c.labeler = LabelerMode::Shared;
    else if (lab == "separate") c.labeler = LabelerMode::Separate;
    else throw ConfigError("labeler must be 'shared' or 'separate'");
    c.model = ModelConfig::for_language(c.language);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("labeler_model")) c.labeler_model = j.at("labeler_model").get<ModelConfig>();
    if (j.contains("labeler_train")) c.labeler_train = j.at("labeler_train").get<TrainConfig>();
    c.min_freq = j.value("min_freq", c.min_freq);
    c.model_tag = j.value("model_tag", c.model_tag);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Stage helpers
// ---------------------------------------------------------------------------

/// Loads a corpus file in either the plain or the origin-tagged format. A
/// file is tagged when its first record ends in a `cm`/`tra` field.
inline Dataset load_corpus(const std::string& path, Language language, Split split, bool labeled,
                           const WarningSink& warn = stderr_warning) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  bool tagged = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (utf8::trim(line).empty() || is_known_header(line)) continue;
    const auto tab = line.rfind('\t');
    if (tab != std::string::npos) {
      const auto last = line.substr(tab + 1);
      tagged = last == "cm" || last == "tra";
    }
    break;
  }
  return tagged ? load_tagged(path, language, split, warn) : load_split(path, language, split, labeled, warn);
}

/// Loads, validates and reports published-size discrepancies for one split.
inline Dataset prepare_split(const std::string& path, Language language, Split split, bool labeled,
                             const WarningSink& warn) {
  auto ds = load_corpus(path, language, split, labeled, warn);
  const auto check = validate_labels(ds);
  if (!check.ok()) {
    const auto& v = check.violations.front();
    throw LabelSetError(path + ": sample " + std::to_string(v.index) + " has label " +
                        std::string(short_code(v.label)) + " outside the label set");
  }
  if (warn) {
    for (const auto& msg : published_discrepancies(ds)) warn(path + ": " + msg);
  }
  return ds;
}

inline nlohmann::json dataset_summary(const Dataset& ds) {
  nlohmann::json counts = nlohmann::json::object();
  bool labeled = true;
  for (const auto& c : ds) labeled = labeled && c.label.has_value();
  if (labeled) {
    const auto dist = class_distribution(ds);
    for (auto l : label_set(ds.language())) counts[std::string(short_code(l))] = dist[index_of(l)];
  }
  return {{"language", std::string(to_string(ds.language()))},
          {"split", std::string(to_string(ds.split()))},
          {"size", ds.size()},
          {"class_counts", labeled ? counts : nlohmann::json(nullptr)}};
}

struct Evaluation {
  eval::ConfusionMatrix confusion;
  eval::MetricsReport metrics;
  eval::ClassificationReport report;
};

inline Evaluation evaluate_model(const ClassifierModel& model, const Dataset& test) {
  if (test.language() != model.language) throw LanguageMismatchError("test data language differs from model");
  if (test.empty()) throw EmptyEvaluationError("test split is empty");
  const auto preds = predict(model, test);
  std::vector<OffenseLabel> gold, pred;
  gold.reserve(test.size());
  pred.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].label) throw UnlabeledSampleError("test sample " + std::to_string(i) + " has no label");
    gold.push_back(*test[i].label);
    pred.push_back(preds[i].label);
  }
  Evaluation ev;
  ev.confusion = eval::confusion_matrix(gold, pred, model.labels());
  ev.metrics = eval::evaluate(ev.confusion);
  ev.report = eval::classification_report(ev.metrics, ev.confusion);
  return ev;
}

/// `<language>_<variant>_<tag>`, the stem of every report file name.
inline std::string artifact_stem(Language language, std::string_view variant, std::string_view tag) {
  return std::string(to_string(language)) + "_" + std::string(variant) + "_" + std::string(tag);
}

struct ReportFiles {
  std::string text, json, heatmap;
};

inline ReportFiles report_file_names(const std::string& stem) {
  return {"report_" + stem + ".txt", "report_" + stem + ".json", "heatmap_" + stem + ".csv"};
}

inline ReportFiles write_reports(const fs::path& dir, const std::string& stem, const eval::ClassificationReport& r) {
  fs::create_directories(dir);
  const auto names = report_file_names(stem);
  write_file(dir / names.text, r.text);
  write_file(dir / names.json, r.record.dump(2) + "\n");
  write_file(dir / names.heatmap, r.heatmap);
  return names;
}

inline std::string history_jsonl(const TrainHistory& history, std::string_view phase) {
  std::string out;
  for (const auto& rec : history) {
    auto j = to_json_line(rec);
    j["phase"] = std::string(phase);
    out += j.dump() + "\n";
  }
  return out;
}

/// Seed of the separately trained labeler, kept apart from the final model's.
inline std::uint64_t labeler_seed(std::uint64_t seed) { return splitmix64(seed ^ fnv1a64("labeler")); }

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointDir = "checkpoint";
inline constexpr std::string_view kHistoryFile = "history.jsonl";
inline constexpr std::string_view kPseudoRunFile = "pseudo_run.json";
inline constexpr std::string_view kTransliteratedFile = "transliterated.tsv";
inline constexpr std::string_view kPseudoLabeledFile = "pseudo_labeled.tsv";
inline constexpr std::string_view kCmTraFile = "cmtra.tsv";
inline constexpr std::string_view kManifestFile = "manifest.json";

struct RunResult {
  fs::path dir;
  std::vector<std::string> artifacts;
  eval::MetricsReport metrics;
  nlohmann::json manifest;
};

/// Runs one variant end to end into `cfg.out_dir`. A failing stage is
/// recorded in the manifest before the error propagates as a StageError.
inline RunResult run_experiment(ExperimentConfig cfg, const WarningSink& warn = stderr_warning) {
  cfg.normalize();
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);

  const auto cfg_json = to_json(cfg);
  nlohmann::json manifest{{"tool", "cmtra"},
                          {"version", std::string(kVersion)},
                          {"language", std::string(to_string(cfg.language))},
                          {"variant", std::string(to_string(cfg.variant))},
                          {"model_tag", cfg.model_tag},
                          {"seed", cfg.seed},
                          {"config", cfg_json},
                          {"config_sha256", sha256_hex(cfg_json.dump())},
                          {"inputs", nlohmann::json::object()},
                          {"stages", nlohmann::json::array()},
                          {"warnings", nlohmann::json::array()},
                          {"artifacts", nlohmann::json::array()}};
  RunResult result;
  result.dir = dir;
  auto collect = [&](std::string_view msg) {
    manifest["warnings"].push_back(std::string(msg));
    if (warn) warn(msg);
  };
  auto artifact = [&](const std::string& name) {
    result.artifacts.push_back(name);
    manifest["artifacts"].push_back(name);
  };
  auto write_manifest = [&] { write_file(dir / kManifestFile, manifest.dump(2) + "\n"); };

  std::string stage;
  auto run_stage = [&](std::string name, auto&& body) {
    stage = std::move(name);
    body();
    manifest["stages"].push_back(stage);
  };

  try {
    std::optional<Dataset> train_cm, dev, test, tra, pseudo_set, final_set;
    std::optional<ClassifierModel> model;
    TrainHistory labeler_history;

    run_stage("prepare", [&] {
      auto record_input = [&](const char* key, const std::string& path) {
        manifest["inputs"][key] = {{"path", path}, {"sha256", sha256_file(path)}};
      };
      record_input("train", cfg.train_path);
      record_input("test", cfg.test_path);
      if (!cfg.dev_path.empty()) record_input("dev", cfg.dev_path);
      if (cfg.transliterates()) record_input("translit_table", cfg.translit_table);
      train_cm = prepare_split(cfg.train_path, cfg.language, Split::Train, true, collect);
      if (!cfg.dev_path.empty()) dev = prepare_split(cfg.dev_path, cfg.language, Split::Dev, true, collect);
      test = prepare_split(cfg.test_path, cfg.language, Split::Test, true, collect);
      if (train_cm->empty()) throw EmptyCorpusError("training split is empty");
    });

    if (cfg.transliterates()) {
      run_stage("transliterate", [&] {
        const auto mapping = translit::load_mapping(cfg.translit_table, cfg.language);
        translit::TranslitStats stats;
        tra = translit::transliterate_dataset(*train_cm, mapping, cfg.tra_labels == TraLabels::Gold, &stats);
        manifest["translit_unmapped_chars"] = stats.unmapped_chars;
        save_dataset((dir / kTransliteratedFile).string(), *tra, RecordFormat::Tagged);
        artifact(std::string(kTransliteratedFile));
      });
    }

    // Vocabulary over every text the models train on.
    std::vector<const Dataset*> vocab_sources{&*train_cm};
    if (tra) vocab_sources.push_back(&*tra);

    if (cfg.pseudo_labels()) {
      ClassifierModel labeler = [&] {
        ModelConfig mc = cfg.labeler == LabelerMode::Separate && cfg.labeler_model ? *cfg.labeler_model : cfg.model;
        TrainConfig tc = cfg.labeler == LabelerMode::Separate && cfg.labeler_train ? *cfg.labeler_train : cfg.train;
        if (cfg.labeler == LabelerMode::Separate) {
          mc.seed = labeler_seed(cfg.seed);
          tc.seed = mc.seed;
        }
        ClassifierModel m = make_model(cfg.language, build_vocab(vocab_sources, cfg.min_freq), mc);
        run_stage("train-labeler", [&] { labeler_history = train(m, *train_cm, tc, dev ? &*dev : nullptr); });
        return m;
      }();
      run_stage("pseudo-label", [&] {
        if (tra->split() == Split::Test) throw DataError("refusing to pseudo-label a test split");
        auto res = pseudo::generate_pseudo_labels(labeler, *tra, cfg.threshold,
                                                  cfg.model_tag + "@" + std::string(to_string(Variant::CM)));
        save_dataset((dir / kPseudoLabeledFile).string(), res.dataset, RecordFormat::Tagged);
        write_file(dir / kPseudoRunFile, pseudo::to_json(res.run).dump(2) + "\n");
        artifact(std::string(kPseudoLabeledFile));
        artifact(std::string(kPseudoRunFile));
        pseudo_set = std::move(res.dataset);
      });
      if (cfg.labeler == LabelerMode::Shared) model = std::move(labeler);
    } else if (tra) {
      pseudo_set = tra;  // gold-labeled transliterations
    }

    if (cfg.variant == Variant::CMTRA) {
      run_stage("build-cmtra", [&] {
        final_set = pseudo::build_cm_tra(*train_cm, *pseudo_set, cfg.seed);
        save_dataset((dir / kCmTraFile).string(), *final_set, RecordFormat::Tagged);
        artifact(std::string(kCmTraFile));
      });
    } else if (cfg.variant == Variant::TRA) {
      final_set = std::move(pseudo_set);
    } else {
      final_set = train_cm;
    }

    run_stage("train", [&] {
      if (!model) model = make_model(cfg.language, build_vocab(vocab_sources, cfg.min_freq), cfg.model);
      const auto history = train(*model, *final_set, cfg.train, dev ? &*dev : nullptr);
      std::string lines;
      if (cfg.pseudo_labels()) lines += history_jsonl(labeler_history, "labeler");
      lines += history_jsonl(history, "final");
      write_file(dir / kHistoryFile, lines);
      artifact(std::string(kHistoryFile));
      save_checkpoint(*model, dir / kCheckpointDir);
      artifact(std::string(kCheckpointDir) + "/model.bin");
      artifact(std::string(kCheckpointDir) + "/model.json");
    });

    run_stage("evaluate", [&] {
      const auto ev = evaluate_model(*model, *test);
      const auto names =
          write_reports(dir, artifact_stem(cfg.language, to_string(cfg.variant), cfg.model_tag), ev.report);
      artifact(names.text);
      artifact(names.json);
      artifact(names.heatmap);
      result.metrics = ev.metrics;
    });

    manifest["status"] = "ok";
    write_manifest();
    result.manifest = manifest;
    return result;
  } catch (const Error& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = e.what();
    write_manifest();
    throw StageError(stage, e.what(), e.exit_code());
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = e.what();
    write_manifest();
    throw StageError(stage, e.what(), 2);
  }
}

}  // namespace cmtra::pipeline
