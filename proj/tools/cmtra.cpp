// cmtra: command-line front end for the pipeline.
//
//   cmtra run --config exp.json [--variant cmtra] [--seed 7] [--out dir]
//   cmtra prepare --language tamil --input train.tsv
//   cmtra transliterate --language tamil --input train.tsv --out tra.tsv
//   cmtra train --language tamil --train cmtra.tsv --out ckpt/
//   cmtra pseudo-label --checkpoint ckpt/ --input tra.tsv --out pseudo.tsv
//   cmtra build-cmtra --language tamil --cm train.tsv --pseudo pseudo.tsv --out cmtra.tsv
//   cmtra evaluate --checkpoint ckpt/ --test test.tsv --out reports/
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 numerical error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmtra/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cmtra;
using pipeline::ExperimentConfig;

namespace {

#ifdef CMTRA_DATA_DIR
const std::string kDefaultTableDir = std::string(CMTRA_DATA_DIR) + "/translit";
#else
const std::string kDefaultTableDir = "data/translit";
#endif

/// Flags shared by every subcommand that builds on an experiment config.
struct Overrides {
  std::string config;
  std::string language;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> threshold;
  std::string translit_table;
  std::string out;
};

void add_override_flags(CLI::App* cmd, Overrides& o, bool with_out = true) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--language", o.language, "kannada | malayalam | tamil");
  cmd->add_option("--variant", o.variant, "cm | tra | cmtra");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--threshold", o.threshold, "Pseudo-label confidence threshold");
  cmd->add_option("--translit-table", o.translit_table, "Grapheme table (TSV)");
  if (with_out) cmd->add_option("--out", o.out, "Output path");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config.empty()) c = pipeline::load_config(o.config);
  if (!o.language.empty()) {
    try {
      c.language = parse_language(o.language);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (o.config.empty()) c.model = ModelConfig::for_language(c.language);
  }
  if (!o.variant.empty()) c.variant = pipeline::parse_variant(o.variant);
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.threshold) c.threshold = *o.threshold;
  if (!o.translit_table.empty()) c.translit_table = o.translit_table;
  if (!o.out.empty()) c.out_dir = o.out;
  if (c.translit_table.empty()) c.translit_table = translit::mapping_path(kDefaultTableDir, c.language);
  c.normalize();
  return c;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  if (s == "unsplit") return Split::Unsplit;
  throw ConfigError("unknown split '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Code-mixed offensive-language pipeline: transliteration, pseudo-labeling, CM-TRA training"};
  app.set_version_flag("--version", std::string(pipeline::kVersion));
  app.require_subcommand(1);

  // run
  Overrides run_o;
  auto* run = app.add_subcommand("run", "Run one experiment variant end to end");
  add_override_flags(run, run_o);

  // prepare
  Overrides prep_o;
  std::string prep_input, prep_split = "train";
  bool prep_unlabeled = false;
  auto* prep = app.add_subcommand("prepare", "Load and validate a split; print its summary as JSON");
  add_override_flags(prep, prep_o);
  prep->add_option("--input", prep_input, "Split file")->required();
  prep->add_option("--split", prep_split, "train | dev | test | unsplit");
  prep->add_flag("--unlabeled", prep_unlabeled, "Records carry no label");

  // transliterate
  Overrides tr_o;
  std::string tr_input;
  bool tr_drop_labels = false;
  auto* tr = app.add_subcommand("transliterate", "Transliterate a split into native script (tagged TSV)");
  add_override_flags(tr, tr_o);
  tr->add_option("--input", tr_input, "Split file")->required();
  tr->add_flag("--drop-labels", tr_drop_labels, "Emit the transliterations unlabeled");

  // train
  Overrides train_o;
  std::string train_input, train_dev;
  std::vector<std::string> train_vocab_extra;
  auto* trn = app.add_subcommand("train", "Train a classifier and write its checkpoint and history");
  add_override_flags(trn, train_o);
  trn->add_option("--train", train_input, "Training file (plain or tagged)")->required();
  trn->add_option("--dev", train_dev, "Dev file");
  trn->add_option("--vocab-extra", train_vocab_extra, "Extra files whose tokens join the vocabulary");

  // pseudo-label
  Overrides pl_o;
  std::string pl_checkpoint, pl_input, pl_record;
  auto* pl = app.add_subcommand("pseudo-label", "Label transliterated data with a trained model");
  add_override_flags(pl, pl_o);
  pl->add_option("--checkpoint", pl_checkpoint, "Checkpoint directory")->required();
  pl->add_option("--input", pl_input, "Transliterated file (tagged)")->required();
  pl->add_option("--run-record", pl_record, "Where to write the run record JSON");

  // build-cmtra
  Overrides bc_o;
  std::string bc_cm, bc_pseudo;
  auto* bc = app.add_subcommand("build-cmtra", "Merge gold code-mixed and pseudo-labeled data, then shuffle");
  add_override_flags(bc, bc_o);
  bc->add_option("--cm", bc_cm, "Code-mixed training file")->required();
  bc->add_option("--pseudo", bc_pseudo, "Pseudo-labeled file (tagged)")->required();

  // evaluate
  Overrides ev_o;
  std::string ev_checkpoint, ev_test, ev_tag = "transformer-bilstm";
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a test split and write reports");
  add_override_flags(ev, ev_o);
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint directory")->required();
  ev->add_option("--test", ev_test, "Test file")->required();
  ev->add_option("--tag", ev_tag, "Model tag used in report file names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run) {
      const auto cfg = resolve(run_o);
      const auto res = pipeline::run_experiment(cfg);
      std::cout << "run complete: " << res.dir.string() << '\n';
      std::cout << eval::format_report(res.metrics);
    } else if (*prep) {
      const auto cfg = resolve(prep_o);
      const auto ds = pipeline::prepare_split(prep_input, cfg.language, parse_split(prep_split), !prep_unlabeled,
                                              stderr_warning);
      const auto summary = pipeline::dataset_summary(ds).dump(2) + "\n";
      if (prep_o.out.empty()) std::cout << summary;
      else pipeline::write_file(prep_o.out, summary);
    } else if (*tr) {
      const auto cfg = resolve(tr_o);
      require(!tr_o.out.empty(), "transliterate needs --out");
      const auto ds = pipeline::load_corpus(tr_input, cfg.language, Split::Train, !tr_drop_labels);
      const auto mapping = translit::load_mapping(cfg.translit_table, cfg.language);
      translit::TranslitStats stats;
      const auto out = translit::transliterate_dataset(ds, mapping, !tr_drop_labels, &stats);
      save_dataset(tr_o.out, out, RecordFormat::Tagged);
      std::cerr << "transliterated " << out.size() << " samples; " << stats.unmapped_chars
                << " unmapped Latin letters\n";
    } else if (*trn) {
      const auto cfg = resolve(train_o);
      require(!train_o.out.empty(), "train needs --out");
      const auto data = pipeline::load_corpus(train_input, cfg.language, Split::Train, true);
      std::optional<Dataset> dev;
      if (!train_dev.empty()) dev = pipeline::prepare_split(train_dev, cfg.language, Split::Dev, true, stderr_warning);
      std::vector<Dataset> extra;
      for (const auto& p : train_vocab_extra) extra.push_back(pipeline::load_corpus(p, cfg.language, Split::Unsplit, true));
      std::vector<const Dataset*> sources{&data};
      for (const auto& e : extra) sources.push_back(&e);
      auto model = make_model(cfg.language, build_vocab(sources, cfg.min_freq), cfg.model);
      const auto history = train(model, data, cfg.train, dev ? &*dev : nullptr);
      save_checkpoint(model, train_o.out);
      pipeline::write_file(fs::path(train_o.out) / pipeline::kHistoryFile, pipeline::history_jsonl(history, "final"));
      for (const auto& rec : history) std::cout << to_json_line(rec).dump() << '\n';
    } else if (*pl) {
      const auto cfg = resolve(pl_o);
      require(!pl_o.out.empty(), "pseudo-label needs --out");
      const auto model = load_checkpoint(pl_checkpoint);
      const auto data = pipeline::load_corpus(pl_input, model.language, Split::Train, false);
      auto res = pseudo::generate_pseudo_labels(model, data, cfg.threshold, fs::path(pl_checkpoint).filename().string());
      save_dataset(pl_o.out, res.dataset, RecordFormat::Tagged);
      const auto record = pseudo::to_json(res.run).dump(2) + "\n";
      if (pl_record.empty()) std::cout << record;
      else pipeline::write_file(pl_record, record);
    } else if (*bc) {
      const auto cfg = resolve(bc_o);
      require(!bc_o.out.empty(), "build-cmtra needs --out");
      const auto cm = pipeline::prepare_split(bc_cm, cfg.language, Split::Train, true, stderr_warning);
      const auto ps = pipeline::load_corpus(bc_pseudo, cfg.language, Split::Train, true);
      const auto merged = pseudo::build_cm_tra(cm, ps, cfg.seed);
      save_dataset(bc_o.out, merged, RecordFormat::Tagged);
      std::cerr << "CM-TRA: " << cm.size() << " + " << ps.size() << " = " << merged.size() << " samples\n";
    } else if (*ev) {
      const auto cfg = resolve(ev_o);
      require(!ev_o.out.empty(), "evaluate needs --out");
      const auto model = load_checkpoint(ev_checkpoint);
      const auto test = pipeline::prepare_split(ev_test, model.language, Split::Test, true, stderr_warning);
      const auto result = pipeline::evaluate_model(model, test);
      pipeline::write_reports(ev_o.out, pipeline::artifact_stem(model.language, to_string(cfg.variant), ev_tag),
                              result.report);
      std::cout << result.report.text;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
