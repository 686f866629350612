// Writes toy Tamil splits and a small-model config for the CLI tests.

#include <iostream>

#include "cmtra/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace cmtra;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <dir>\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  fx::write_text(dir / "train.tsv", fx::to_tsv(fx::toy_corpus(Language::Tamil, 40, 1)));
  fx::write_text(dir / "dev.tsv", fx::to_tsv(fx::toy_corpus(Language::Tamil, 10, 2, Split::Dev)));
  fx::write_text(dir / "test.tsv", fx::to_tsv(fx::toy_corpus(Language::Tamil, 20, 3, Split::Test)));
  // second record carries a label outside the set
  fx::write_text(dir / "bad.tsv", "vanakkam\tNot_offensive\nnanri\tOffensive_Unknown\n");

  auto model = ModelConfig::for_language(Language::Tamil);
  model.d_model = 16;
  model.num_heads = 2;
  model.num_layers = 1;
  model.d_ff = 16;
  model.lstm_hidden = 8;
  model.max_len = 16;
  TrainConfig train;
  train.epochs = 1;
  train.schedule.base_lr = 1e-3;
  const nlohmann::json cfg{{"language", "tamil"},
                           {"variant", "cmtra"},
                           {"data", {{"train", "train.tsv"}, {"dev", "dev.tsv"}, {"test", "test.tsv"}}},
                           {"seed", 42},
                           {"model", model},
                           {"train", train},
                           {"out", "run"}};
  pipeline::write_file(dir / "config.json", cfg.dump(2) + "\n");
  auto broken = cfg;
  broken["data"]["test"] = "missing.tsv";
  pipeline::write_file(dir / "missing_data.json", broken.dump(2) + "\n");
  broken = cfg;
  broken["data"]["test"] = "bad.tsv";
  pipeline::write_file(dir / "bad_label.json", broken.dump(2) + "\n");
  return 0;
}
