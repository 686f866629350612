#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmtra/corpus.hpp"
#include "cmtra/errors.hpp"
#include "cmtra/nn/checkpoint.hpp"
#include "cmtra/nn/lstm.hpp"
#include "cmtra/nn/matrix.hpp"
#include "cmtra/nn/ops.hpp"
#include "cmtra/nn/optim.hpp"
#include "cmtra/random.hpp"
#include "cmtra/utf8.hpp"

namespace cmtra {

// ---------------------------------------------------------------------------
// Tokenizer and vocabulary
// ---------------------------------------------------------------------------

/// Whitespace tokens with Latin letters lowercased; other scripts untouched.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t ch = utf8::decode_one(text, pos);
    if (utf8::is_space(ch)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    if (ch >= U'A' && ch <= U'Z') ch += 0x20;
    else if (ch >= 0xC0 && ch <= 0xDE && ch != 0xD7) ch += 0x20;
    utf8::append(cur, ch);
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kReserved = 3;

  Vocab() : tokens_{"[PAD]", "[UNK]", "[CLS]"} {}

  /// Builds from an id-ordered token list whose first three entries are the
  /// reserved tokens.
  static Vocab from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kReserved || tokens[0] != "[PAD]" || tokens[1] != "[UNK]" || tokens[2] != "[CLS]") {
      throw DataError("vocabulary does not start with the reserved tokens");
    }
    Vocab v;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = kReserved; i < v.tokens_.size(); ++i) {
      if (!v.ids_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
        throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
      }
    }
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::int32_t id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

  void add(std::string token) {
    if (ids_.count(token)) return;
    ids_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// Tokens seen at least `min_freq` times across all datasets. Ids after the
/// reserved three follow descending frequency, ties in byte order.
inline Vocab build_vocab(std::span<const Dataset* const> corpora, std::size_t min_freq) {
  if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
  std::map<std::string, std::size_t> freq;
  std::size_t samples = 0;
  for (const Dataset* ds : corpora) {
    for (const auto& c : *ds) {
      ++samples;
      for (auto& t : tokenize(c.text)) ++freq[std::move(t)];
    }
  }
  if (samples == 0) throw EmptyCorpusError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : kept) v.add(tok);
  return v;
}

inline Vocab build_vocab(const Dataset& ds, std::size_t min_freq) {
  const Dataset* one[] = {&ds};
  return build_vocab(std::span<const Dataset* const>(one), min_freq);
}

using TokenIds = std::vector<std::int32_t>;

/// [CLS] + token ids, truncated and then padded to exactly max_len.
inline TokenIds encode_text(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  TokenIds ids;
  ids.reserve(max_len);
  ids.push_back(Vocab::kCls);
  for (const auto& t : tokenize(text)) {
    if (ids.size() == max_len) break;
    ids.push_back(vocab.id(t));
  }
  ids.resize(max_len, Vocab::kPad);
  return ids;
}

/// Positions that take part in attention: everything up to the last non-PAD id.
inline std::size_t effective_length(std::span<const std::int32_t> ids) {
  std::size_t n = ids.size();
  while (n > 1 && ids[n - 1] == Vocab::kPad) --n;
  return n == 0 ? 0 : n;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t d_ff = 256;
  std::size_t lstm_hidden = 256;
  double dropout = 0.4;
  std::size_t max_len = 128;
  std::size_t num_classes = 6;
  bool use_bilstm_head = true;
  std::uint64_t seed = 42;

  void validate() const {
    if (d_model == 0 || num_heads == 0 || d_model % num_heads != 0)
      throw ConfigError("d_model must be a positive multiple of num_heads");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for positional encoding");
    if (d_ff == 0 || lstm_hidden == 0) throw ConfigError("d_ff and lstm_hidden must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  }

  /// Desk-scale defaults with the class count of a language.
  static ModelConfig for_language(Language lang) {
    ModelConfig c;
    c.num_classes = label_set(lang).size();
    return c;
  }

  /// Widths of the large multilingual encoder (1024 wide, 16 heads); for
  /// shape checks only.
  static ModelConfig paper_shape(Language lang) {
    auto c = for_language(lang);
    c.d_model = 1024;
    c.num_heads = 16;
    c.d_ff = 4096;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},     {"num_heads", c.num_heads},   {"num_layers", c.num_layers},
                     {"d_ff", c.d_ff},           {"lstm_hidden", c.lstm_hidden}, {"dropout", c.dropout},
                     {"max_len", c.max_len},     {"num_classes", c.num_classes},
                     {"use_bilstm_head", c.use_bilstm_head}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.max_len = j.value("max_len", c.max_len);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.use_bilstm_head = j.value("use_bilstm_head", c.use_bilstm_head);
  c.seed = j.value("seed", c.seed);
}

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  nn::AdamWConfig optimizer;
  nn::ScheduleConfig schedule;  // total_steps is derived from the data
  std::uint64_t seed = 42;
  bool class_weighting = false;
  std::size_t freeze_epochs_per_group = 0;  // 0 disables gradual unfreezing

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.schedule.base_lr},
                     {"cut_fraction", c.schedule.cut_fraction},
                     {"stlr_ratio", c.schedule.ratio},
                     {"layer_decay", c.schedule.layer_decay},
                     {"beta1", c.optimizer.beta1},
                     {"beta2", c.optimizer.beta2},
                     {"adam_eps", c.optimizer.eps},
                     {"weight_decay", c.optimizer.weight_decay},
                     {"seed", c.seed},
                     {"class_weighting", c.class_weighting},
                     {"freeze_epochs_per_group", c.freeze_epochs_per_group}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.schedule.base_lr = j.value("learning_rate", c.schedule.base_lr);
  c.schedule.cut_fraction = j.value("cut_fraction", c.schedule.cut_fraction);
  c.schedule.ratio = j.value("stlr_ratio", c.schedule.ratio);
  c.schedule.layer_decay = j.value("layer_decay", c.schedule.layer_decay);
  c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
  c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
  c.optimizer.eps = j.value("adam_eps", c.optimizer.eps);
  c.optimizer.weight_decay = j.value("weight_decay", c.optimizer.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.class_weighting = j.value("class_weighting", c.class_weighting);
  c.freeze_epochs_per_group = j.value("freeze_epochs_per_group", c.freeze_epochs_per_group);
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

struct EncoderLayerParams {
  nn::AttentionParams attn;
  nn::LayerNormParams ln1;
  nn::FfnParams ffn;
  nn::LayerNormParams ln2;
};

/// All trainable tensors. The same type doubles as the gradient accumulator.
struct ModelWeights {
  nn::Matrix embedding;  // |vocab| x d_model
  std::vector<EncoderLayerParams> layers;
  nn::LstmParams lstm_fwd, lstm_bwd;  // empty without the BiLSTM head
  nn::Matrix classifier_w;            // features x num_classes
  nn::Matrix classifier_b;            // 1 x num_classes

  static ModelWeights zeros(const ModelConfig& cfg, std::size_t vocab_size) {
    ModelWeights w;
    w.embedding = nn::Matrix(vocab_size, cfg.d_model);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      w.layers.push_back({nn::AttentionParams::zeros(cfg.d_model, cfg.num_heads),
                          nn::LayerNormParams::zeros(cfg.d_model), nn::FfnParams::zeros(cfg.d_model, cfg.d_ff),
                          nn::LayerNormParams::zeros(cfg.d_model)});
    }
    std::size_t features = cfg.d_model;
    if (cfg.use_bilstm_head) {
      w.lstm_fwd = nn::LstmParams::zeros(cfg.d_model, cfg.lstm_hidden);
      w.lstm_bwd = nn::LstmParams::zeros(cfg.d_model, cfg.lstm_hidden);
      features = 2 * cfg.lstm_hidden;
    }
    w.classifier_w = nn::Matrix(features, cfg.num_classes);
    w.classifier_b = nn::Matrix(1, cfg.num_classes);
    return w;
  }

  /// Number of layer groups for discriminative learning rates: the
  /// embedding, one per encoder layer, and the task head on top.
  std::size_t num_groups() const noexcept { return layers.size() + 2; }

  /// Visits every tensor in a fixed order as f(name, tensor, group). Group 0
  /// is the embedding; the head (BiLSTM and classifier) is the top group.
  template <typename F>
  void for_each(F&& f) {
    std::size_t group = 0;
    f(std::string("embedding"), embedding, group);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      ++group;
      const std::string p = "encoder." + std::to_string(l) + ".";
      layers[l].attn.for_each([&](const std::string& n, nn::Matrix& m) { f(p + "attn." + n, m, group); });
      layers[l].ln1.for_each([&](const std::string& n, nn::Matrix& m) { f(p + "ln1." + n, m, group); });
      layers[l].ffn.for_each([&](const std::string& n, nn::Matrix& m) { f(p + "ffn." + n, m, group); });
      layers[l].ln2.for_each([&](const std::string& n, nn::Matrix& m) { f(p + "ln2." + n, m, group); });
    }
    ++group;
    if (lstm_fwd.w_i.size() > 0) {
      lstm_fwd.for_each([&](const std::string& n, nn::Matrix& m) { f("lstm.fwd." + n, m, group); });
      lstm_bwd.for_each([&](const std::string& n, nn::Matrix& m) { f("lstm.bwd." + n, m, group); });
    }
    f(std::string("classifier.w"), classifier_w, group);
    f(std::string("classifier.b"), classifier_b, group);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelWeights*>(this)->for_each(
        [&](const std::string& n, nn::Matrix& m, std::size_t g) { f(n, static_cast<const nn::Matrix&>(m), g); });
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    for_each([&](const std::string&, const nn::Matrix& m, std::size_t) {
      out.insert(out.end(), m.flat().begin(), m.flat().end());
    });
    return out;
  }

  void unflatten(std::span<const double> flat) {
    std::size_t off = 0;
    for_each([&](const std::string&, nn::Matrix& m, std::size_t) {
      if (off + m.size() > flat.size()) throw ShapeError("flat parameter vector too short");
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.flat().begin());
      off += m.size();
    });
    if (off != flat.size()) throw ShapeError("flat parameter vector too long");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const nn::Matrix& m, std::size_t) { n += m.size(); });
    return n;
  }

  void zero() {
    for_each([](const std::string&, nn::Matrix& m, std::size_t) { m.fill(0.0); });
  }
};

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

struct ClassifierModel {
  Language language = Language::Kannada;
  Vocab vocab;
  ModelConfig config;
  ModelWeights weights;

  std::vector<OffenseLabel> labels() const { return label_set(language); }
};

inline void xavier_uniform(nn::Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : m.storage()) x = rng.uniform(-bound, bound);
}

/// Fresh model: Xavier-uniform weights from the config seed's "init"
/// stream, zero biases, unit layer-norm scales.
inline ClassifierModel make_model(Language language, Vocab vocab, ModelConfig config) {
  config.validate();
  if (config.num_classes != label_set(language).size()) {
    throw ConfigError("num_classes " + std::to_string(config.num_classes) + " does not match the " +
                      std::to_string(label_set(language).size()) + " labels of " + std::string(to_string(language)));
  }
  ClassifierModel m{language, std::move(vocab), config, {}};
  m.weights = ModelWeights::zeros(config, m.vocab.size());
  Rng rng = Rng::substream(config.seed, "init");
  auto init = [&](nn::Matrix& w) { xavier_uniform(w, w.rows(), w.cols(), rng); };
  init(m.weights.embedding);
  for (auto& layer : m.weights.layers) {
    for (auto& w : layer.attn.wq) init(w);
    for (auto& w : layer.attn.wk) init(w);
    for (auto& w : layer.attn.wv) init(w);
    init(layer.attn.wo);
    layer.ln1 = nn::LayerNormParams::identity(config.d_model);
    init(layer.ffn.w1);
    init(layer.ffn.w2);
    layer.ln2 = nn::LayerNormParams::identity(config.d_model);
  }
  if (config.use_bilstm_head) {
    for (auto* p : {&m.weights.lstm_fwd, &m.weights.lstm_bwd}) {
      init(p->w_i);
      init(p->w_f);
      init(p->w_o);
      init(p->w_c);
    }
  }
  init(m.weights.classifier_w);
  return m;
}

struct EncoderLayerCache {
  nn::MultiHeadCache<double> attn;
  nn::LayerNormCache<double> ln1;
  nn::FfnCache<double> ffn;
  nn::LayerNormCache<double> ln2;
};

/// Intermediate values of one sample's forward pass.
struct ForwardTrace {
  std::vector<std::int32_t> ids;  // effective prefix
  std::vector<EncoderLayerCache> layers;
  nn::Matrix states;  // final encoder states, L x d_model
  nn::BiLstmCache<double> lstm;
  std::vector<double> features;
  std::vector<double> dropout_scale;  // empty in eval mode
  std::vector<double> logits;
  std::vector<double> probs;
};

struct EncoderOutput {
  nn::Matrix sequence_states;
  std::vector<double> pooled;
};

inline void check_ids(const ClassifierModel& model, std::span<const std::int32_t> ids) {
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab.size()) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(model.vocab.size()));
    }
  }
}

/// Embedding (scaled by sqrt(d_model)) plus positional encoding, then the
/// encoder stack. With `valid_keys`, positions at or after it are masked out
/// as attention keys.
inline EncoderOutput encode(const ClassifierModel& model, std::span<const std::int32_t> ids,
                            std::optional<std::size_t> valid_keys = std::nullopt,
                            std::vector<EncoderLayerCache>* caches = nullptr) {
  check_ids(model, ids);
  const auto& cfg = model.config;
  const std::size_t len = ids.size();
  if (len == 0) throw EmptySequenceError("empty token sequence");
  const double scale = std::sqrt(static_cast<double>(cfg.d_model));
  nn::Matrix x = nn::positional_encoding(len, cfg.d_model);
  for (std::size_t t = 0; t < len; ++t) {
    const auto e = model.weights.embedding.row(static_cast<std::size_t>(ids[t]));
    auto r = x.row(t);
    for (std::size_t j = 0; j < cfg.d_model; ++j) r[j] += scale * e[j];
  }
  if (caches != nullptr) caches->assign(model.weights.layers.size(), {});
  for (std::size_t l = 0; l < model.weights.layers.size(); ++l) {
    const auto& p = model.weights.layers[l];
    EncoderLayerCache* c = caches != nullptr ? &(*caches)[l] : nullptr;
    auto a = nn::multi_head_attention(x, p.attn, valid_keys, c ? &c->attn : nullptr);
    nn::add_inplace(a, x);
    auto y = nn::layer_norm(a, p.ln1, c ? &c->ln1 : nullptr);
    auto f = nn::position_wise_ffn(y, p.ffn, c ? &c->ffn : nullptr);
    nn::add_inplace(f, y);
    x = nn::layer_norm(f, p.ln2, c ? &c->ln2 : nullptr);
  }
  EncoderOutput out;
  out.pooled.assign(x.row(0).begin(), x.row(0).end());
  out.sequence_states = std::move(x);
  return out;
}

/// Forward pass of one padded sequence. Positions after the last non-PAD id
/// are dropped before encoding, which equals masking them as keys and never
/// reading their states. `dropout_rng` is only used in train mode.
inline ForwardTrace forward_sample(const ClassifierModel& model, std::span<const std::int32_t> ids,
                                   bool train_mode, Rng* dropout_rng = nullptr, bool keep_cache = false) {
  ForwardTrace tr;
  check_ids(model, ids);
  const std::size_t len = effective_length(ids);
  tr.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(len));
  auto enc = encode(model, tr.ids, std::nullopt, keep_cache ? &tr.layers : nullptr);
  tr.states = std::move(enc.sequence_states);

  const auto& cfg = model.config;
  if (cfg.use_bilstm_head) {
    const auto hs = nn::bilstm_forward(tr.states, model.weights.lstm_fwd, model.weights.lstm_bwd,
                                       keep_cache ? &tr.lstm : nullptr);
    // Final state of each direction: forward after the last position,
    // backward after position 0.
    const std::size_t h = cfg.lstm_hidden;
    tr.features.assign(hs.back().begin(), hs.back().begin() + static_cast<std::ptrdiff_t>(h));
    tr.features.insert(tr.features.end(), hs.front().begin() + static_cast<std::ptrdiff_t>(h), hs.front().end());
  } else {
    tr.features = std::move(enc.pooled);
  }

  std::vector<double> z = tr.features;
  if (train_mode && cfg.dropout > 0.0) {
    if (dropout_rng == nullptr) throw ConfigError("train-mode forward needs a dropout generator");
    tr.dropout_scale.resize(z.size());
    const double keep = 1.0 - cfg.dropout;
    for (std::size_t i = 0; i < z.size(); ++i) {
      tr.dropout_scale[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      z[i] *= tr.dropout_scale[i];
    }
  }
  const auto& w = model.weights.classifier_w;
  tr.logits.assign(model.weights.classifier_b.flat().begin(), model.weights.classifier_b.flat().end());
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (z[k] == 0.0) continue;
    for (std::size_t j = 0; j < w.cols(); ++j) tr.logits[j] += z[k] * w(k, j);
  }
  tr.probs = nn::softmax(tr.logits);
  if (!nn::all_finite<double>(tr.probs)) throw NumericalError("non-finite class probabilities");
  return tr;
}

/// Backpropagates dL/dlogits through a trace produced with keep_cache = true
/// and accumulates into `grads`.
inline void backward_sample(const ClassifierModel& model, const ForwardTrace& tr, std::span<const double> dlogits,
                            ModelWeights& grads) {
  const auto& cfg = model.config;
  const auto& w = model.weights.classifier_w;
  std::vector<double> z = tr.features;
  if (!tr.dropout_scale.empty())
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= tr.dropout_scale[i];

  std::vector<double> dz(z.size(), 0.0);
  for (std::size_t k = 0; k < z.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      grads.classifier_w(k, j) += z[k] * dlogits[j];
      acc += w(k, j) * dlogits[j];
    }
    dz[k] = acc;
  }
  for (std::size_t j = 0; j < w.cols(); ++j) grads.classifier_b(0, j) += dlogits[j];
  if (!tr.dropout_scale.empty())
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= tr.dropout_scale[i];

  const std::size_t len = tr.ids.size();
  nn::Matrix dx(len, cfg.d_model);
  if (cfg.use_bilstm_head) {
    const std::size_t h = cfg.lstm_hidden;
    std::vector<std::vector<double>> dh_f(len), dh_b(len);
    dh_f[len - 1].assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(h));
    dh_b[0].assign(dz.begin() + static_cast<std::ptrdiff_t>(h), dz.end());
    nn::lstm_run_backward(dh_f, model.weights.lstm_fwd, tr.lstm.fwd, false, grads.lstm_fwd, dx);
    nn::lstm_run_backward(dh_b, model.weights.lstm_bwd, tr.lstm.bwd, true, grads.lstm_bwd, dx);
  } else {
    std::copy(dz.begin(), dz.end(), dx.row(0).begin());
  }

  for (std::size_t l = model.weights.layers.size(); l-- > 0;) {
    const auto& p = model.weights.layers[l];
    const auto& c = tr.layers[l];
    auto& g = grads.layers[l];
    auto dr2 = nn::layer_norm_backward(dx, p.ln2, c.ln2, g.ln2);
    auto dy = nn::position_wise_ffn_backward(dr2, p.ffn, c.ffn, g.ffn);
    nn::add_inplace(dy, dr2);
    auto dr1 = nn::layer_norm_backward(dy, p.ln1, c.ln1, g.ln1);
    dx = nn::multi_head_attention_backward(dr1, p.attn, c.attn, g.attn);
    nn::add_inplace(dx, dr1);
  }

  const double scale = std::sqrt(static_cast<double>(cfg.d_model));
  for (std::size_t t = 0; t < len; ++t) {
    auto gr = grads.embedding.row(static_cast<std::size_t>(tr.ids[t]));
    const auto d = dx.row(t);
    for (std::size_t j = 0; j < cfg.d_model; ++j) gr[j] += scale * d[j];
  }
}

/// Class probabilities for a batch of padded sequences.
inline std::vector<std::vector<double>> forward(const ClassifierModel& model, std::span<const TokenIds> batch,
                                                bool train_mode, Rng* dropout_rng = nullptr) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& ids : batch) {
    if (ids.size() != model.config.max_len) {
      throw ShapeError("sequence length " + std::to_string(ids.size()) + " != max_len " +
                       std::to_string(model.config.max_len));
    }
    out.push_back(forward_sample(model, ids, train_mode, dropout_rng).probs);
  }
  return out;
}

struct Prediction {
  OffenseLabel label;
  std::vector<double> probs;
};

/// Argmax label per text in evaluation mode; ties go to the lowest class index.
inline std::vector<Prediction> predict(const ClassifierModel& model, std::span<const std::string> texts) {
  const auto labels = model.labels();
  std::vector<Prediction> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto ids = encode_text(text, model.vocab, model.config.max_len);
    auto probs = forward_sample(model, ids, false).probs;
    out.push_back({labels[nn::argmax(probs)], std::move(probs)});
  }
  return out;
}

inline std::vector<Prediction> predict(const ClassifierModel& model, const Dataset& ds) {
  std::vector<std::string> texts;
  texts.reserve(ds.size());
  for (const auto& c : ds) texts.push_back(c.text);
  return predict(model, texts);
}

inline std::size_t class_index(const ClassifierModel& model, OffenseLabel label) {
  const auto labels = model.labels();
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw LabelSetError("label " + std::string(short_code(label)) + " not in the " +
                        std::string(to_string(model.language)) + " label set");
  }
  return static_cast<std::size_t>(it - labels.begin());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> dev_acc;
};

inline nlohmann::json to_json_line(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc}};
  j["dev_acc"] = r.dev_acc ? nlohmann::json(*r.dev_acc) : nlohmann::json(nullptr);
  return j;
}

using TrainHistory = std::vector<EpochRecord>;

/// Inverse-frequency weights N / (K * count_c) over the model's label set;
/// classes absent from the data get weight 0.
inline std::vector<double> class_weights(const ClassifierModel& model, const Dataset& data) {
  const auto labels = model.labels();
  const auto counts = class_distribution(data);
  std::vector<double> w(labels.size(), 0.0);
  const double n = static_cast<double>(data.size());
  const double k = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = counts[index_of(labels[i])];
    w[i] = c == 0 ? 0.0 : n / (k * static_cast<double>(c));
  }
  return w;
}

/// Accuracy of eval-mode predictions against gold labels.
inline double accuracy(const ClassifierModel& model, const Dataset& ds) {
  if (ds.empty()) return 0.0;
  const auto preds = predict(model, ds);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds[i].label) throw UnlabeledSampleError("accuracy over an unlabeled sample");
    correct += preds[i].label == *ds[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Mini-batch AdamW training with the slanted triangular schedule and
/// per-group discriminative rates. The dev split, when given, is scored each
/// epoch and never used for selection.
inline TrainHistory train(ClassifierModel& model, const Dataset& data, const TrainConfig& cfg,
                          const Dataset* dev = nullptr) {
  cfg.validate();
  if (data.empty()) throw EmptyCorpusError("training set is empty");
  if (data.language() != model.language) throw LanguageMismatchError("training data language differs from model");
  std::vector<std::size_t> targets(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].label) throw UnlabeledSampleError("training sample " + std::to_string(i) + " has no label");
    targets[i] = class_index(model, *data[i].label);
  }
  std::vector<TokenIds> encoded;
  encoded.reserve(data.size());
  for (const auto& c : data) encoded.push_back(encode_text(c.text, model.vocab, model.config.max_len));

  const std::vector<double> weights =
      cfg.class_weighting ? class_weights(model, data) : std::vector<double>(model.labels().size(), 1.0);

  const std::size_t batches_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  nn::ScheduleConfig sched = cfg.schedule;
  sched.total_steps = static_cast<long>(cfg.epochs * batches_per_epoch);
  sched.validate();

  const std::size_t groups = model.weights.num_groups();
  std::vector<nn::AdamWState> opt;
  model.weights.for_each([&](const std::string&, const nn::Matrix& m, std::size_t) {
    opt.push_back(nn::AdamWState::for_param(m));
  });

  Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle");
  Rng dropout_rng = Rng::substream(cfg.seed, "dropout");
  ModelWeights grads = ModelWeights::zeros(model.config, model.vocab.size());

  std::vector<std::size_t> order(data.size());
  TrainHistory history;
  long step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    // Groups deeper than `unfrozen_depth` below the top stay frozen.
    const std::size_t unfrozen_depth =
        cfg.freeze_epochs_per_group == 0 ? groups : epoch / cfg.freeze_epochs_per_group;

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.zero();
      double batch_loss = 0.0;
      for (std::size_t s = begin; s < end; ++s) {
        const std::size_t idx = order[s];
        const auto tr = forward_sample(model, encoded[idx], true, &dropout_rng, true);
        const double w = weights[targets[idx]];
        const double loss = w * nn::cross_entropy_loss(tr.probs, targets[idx]);
        if (!std::isfinite(loss)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                               std::to_string(step) + ", sample " + std::to_string(idx));
        }
        batch_loss += loss;
        auto dlogits = nn::cross_entropy_logit_grad<double>(tr.probs, targets[idx]);
        for (auto& d : dlogits) d *= w * inv_batch;
        backward_sample(model, tr, dlogits, grads);
      }
      loss_sum += batch_loss;

      std::size_t ti = 0;
      std::vector<nn::Matrix*> grad_tensors;
      grads.for_each([&](const std::string&, nn::Matrix& m, std::size_t) { grad_tensors.push_back(&m); });
      model.weights.for_each([&](const std::string&, nn::Matrix& param, std::size_t group) {
        const std::size_t depth = groups - 1 - group;
        if (depth < unfrozen_depth || depth == 0) {
          const double lr = nn::schedule_lr(step, group, groups, sched);
          nn::adamw_step(param, *grad_tensors[ti], opt[ti], lr, cfg.optimizer);
        }
        ++ti;
      });
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(data.size());
    rec.train_acc = accuracy(model, data);
    if (dev != nullptr && !dev->empty()) rec.dev_acc = accuracy(model, *dev);
    history.push_back(rec);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/model.bin (tensor container) + <dir>/model.json
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<nn::NamedTensor> tensors;
  model.weights.for_each([&](const std::string& name, const nn::Matrix& m, std::size_t) {
    tensors.push_back({name, m});
  });
  nn::save_tensors((dir / "model.bin").string(), tensors);
  nlohmann::json manifest{{"format", "cmtra-checkpoint"},
                          {"version", kCheckpointVersion},
                          {"tensor_file", "model.bin"},
                          {"language", std::string(to_string(model.language))},
                          {"config", model.config},
                          {"seed", model.config.seed},
                          {"vocab", model.vocab.tokens()}};
  std::ofstream out(dir / "model.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << manifest.dump(2) << '\n';
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "model.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "cmtra-checkpoint" || manifest.value("version", 0) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint manifest");
  }
  ClassifierModel model;
  model.language = parse_language(manifest.at("language").get<std::string>());
  model.config = manifest.at("config").get<ModelConfig>();
  model.config.validate();
  model.vocab = Vocab::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
  model.weights = ModelWeights::zeros(model.config, model.vocab.size());

  auto tensors = nn::load_tensors((dir / manifest.value("tensor_file", "model.bin")).string());
  std::map<std::string, nn::Matrix*> slots;
  model.weights.for_each([&](const std::string& name, nn::Matrix& m, std::size_t) { slots[name] = &m; });
  if (tensors.size() != slots.size()) throw DataError("checkpoint tensor count does not match the architecture");
  for (auto& t : tensors) {
    auto it = slots.find(t.name);
    if (it == slots.end()) throw DataError("unexpected tensor '" + t.name + "' in checkpoint");
    if (!it->second->same_shape(t.value)) throw DataError("tensor '" + t.name + "' has the wrong shape");
    *it->second = std::move(t.value);
  }
  return model;
}

}  // namespace cmtra
