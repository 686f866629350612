#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cmtra/errors.hpp"
#include "cmtra/nn/matrix.hpp"

namespace cmtra::nn {

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Max-subtracted softmax. Entries equal to -inf get probability 0 (used for
/// masked attention keys); at least one entry must be finite.
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  if (logits.empty()) return out;
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

/// Given p = softmax(z) and dL/dp, returns dL/dz = p * (dp - <dp, p>).
template <typename T>
std::vector<T> softmax_backward(std::span<const T> probs, std::span<const T> dprobs) {
  T dot{};
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * dprobs[i];
  std::vector<T> dz(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) dz[i] = probs[i] * (dprobs[i] - dot);
  return dz;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& z) {
  BasicMatrix<T> out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto p = softmax(z.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

/// Index of the largest entry; the first one on ties.
template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <typename T>
std::size_t argmax(const std::vector<T>& v) {
  return argmax(std::span<const T>(v));
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention
// ---------------------------------------------------------------------------

template <typename T>
struct AttentionResult {
  BasicMatrix<T> output;   // rows(Q) x cols(V)
  BasicMatrix<T> weights;  // rows(Q) x rows(K), row-stochastic
};

/// softmax(Q K^T / sqrt(d_k)) V. When `valid_keys` is set, keys at positions
/// >= valid_keys get zero weight.
template <typename T>
AttentionResult<T> scaled_dot_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                        const BasicMatrix<T>& v,
                                        std::optional<std::size_t> valid_keys = std::nullopt) {
  if (q.cols() != k.cols()) throw ShapeError("attention: Q and K widths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V lengths differ");
  if (k.rows() == 0) throw ShapeError("attention: no keys");
  const std::size_t nk = valid_keys ? *valid_keys : k.rows();
  if (nk == 0 || nk > k.rows()) throw ShapeError("attention: valid key count out of range");

  const T scale = T{1} / std::sqrt(static_cast<T>(q.cols()));
  BasicMatrix<T> scores = matmul_nt(q, k);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    for (std::size_t j = 0; j < r.size(); ++j)
      r[j] = j < nk ? r[j] * scale : -std::numeric_limits<T>::infinity();
  }
  AttentionResult<T> res{BasicMatrix<T>(), softmax_rows(scores)};
  res.output = matmul(res.weights, v);
  debug_check_finite(res.output);
  return res;
}

template <typename T>
struct AttentionGrads {
  BasicMatrix<T> dq, dk, dv;
};

template <typename T>
AttentionGrads<T> scaled_dot_attention_backward(const BasicMatrix<T>& dout, const BasicMatrix<T>& q,
                                                const BasicMatrix<T>& k, const BasicMatrix<T>& v,
                                                const BasicMatrix<T>& weights) {
  const T scale = T{1} / std::sqrt(static_cast<T>(q.cols()));
  AttentionGrads<T> g;
  g.dv = matmul_tn(weights, dout);
  const BasicMatrix<T> dweights = matmul_nt(dout, v);
  BasicMatrix<T> dscores(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto ds = softmax_backward(weights.row(i), dweights.row(i));
    for (std::size_t j = 0; j < ds.size(); ++j) dscores(i, j) = ds[j] * scale;
  }
  g.dq = matmul(dscores, k);
  g.dk = matmul_tn(dscores, q);
  return g;
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

/// Per-head projections W_i^Q, W_i^K, W_i^V (d_model x d_k) and the output
/// projection W_O (h*d_k x d_model). No biases.
template <typename T>
struct BasicAttentionParams {
  std::vector<BasicMatrix<T>> wq, wk, wv;
  BasicMatrix<T> wo;

  std::size_t num_heads() const noexcept { return wq.size(); }
  std::size_t d_model() const noexcept { return wo.cols(); }
  std::size_t d_k() const noexcept { return wq.empty() ? 0 : wq.front().cols(); }

  static BasicAttentionParams zeros(std::size_t d_model, std::size_t num_heads) {
    if (num_heads == 0 || d_model % num_heads != 0) {
      throw ConfigError("d_model must be divisible by the number of heads");
    }
    const std::size_t dk = d_model / num_heads;
    BasicAttentionParams p;
    for (std::size_t h = 0; h < num_heads; ++h) {
      p.wq.emplace_back(d_model, dk);
      p.wk.emplace_back(d_model, dk);
      p.wv.emplace_back(d_model, dk);
    }
    p.wo = BasicMatrix<T>(num_heads * dk, d_model);
    return p;
  }

  template <typename F>
  void for_each(F&& f) {
    for (std::size_t h = 0; h < wq.size(); ++h) {
      const auto s = std::to_string(h);
      f("wq." + s, wq[h]);
      f("wk." + s, wk[h]);
      f("wv." + s, wv[h]);
    }
    f(std::string("wo"), wo);
  }
};

using AttentionParams = BasicAttentionParams<double>;

template <typename T>
struct MultiHeadCache {
  BasicMatrix<T> x;
  std::vector<BasicMatrix<T>> q, k, v, weights;
  BasicMatrix<T> concat;
};

template <typename T>
BasicMatrix<T> multi_head_attention(const BasicMatrix<T>& x, const BasicAttentionParams<T>& p,
                                    std::optional<std::size_t> valid_keys = std::nullopt,
                                    MultiHeadCache<T>* cache = nullptr) {
  const std::size_t h = p.num_heads();
  if (h == 0) throw ShapeError("multi-head attention with zero heads");
  const std::size_t dm = p.d_model();
  const std::size_t dk = p.d_k();
  if (x.cols() != dm) throw ShapeError("multi-head attention: input width " + std::to_string(x.cols()) +
                                       " != d_model " + std::to_string(dm));
  for (std::size_t i = 0; i < h; ++i) {
    require_shape(p.wq[i], dm, dk, "W_Q");
    require_shape(p.wk[i], dm, dk, "W_K");
    require_shape(p.wv[i], dm, dk, "W_V");
  }
  require_shape(p.wo, h * dk, dm, "W_O");

  BasicMatrix<T> concat(x.rows(), h * dk);
  if (cache != nullptr) {
    cache->x = x;
    cache->q.clear();
    cache->k.clear();
    cache->v.clear();
    cache->weights.clear();
  }
  for (std::size_t i = 0; i < h; ++i) {
    auto q = matmul(x, p.wq[i]);
    auto k = matmul(x, p.wk[i]);
    auto v = matmul(x, p.wv[i]);
    auto att = scaled_dot_attention(q, k, v, valid_keys);
    for (std::size_t r = 0; r < x.rows(); ++r)
      std::copy_n(att.output.row(r).data(), dk, concat.row(r).data() + i * dk);
    if (cache != nullptr) {
      cache->q.push_back(std::move(q));
      cache->k.push_back(std::move(k));
      cache->v.push_back(std::move(v));
      cache->weights.push_back(std::move(att.weights));
    }
  }
  auto out = matmul(concat, p.wo);
  if (cache != nullptr) cache->concat = std::move(concat);
  return out;
}

/// Accumulates parameter gradients into `grads` and returns dL/dX.
template <typename T>
BasicMatrix<T> multi_head_attention_backward(const BasicMatrix<T>& dout, const BasicAttentionParams<T>& p,
                                             const MultiHeadCache<T>& cache, BasicAttentionParams<T>& grads) {
  const std::size_t h = p.num_heads();
  const std::size_t dk = p.d_k();
  add_inplace(grads.wo, matmul_tn(cache.concat, dout));
  const BasicMatrix<T> dconcat = matmul_nt(dout, p.wo);
  BasicMatrix<T> dx(cache.x.rows(), cache.x.cols());
  for (std::size_t i = 0; i < h; ++i) {
    const auto dhead = slice_cols(dconcat, i * dk, dk);
    const auto g = scaled_dot_attention_backward(dhead, cache.q[i], cache.k[i], cache.v[i], cache.weights[i]);
    add_inplace(grads.wq[i], matmul_tn(cache.x, g.dq));
    add_inplace(grads.wk[i], matmul_tn(cache.x, g.dk));
    add_inplace(grads.wv[i], matmul_tn(cache.x, g.dv));
    add_inplace(dx, matmul_nt(g.dq, p.wq[i]));
    add_inplace(dx, matmul_nt(g.dk, p.wk[i]));
    add_inplace(dx, matmul_nt(g.dv, p.wv[i]));
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Position-wise feed-forward network: max(0, x W1 + b1) W2 + b2
// ---------------------------------------------------------------------------

template <typename T>
struct BasicFfnParams {
  BasicMatrix<T> w1, b1, w2, b2;  // b1: 1 x d_ff, b2: 1 x d_model

  static BasicFfnParams zeros(std::size_t d_model, std::size_t d_ff) {
    return {BasicMatrix<T>(d_model, d_ff), BasicMatrix<T>(1, d_ff), BasicMatrix<T>(d_ff, d_model),
            BasicMatrix<T>(1, d_model)};
  }

  template <typename F>
  void for_each(F&& f) {
    f(std::string("w1"), w1);
    f(std::string("b1"), b1);
    f(std::string("w2"), w2);
    f(std::string("b2"), b2);
  }
};

using FfnParams = BasicFfnParams<double>;

template <typename T>
struct FfnCache {
  BasicMatrix<T> x, pre, act;
};

/// Applies the network to every row of `x`.
template <typename T>
BasicMatrix<T> position_wise_ffn(const BasicMatrix<T>& x, const BasicFfnParams<T>& p,
                                 FfnCache<T>* cache = nullptr) {
  if (x.cols() != p.w1.rows()) throw ShapeError("ffn: input width != d_model");
  require_shape(p.b1, 1, p.w1.cols(), "b_1");
  require_shape(p.w2, p.w1.cols(), p.w1.rows(), "W_2");
  require_shape(p.b2, 1, p.w1.rows(), "b_2");
  auto pre = matmul(x, p.w1);
  add_row_inplace(pre, p.b1);
  auto act = pre;
  for (auto& a : act.storage()) a = std::max(a, T{});
  auto out = matmul(act, p.w2);
  add_row_inplace(out, p.b2);
  if (cache != nullptr) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <typename T>
std::vector<T> position_wise_ffn(std::span<const T> x, const BasicFfnParams<T>& p) {
  const auto out = position_wise_ffn(BasicMatrix<T>::row_vector(x), p);
  return {out.flat().begin(), out.flat().end()};
}

template <typename T>
BasicMatrix<T> position_wise_ffn_backward(const BasicMatrix<T>& dout, const BasicFfnParams<T>& p,
                                          const FfnCache<T>& cache, BasicFfnParams<T>& grads) {
  add_inplace(grads.w2, matmul_tn(cache.act, dout));
  accumulate_column_sums(grads.b2, dout);
  auto dpre = matmul_nt(dout, p.w2);
  for (std::size_t i = 0; i < dpre.size(); ++i)
    if (!(cache.pre.flat()[i] > T{})) dpre.flat()[i] = T{};
  add_inplace(grads.w1, matmul_tn(cache.x, dpre));
  accumulate_column_sums(grads.b1, dpre);
  return matmul_nt(dpre, p.w1);
}

// ---------------------------------------------------------------------------
// Layer normalization over the feature dimension
// ---------------------------------------------------------------------------

template <typename T>
struct BasicLayerNormParams {
  BasicMatrix<T> gamma, beta;  // 1 x d_model

  static BasicLayerNormParams identity(std::size_t d_model) {
    return {BasicMatrix<T>(1, d_model, T{1}), BasicMatrix<T>(1, d_model)};
  }
  static BasicLayerNormParams zeros(std::size_t d_model) {
    return {BasicMatrix<T>(1, d_model), BasicMatrix<T>(1, d_model)};
  }

  template <typename F>
  void for_each(F&& f) {
    f(std::string("gamma"), gamma);
    f(std::string("beta"), beta);
  }
};

using LayerNormParams = BasicLayerNormParams<double>;

template <typename T>
struct LayerNormCache {
  BasicMatrix<T> xhat;
  std::vector<T> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& x, const BasicLayerNormParams<T>& p,
                          LayerNormCache<T>* cache = nullptr) {
  require_shape(p.gamma, 1, x.cols(), "layer-norm gamma");
  require_shape(p.beta, 1, x.cols(), "layer-norm beta");
  const std::size_t n = x.cols();
  BasicMatrix<T> xhat(x.rows(), n), out(x.rows(), n);
  std::vector<T> inv_std(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    T mean{};
    for (T v : r) mean += v;
    mean /= static_cast<T>(n);
    T var{};
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    inv_std[i] = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (r[j] - mean) * inv_std[i];
      out(i, j) = p.gamma(0, j) * xhat(i, j) + p.beta(0, j);
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>& dout, const BasicLayerNormParams<T>& p,
                                   const LayerNormCache<T>& cache, BasicLayerNormParams<T>& grads) {
  const std::size_t n = dout.cols();
  BasicMatrix<T> dx(dout.rows(), n);
  std::vector<T> dxhat(n);
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    T sum_dxhat{}, sum_dxhat_xhat{};
    for (std::size_t j = 0; j < n; ++j) {
      grads.gamma(0, j) += dout(i, j) * cache.xhat(i, j);
      grads.beta(0, j) += dout(i, j);
      dxhat[j] = dout(i, j) * p.gamma(0, j);
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * cache.xhat(i, j);
    }
    const T k = cache.inv_std[i] / static_cast<T>(n);
    for (std::size_t j = 0; j < n; ++j)
      dx(i, j) = k * (static_cast<T>(n) * dxhat[j] - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Sinusoidal positional encoding
// ---------------------------------------------------------------------------

inline Matrix positional_encoding(std::size_t seq_len, std::size_t d_model) {
  if (seq_len == 0) throw ConfigError("positional encoding needs seq_len >= 1");
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("positional encoding needs an even d_model");
  Matrix pe(seq_len, d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline constexpr double kProbFloor = 1e-300;

/// Negative log-likelihood of the target class.
template <typename T>
T cross_entropy_loss(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw IndexError("target class " + std::to_string(target) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[target], static_cast<T>(kProbFloor)));
}

template <typename T>
T cross_entropy_loss(const std::vector<T>& probs, std::size_t target) {
  return cross_entropy_loss(std::span<const T>(probs), target);
}

/// Mean loss over a batch of (probs, target) pairs.
template <typename T>
T mean_cross_entropy(const std::vector<std::vector<T>>& probs, std::span<const std::size_t> targets) {
  if (probs.size() != targets.size()) throw LengthMismatchError("batch and target counts differ");
  if (probs.empty()) return T{};
  T sum{};
  for (std::size_t i = 0; i < probs.size(); ++i) sum += cross_entropy_loss(probs[i], targets[i]);
  return sum / static_cast<T>(probs.size());
}

/// Gradient of the loss with respect to the logits: probs - onehot(target).
template <typename T>
std::vector<T> cross_entropy_logit_grad(std::span<const T> probs, std::size_t target) {
  std::vector<T> g(probs.begin(), probs.end());
  g.at(target) -= T{1};
  return g;
}

}  // namespace cmtra::nn
