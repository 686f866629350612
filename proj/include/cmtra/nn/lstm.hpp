#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cmtra/errors.hpp"
#include "cmtra/nn/matrix.hpp"

namespace cmtra::nn {

/// Gate weights act on the concatenation [h_{t-1}, x_t], so each is
/// (hidden + input) x hidden.
template <typename T>
struct BasicLstmParams {
  BasicMatrix<T> w_i, w_f, w_o, w_c;
  BasicMatrix<T> b_i, b_f, b_o, b_c;  // 1 x hidden

  std::size_t hidden() const noexcept { return w_i.cols(); }
  std::size_t input() const noexcept { return w_i.rows() - w_i.cols(); }

  static BasicLstmParams zeros(std::size_t input, std::size_t hidden) {
    const std::size_t rows = hidden + input;
    return {BasicMatrix<T>(rows, hidden), BasicMatrix<T>(rows, hidden), BasicMatrix<T>(rows, hidden),
            BasicMatrix<T>(rows, hidden), BasicMatrix<T>(1, hidden),    BasicMatrix<T>(1, hidden),
            BasicMatrix<T>(1, hidden),    BasicMatrix<T>(1, hidden)};
  }

  template <typename F>
  void for_each(F&& f) {
    f(std::string("w_i"), w_i);
    f(std::string("w_f"), w_f);
    f(std::string("w_o"), w_o);
    f(std::string("w_c"), w_c);
    f(std::string("b_i"), b_i);
    f(std::string("b_f"), b_f);
    f(std::string("b_o"), b_o);
    f(std::string("b_c"), b_c);
  }
};

using LstmParams = BasicLstmParams<double>;

template <typename T>
struct BasicLstmState {
  std::vector<T> h;
  std::vector<T> c;

  static BasicLstmState zeros(std::size_t hidden) { return {std::vector<T>(hidden), std::vector<T>(hidden)}; }
};

using LstmState = BasicLstmState<double>;

/// Everything one step needs for its backward pass.
template <typename T>
struct LstmStepCache {
  std::vector<T> u;       // [h_{t-1}, x_t]
  std::vector<T> c_prev;
  std::vector<T> i, f, o, g;  // gate activations, g = candidate
  std::vector<T> c;
};

template <typename T>
T sigmoid(T x) {
  return x >= T{} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

namespace detail {

template <typename T>
void affine_row(std::span<const T> u, const BasicMatrix<T>& w, const BasicMatrix<T>& b, std::vector<T>& out) {
  const std::size_t n = w.cols();
  out.assign(b.flat().begin(), b.flat().end());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const T uk = u[k];
    if (uk == T{}) continue;
    const T* wr = w.row(k).data();
    for (std::size_t j = 0; j < n; ++j) out[j] += uk * wr[j];
  }
}

}  // namespace detail

/// I_t = σ(w_i·[h, x] + b_i), F_t, O_t likewise, C~ = tanh(w_c·[h, x] + b_c);
/// c_t = F⊙c_{t-1} + I⊙C~, h_t = O⊙tanh(c_t).
template <typename T>
BasicLstmState<T> lstm_cell_step(std::span<const T> x_t, const BasicLstmState<T>& state,
                                 const BasicLstmParams<T>& p, LstmStepCache<T>* cache = nullptr) {
  const std::size_t hidden = p.hidden();
  if (x_t.size() != p.input()) {
    throw ShapeError("lstm step: input size " + std::to_string(x_t.size()) + " != " + std::to_string(p.input()));
  }
  if (state.h.size() != hidden || state.c.size() != hidden) throw ShapeError("lstm step: state size mismatch");

  std::vector<T> u(state.h);
  u.insert(u.end(), x_t.begin(), x_t.end());

  std::vector<T> gi, gf, go, gc;
  detail::affine_row<T>(u, p.w_i, p.b_i, gi);
  detail::affine_row<T>(u, p.w_f, p.b_f, gf);
  detail::affine_row<T>(u, p.w_o, p.b_o, go);
  detail::affine_row<T>(u, p.w_c, p.b_c, gc);

  BasicLstmState<T> next{std::vector<T>(hidden), std::vector<T>(hidden)};
  for (std::size_t j = 0; j < hidden; ++j) {
    gi[j] = sigmoid(gi[j]);
    gf[j] = sigmoid(gf[j]);
    go[j] = sigmoid(go[j]);
    gc[j] = std::tanh(gc[j]);
    next.c[j] = gf[j] * state.c[j] + gi[j] * gc[j];
    next.h[j] = go[j] * std::tanh(next.c[j]);
  }
  if (cache != nullptr) {
    cache->u = std::move(u);
    cache->c_prev = state.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->o = std::move(go);
    cache->g = std::move(gc);
    cache->c = next.c;
  }
  return next;
}

/// Backward through one step. Takes dL/dh_t and dL/dc_t (from later steps),
/// accumulates parameter gradients, and writes dL/dh_{t-1}, dL/dc_{t-1} and
/// dL/dx_t.
template <typename T>
void lstm_cell_backward(const std::vector<T>& dh, const std::vector<T>& dc, const BasicLstmParams<T>& p,
                        const LstmStepCache<T>& cache, BasicLstmParams<T>& grads, std::vector<T>& dh_prev,
                        std::vector<T>& dc_prev, std::vector<T>& dx) {
  const std::size_t hidden = p.hidden();
  std::vector<T> da_i(hidden), da_f(hidden), da_o(hidden), da_c(hidden);
  dc_prev.assign(hidden, T{});
  for (std::size_t j = 0; j < hidden; ++j) {
    const T tc = std::tanh(cache.c[j]);
    const T d_o = dh[j] * tc;
    const T dct = dc[j] + dh[j] * cache.o[j] * (T{1} - tc * tc);
    const T d_i = dct * cache.g[j];
    const T d_g = dct * cache.i[j];
    const T d_f = dct * cache.c_prev[j];
    dc_prev[j] = dct * cache.f[j];
    da_i[j] = d_i * cache.i[j] * (T{1} - cache.i[j]);
    da_f[j] = d_f * cache.f[j] * (T{1} - cache.f[j]);
    da_o[j] = d_o * cache.o[j] * (T{1} - cache.o[j]);
    da_c[j] = d_g * (T{1} - cache.g[j] * cache.g[j]);
  }
  std::vector<T> du(cache.u.size(), T{});
  auto gate = [&](const BasicMatrix<T>& w, BasicMatrix<T>& gw, BasicMatrix<T>& gb, const std::vector<T>& da) {
    for (std::size_t k = 0; k < cache.u.size(); ++k) {
      const T uk = cache.u[k];
      T* gr = gw.row(k).data();
      const T* wr = w.row(k).data();
      T acc{};
      for (std::size_t j = 0; j < hidden; ++j) {
        gr[j] += uk * da[j];
        acc += wr[j] * da[j];
      }
      du[k] += acc;
    }
    for (std::size_t j = 0; j < hidden; ++j) gb(0, j) += da[j];
  };
  gate(p.w_i, grads.w_i, grads.b_i, da_i);
  gate(p.w_f, grads.w_f, grads.b_f, da_f);
  gate(p.w_o, grads.w_o, grads.b_o, da_o);
  gate(p.w_c, grads.w_c, grads.b_c, da_c);
  dh_prev.assign(du.begin(), du.begin() + static_cast<std::ptrdiff_t>(hidden));
  dx.assign(du.begin() + static_cast<std::ptrdiff_t>(hidden), du.end());
}

template <typename T>
struct BiLstmCache {
  std::vector<LstmStepCache<T>> fwd;  // fwd[t] is the step reading position t
  std::vector<LstmStepCache<T>> bwd;  // bwd[t] is the step reading position t
};

/// Runs `p` over rows of `seq` in the given order from a zero state; returns
/// the hidden state after reading each position, indexed by position.
template <typename T>
std::vector<std::vector<T>> lstm_run(const BasicMatrix<T>& seq, const BasicLstmParams<T>& p, bool reverse,
                                     std::vector<LstmStepCache<T>>* caches = nullptr) {
  const std::size_t n = seq.rows();
  std::vector<std::vector<T>> hs(n);
  if (caches != nullptr) caches->assign(n, {});
  auto state = BasicLstmState<T>::zeros(p.hidden());
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    state = lstm_cell_step(seq.row(t), state, p, caches != nullptr ? &(*caches)[t] : nullptr);
    hs[t] = state.h;
  }
  return hs;
}

/// Output t = [forward state at t, backward state at t].
template <typename T>
std::vector<std::vector<T>> bilstm_forward(const BasicMatrix<T>& seq, const BasicLstmParams<T>& fwd,
                                           const BasicLstmParams<T>& bwd, BiLstmCache<T>* cache = nullptr) {
  if (seq.rows() == 0) throw EmptySequenceError("bilstm over an empty sequence");
  const auto hf = lstm_run(seq, fwd, false, cache != nullptr ? &cache->fwd : nullptr);
  const auto hb = lstm_run(seq, bwd, true, cache != nullptr ? &cache->bwd : nullptr);
  std::vector<std::vector<T>> out(seq.rows());
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    out[t] = hf[t];
    out[t].insert(out[t].end(), hb[t].begin(), hb[t].end());
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> bilstm_forward(const std::vector<std::vector<T>>& seq, const BasicLstmParams<T>& fwd,
                                           const BasicLstmParams<T>& bwd) {
  if (seq.empty()) throw EmptySequenceError("bilstm over an empty sequence");
  BasicMatrix<T> m(seq.size(), seq.front().size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t].size() != m.cols()) throw ShapeError("bilstm: ragged input sequence");
    std::copy(seq[t].begin(), seq[t].end(), m.row(t).begin());
  }
  return bilstm_forward(m, fwd, bwd);
}

/// BPTT for one direction. `dh_out[t]` is dL/dh at position t coming from
/// outside the recurrence (may be empty vectors for "no gradient"). Adds
/// dL/dx into the rows of `dseq`.
template <typename T>
void lstm_run_backward(const std::vector<std::vector<T>>& dh_out, const BasicLstmParams<T>& p,
                       const std::vector<LstmStepCache<T>>& caches, bool reverse, BasicLstmParams<T>& grads,
                       BasicMatrix<T>& dseq) {
  const std::size_t n = caches.size();
  const std::size_t hidden = p.hidden();
  std::vector<T> dh(hidden, T{}), dc(hidden, T{}), dh_prev, dc_prev, dx;
  for (std::size_t s = n; s-- > 0;) {
    const std::size_t t = reverse ? n - 1 - s : s;
    if (!dh_out[t].empty())
      for (std::size_t j = 0; j < hidden; ++j) dh[j] += dh_out[t][j];
    lstm_cell_backward(dh, dc, p, caches[t], grads, dh_prev, dc_prev, dx);
    auto row = dseq.row(t);
    for (std::size_t j = 0; j < dx.size(); ++j) row[j] += dx[j];
    dh.swap(dh_prev);
    dc.swap(dc_prev);
  }
}

}  // namespace cmtra::nn
