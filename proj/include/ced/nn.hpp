//------------------------------------------------------------------------------
//
//   Copyright 2026 The CED Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ced/autograd.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

namespace ced {

/// Ordered named parameter registry; registration order defines the
/// checkpoint layout and the initialization stream.
template <typename Real>
struct ParamStore {
  std::vector<std::pair<std::string, Var<Real>>> items;

  Var<Real> add(const std::string &name, Tensor<Real> init) {
    auto v = Var<Real>::parameter(std::move(init));
    items.emplace_back(name, v);
    return v;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto &[name, v] : items) n += v.value().numel();
    return n;
  }
};

template <typename Real>
Tensor<Real> uniform_init(std::vector<std::size_t> shape, std::size_t fan_in,
                          Rng &rng) {
  Tensor<Real> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

/// Sinusoidal encodings for integer positions lo..hi inclusive, one row per
/// position. Works for negative (relative) offsets as well.
template <typename Real>
Tensor<Real> sinusoid_rows(std::ptrdiff_t lo, std::ptrdiff_t hi,
                           std::size_t dim) {
  const std::size_t n = static_cast<std::size_t>(hi - lo + 1);
  Tensor<Real> pe({n, dim});
  for (std::size_t r = 0; r < n; ++r) {
    const double pos = static_cast<double>(lo + static_cast<std::ptrdiff_t>(r));
    for (std::size_t j = 0; j < dim; ++j) {
      const double exponent =
          static_cast<double>(j - (j % 2)) / static_cast<double>(dim);
      const double angle = pos / std::pow(10000.0, exponent);
      pe(r, j) = static_cast<Real>(j % 2 == 0 ? std::sin(angle)
                                              : std::cos(angle));
    }
  }
  return pe;
}

template <typename Real>
Tensor<Real> sinusoid_positions(std::size_t t_len, std::size_t dim) {
  return sinusoid_rows<Real>(0, static_cast<std::ptrdiff_t>(t_len) - 1, dim);
}

/// Additive attention bias from a 0/1 validity mask: 0 where valid, a large
/// negative number where padded, shaped [1 x T] for row broadcast.
template <typename Real>
Tensor<Real> key_bias_from_mask(const Tensor<Real> &mask) {
  Tensor<Real> bias({1, mask.numel()});
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    bias(0, i) = mask[i] != Real(0) ? Real(0) : Real(-1e30);
  }
  return bias;
}

/// Per-forward runtime switches; rng drives dropout and must be seeded by the
/// caller for reproducibility.
struct RunContext {
  bool train = false;
  Rng *rng = nullptr;
};

template <typename Real>
Var<Real> maybe_dropout(const Var<Real> &x, Real rate, const RunContext &ctx) {
  if (!ctx.train || rate <= Real(0)) return x;
  return dropout(x, rate, true, *ctx.rng);
}

template <typename Real>
struct Linear {
  Var<Real> weight;  // [in x out]
  Var<Real> bias;    // [1 x out]

  Linear() = default;
  Linear(ParamStore<Real> &ps, const std::string &prefix, std::size_t in,
         std::size_t out, Rng &rng)
      : weight(ps.add(prefix + ".weight",
                      uniform_init<Real>({in, out}, in, rng))),
        bias(ps.add(prefix + ".bias", Tensor<Real>::zeros({1, out}))) {}

  Var<Real> forward(const Var<Real> &x) const {
    return add_rowvec(matmul(x, weight), bias);
  }
};

template <typename Real>
struct LayerNormModule {
  Var<Real> gamma;  // [1 x d]
  Var<Real> beta;   // [1 x d]

  LayerNormModule() = default;
  LayerNormModule(ParamStore<Real> &ps, const std::string &prefix,
                  std::size_t dim)
      : gamma(ps.add(prefix + ".gamma", Tensor<Real>::full({1, dim}, Real(1)))),
        beta(ps.add(prefix + ".beta", Tensor<Real>::zeros({1, dim}))) {}

  Var<Real> forward(const Var<Real> &x) const {
    return layer_norm(x, gamma, beta);
  }
};

/// Multi-head self-attention with relative position scoring: queries carry
/// two learned biases, one matched against content keys and one against a
/// projection of sinusoidal offset encodings.
template <typename Real>
struct RelPosSelfAttention {
  Linear<Real> wq, wk, wv, wo;
  Var<Real> w_pos;   // [d x d]
  Var<Real> u_bias;  // [1 x d], content bias
  Var<Real> v_bias;  // [1 x d], position bias
  std::size_t dim = 0, heads = 0;

  RelPosSelfAttention() = default;
  RelPosSelfAttention(ParamStore<Real> &ps, const std::string &prefix,
                      std::size_t d, std::size_t n_heads, Rng &rng)
      : wq(ps, prefix + ".wq", d, d, rng),
        wk(ps, prefix + ".wk", d, d, rng),
        wv(ps, prefix + ".wv", d, d, rng),
        wo(ps, prefix + ".wo", d, d, rng),
        w_pos(ps.add(prefix + ".w_pos", uniform_init<Real>({d, d}, d, rng))),
        u_bias(ps.add(prefix + ".u_bias", Tensor<Real>::zeros({1, d}))),
        v_bias(ps.add(prefix + ".v_bias", Tensor<Real>::zeros({1, d}))),
        dim(d),
        heads(n_heads) {}

  Var<Real> forward(const Var<Real> &x, const Tensor<Real> &mask) const {
    const std::size_t t_len = x.value().rows();
    const std::size_t dh = dim / heads;
    const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));

    auto q = wq.forward(x);
    auto k = wk.forward(x);
    auto v = wv.forward(x);

    // Offset rows cover i - j for all query/key index pairs.
    auto rel = Var<Real>::constant(sinusoid_rows<Real>(
        -(static_cast<std::ptrdiff_t>(t_len) - 1),
        static_cast<std::ptrdiff_t>(t_len) - 1, dim));
    auto rel_proj = matmul(rel, w_pos);  // [(2T-1) x d]

    auto bias = Var<Real>::constant(key_bias_from_mask(mask));

    std::vector<Var<Real>> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
      auto qh = slice_cols(q, c0, c1);
      auto kh = slice_cols(k, c0, c1);
      auto vh = slice_cols(v, c0, c1);
      auto uh = slice_cols(u_bias, c0, c1);
      auto vhb = slice_cols(v_bias, c0, c1);
      auto rh = slice_cols(rel_proj, c0, c1);

      auto content = matmul(add_rowvec(qh, uh), transpose(kh));  // [T x T]
      auto position =
          rel_gather(matmul(add_rowvec(qh, vhb), transpose(rh)), t_len);
      auto scores = scale(add(content, position), inv_sqrt);
      auto probs = softmax_rows(add_rowvec(scores, bias));
      head_outputs.push_back(matmul(probs, vh));
    }
    return wo.forward(concat_cols(head_outputs));
  }
};

/// Multi-head cross attention; queries from one stream, keys/values from the
/// other. Optionally captures post-softmax weights per head.
template <typename Real>
struct CrossAttention {
  Linear<Real> wq, wk, wv, wo;
  std::size_t dim = 0, heads = 0;

  CrossAttention() = default;
  CrossAttention(ParamStore<Real> &ps, const std::string &prefix,
                 std::size_t d, std::size_t n_heads, Rng &rng)
      : wq(ps, prefix + ".wq", d, d, rng),
        wk(ps, prefix + ".wk", d, d, rng),
        wv(ps, prefix + ".wv", d, d, rng),
        wo(ps, prefix + ".wo", d, d, rng),
        dim(d),
        heads(n_heads) {}

  Var<Real> forward(const Var<Real> &xq, const Var<Real> &xkv,
                    const Tensor<Real> &kv_mask,
                    Tensor<Real> *captured = nullptr) const {
    const std::size_t tq = xq.value().rows();
    const std::size_t tk = xkv.value().rows();
    const std::size_t dh = dim / heads;
    const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));

    auto q = wq.forward(xq);
    auto k = wk.forward(xkv);
    auto v = wv.forward(xkv);
    auto bias = Var<Real>::constant(key_bias_from_mask(kv_mask));

    if (captured) *captured = Tensor<Real>({heads, tq, tk});

    std::vector<Var<Real>> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
      auto qh = slice_cols(q, c0, c1);
      auto kh = slice_cols(k, c0, c1);
      auto vh = slice_cols(v, c0, c1);
      auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      auto probs = softmax_rows(add_rowvec(scores, bias));
      if (captured) {
        for (std::size_t i = 0; i < tq; ++i)
          for (std::size_t j = 0; j < tk; ++j)
            (*captured)(h, i, j) = probs.value()(i, j);
      }
      head_outputs.push_back(matmul(probs, vh));
    }
    return wo.forward(concat_cols(head_outputs));
  }
};

/// Conformer block: self-attention, convolution, and feed-forward sub-blocks
/// with pre-norm residuals and a closing layer norm. Padding frames are
/// blanked before the temporal convolution so they cannot leak into valid
/// frames.
template <typename Real>
struct ConformerBlock {
  LayerNormModule<Real> ln_mhsa;
  RelPosSelfAttention<Real> mhsa;
  LayerNormModule<Real> ln_conv;
  Linear<Real> conv_pw1;  // d -> 2d, gated
  Var<Real> conv_dw_w;    // [d x kernel]
  Var<Real> conv_dw_b;    // [1 x d]
  LayerNormModule<Real> ln_conv_mid;
  Linear<Real> conv_pw2;  // d -> d
  LayerNormModule<Real> ln_ffn;
  Linear<Real> ffn1;
  Linear<Real> ffn2;
  LayerNormModule<Real> ln_out;
  Real dropout_rate = Real(0);

  ConformerBlock() = default;
  ConformerBlock(ParamStore<Real> &ps, const std::string &prefix,
                 std::size_t d, std::size_t n_heads, std::size_t kernel,
                 std::size_t ff_expansion, Real p_dropout, Rng &rng)
      : ln_mhsa(ps, prefix + ".ln_mhsa", d),
        mhsa(ps, prefix + ".mhsa", d, n_heads, rng),
        ln_conv(ps, prefix + ".ln_conv", d),
        conv_pw1(ps, prefix + ".conv_pw1", d, 2 * d, rng),
        conv_dw_w(ps.add(prefix + ".conv_dw.weight",
                         uniform_init<Real>({d, kernel}, kernel, rng))),
        conv_dw_b(ps.add(prefix + ".conv_dw.bias", Tensor<Real>::zeros({1, d}))),
        ln_conv_mid(ps, prefix + ".ln_conv_mid", d),
        conv_pw2(ps, prefix + ".conv_pw2", d, d, rng),
        ln_ffn(ps, prefix + ".ln_ffn", d),
        ffn1(ps, prefix + ".ffn1", d, ff_expansion * d, rng),
        ffn2(ps, prefix + ".ffn2", ff_expansion * d, d, rng),
        ln_out(ps, prefix + ".ln_out", d),
        dropout_rate(p_dropout) {}

  Var<Real> forward(Var<Real> x, const Tensor<Real> &mask,
                    const RunContext &ctx) const {
    // self-attention sub-block
    auto a = mhsa.forward(ln_mhsa.forward(x), mask);
    x = add(x, maybe_dropout(a, dropout_rate, ctx));

    // convolution sub-block
    auto c = glu_cols(conv_pw1.forward(ln_conv.forward(x)));
    c = row_mask(c, mask);
    c = depthwise_conv1d(c, conv_dw_w, conv_dw_b);
    c = conv_pw2.forward(swish(ln_conv_mid.forward(c)));
    x = add(x, maybe_dropout(c, dropout_rate, ctx));

    // feed-forward sub-block
    auto f = maybe_dropout(swish(ffn1.forward(ln_ffn.forward(x))),
                           dropout_rate, ctx);
    f = ffn2.forward(f);
    x = add(x, maybe_dropout(f, dropout_rate, ctx));

    return ln_out.forward(x);
  }
};

/// One cross-subject transformer encoder layer (pre-norm).
template <typename Real>
struct CrossEncoderLayer {
  LayerNormModule<Real> ln_attn;
  CrossAttention<Real> attn;
  LayerNormModule<Real> ln_ffn;
  Linear<Real> ffn1;
  Linear<Real> ffn2;
  LayerNormModule<Real> ln_out;
  Real dropout_rate = Real(0);

  CrossEncoderLayer() = default;
  CrossEncoderLayer(ParamStore<Real> &ps, const std::string &prefix,
                    std::size_t d, std::size_t n_heads,
                    std::size_t ff_expansion, Real p_dropout, Rng &rng)
      : ln_attn(ps, prefix + ".ln_attn", d),
        attn(ps, prefix + ".attn", d, n_heads, rng),
        ln_ffn(ps, prefix + ".ln_ffn", d),
        ffn1(ps, prefix + ".ffn1", d, ff_expansion * d, rng),
        ffn2(ps, prefix + ".ffn2", ff_expansion * d, d, rng),
        ln_out(ps, prefix + ".ln_out", d),
        dropout_rate(p_dropout) {}

  Var<Real> forward(Var<Real> xq, const Var<Real> &xkv,
                    const Tensor<Real> &kv_mask, const RunContext &ctx,
                    Tensor<Real> *captured = nullptr) const {
    auto a = attn.forward(ln_attn.forward(xq), xkv, kv_mask, captured);
    xq = add(xq, maybe_dropout(a, dropout_rate, ctx));
    auto f = maybe_dropout(swish(ffn1.forward(ln_ffn.forward(xq))),
                           dropout_rate, ctx);
    f = ffn2.forward(f);
    xq = add(xq, maybe_dropout(f, dropout_rate, ctx));
    return ln_out.forward(xq);
  }
};

}  // namespace ced
