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
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ced/errors.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

// Define-by-run reverse-mode differentiation over Tensor<Real>. Each op
// builds a Node whose backward closure scatters the node gradient into its
// parents; Var is a cheap shared handle. All tensors are rank 2 here
// (vectors ride along as [1 x n]).

namespace ced {

template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;

  void ensure_grad() {
    if (grad.numel() != value.numel()) {
      grad = Tensor<Real>::zeros(value.shape());
    }
  }
};

template <typename Real>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<Real> &value() const { return node_->value; }
  Tensor<Real> &mutable_value() { return node_->value; }
  Tensor<Real> &grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  std::shared_ptr<Node<Real>> node() const { return node_; }

  void zero_grad() {
    if (node_->grad.numel() != 0) node_->grad.fill(Real(0));
  }

 private:
  std::shared_ptr<Node<Real>> node_;
};

/// Graph construction can be suspended for pure inference.
inline bool &grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename Real>
Var<Real> make_op(Tensor<Real> value, std::vector<Var<Real>> parents,
                  std::function<void(Node<Real> &)> backward) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled_flag()) {
    for (const auto &p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto &p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Var<Real>(std::move(n));
}

// Raw matrix kernels, row-major, ikj loop order.
template <typename Real>
void gemm(const Tensor<Real> &a, const Tensor<Real> &b, Tensor<Real> &out,
          bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (!accumulate) out.fill(Real(0));
  const Real *pa = a.data();
  const Real *pb = b.data();
  Real *po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const Real av = pa[i * k + l];
      if (av == Real(0)) continue;
      const Real *brow = pb + l * n;
      Real *orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a^T * b, a is [k x m], b is [k x n], out is [m x n].
template <typename Real>
void gemm_at_b(const Tensor<Real> &a, const Tensor<Real> &b,
               Tensor<Real> &out) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const Real *pa = a.data();
  const Real *pb = b.data();
  Real *po = out.data();
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real av = pa[l * m + i];
      if (av == Real(0)) continue;
      const Real *brow = pb + l * n;
      Real *orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a * b^T, a is [m x k], b is [n x k], out is [m x n].
template <typename Real>
void gemm_a_bt(const Tensor<Real> &a, const Tensor<Real> &b,
               Tensor<Real> &out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const Real *pa = a.data();
  const Real *pb = b.data();
  Real *po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Real *arow = pa + i * k;
      const Real *brow = pb + j * k;
      Real acc = Real(0);
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      po[i * n + j] += acc;
    }
  }
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar loss. Parameter gradients
/// accumulate across calls until zeroed by the caller.
template <typename Real>
void backward(const Var<Real> &loss) {
  if (loss.value().numel() != 1) {
    throw NumericError("backward: loss must be a scalar");
  }
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order topological sort.
  std::vector<Node<Real> *> topo;
  std::unordered_set<Node<Real> *> visited;
  std::vector<std::pair<Node<Real> *, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto &[node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<Real> *parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = Real(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<Real> *node = *it;
    if (node->backward_fn) {
      for (auto &p : node->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      node->backward_fn(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> matmul(const Var<Real> &a, const Var<Real> &b) {
  if (a.value().cols() != b.value().rows()) {
    throw NumericError("matmul: inner dimensions disagree");
  }
  Tensor<Real> out({a.value().rows(), b.value().cols()});
  detail::gemm(a.value(), b.value(), out, false);
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      std::move(out), {a, b}, [an, bn](Node<Real> &self) {
        if (an->requires_grad) detail::gemm_a_bt(self.grad, bn->value, an->grad);
        if (bn->requires_grad) detail::gemm_at_b(an->value, self.grad, bn->grad);
      });
}

template <typename Real>
Var<Real> add(const Var<Real> &a, const Var<Real> &b) {
  if (!a.value().same_shape(b.value())) {
    throw NumericError("add: shape mismatch");
  }
  Tensor<Real> out = a.value();
  const Real *pb = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      std::move(out), {a, b}, [an, bn](Node<Real> &self) {
        if (an->requires_grad) {
          for (std::size_t i = 0; i < self.grad.numel(); ++i)
            an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          for (std::size_t i = 0; i < self.grad.numel(); ++i)
            bn->grad[i] += self.grad[i];
        }
      });
}

/// a[m x n] + row vector b[1 x n] broadcast over rows.
template <typename Real>
Var<Real> add_rowvec(const Var<Real> &a, const Var<Real> &b) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (b.value().numel() != n) {
    throw NumericError("add_rowvec: width mismatch");
  }
  Tensor<Real> out = a.value();
  const Real *pb = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) += pb[j];
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      std::move(out), {a, b}, [an, bn, m, n](Node<Real> &self) {
        if (an->requires_grad) {
          for (std::size_t i = 0; i < self.grad.numel(); ++i)
            an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              bn->grad[j] += self.grad(i, j);
        }
      });
}

template <typename Real>
Var<Real> scale(const Var<Real> &a, Real c) {
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  auto an = a.node();
  return detail::make_op<Real>(std::move(out), {a}, [an, c](Node<Real> &self) {
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      an->grad[i] += c * self.grad[i];
  });
}

template <typename Real>
Var<Real> transpose(const Var<Real> &a) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor<Real> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a.value()(i, j);
  auto an = a.node();
  return detail::make_op<Real>(
      std::move(out), {a}, [an, m, n](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            an->grad(i, j) += self.grad(j, i);
      });
}

template <typename Real>
Var<Real> slice_cols(const Var<Real> &a, std::size_t c0, std::size_t c1) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (c0 >= c1 || c1 > n) throw NumericError("slice_cols: bad range");
  Tensor<Real> out({m, c1 - c0});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a.value()(i, j);
  auto an = a.node();
  return detail::make_op<Real>(
      std::move(out), {a}, [an, m, c0, c1](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = c0; j < c1; ++j)
            an->grad(i, j) += self.grad(i, j - c0);
      });
}

template <typename Real>
Var<Real> concat_cols(const std::vector<Var<Real>> &parts) {
  if (parts.empty()) throw NumericError("concat_cols: empty input");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto &p : parts) {
    if (p.value().rows() != m) throw NumericError("concat_cols: row mismatch");
    total += p.value().cols();
  }
  Tensor<Real> out({m, total});
  std::size_t off = 0;
  for (const auto &p : parts) {
    const std::size_t n = p.value().cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, off + j) = p.value()(i, j);
    off += n;
  }
  std::vector<std::shared_ptr<Node<Real>>> nodes;
  std::vector<std::size_t> widths;
  for (const auto &p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.value().cols());
  }
  return detail::make_op<Real>(
      std::move(out), parts, [nodes, widths, m](Node<Real> &self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          if (nodes[k]->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                nodes[k]->grad(i, j) += self.grad(i, off + j);
          }
          off += widths[k];
        }
      });
}

/// Multiplies each row by mask[t] (0 or 1); used to blank padding frames.
template <typename Real>
Var<Real> row_mask(const Var<Real> &a, const Tensor<Real> &mask) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (mask.numel() != m) throw NumericError("row_mask: length mismatch");
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    const Real mv = mask[i];
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= mv;
  }
  auto an = a.node();
  return detail::make_op<Real>(
      std::move(out), {a}, [an, mask, m, n](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i) {
          const Real mv = mask[i];
          for (std::size_t j = 0; j < n; ++j)
            an->grad(i, j) += mv * self.grad(i, j);
        }
      });
}

template <typename Real>
Var<Real> layer_norm(const Var<Real> &x, const Var<Real> &gamma,
                     const Var<Real> &beta, Real eps = Real(1e-5)) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (gamma.value().numel() != n || beta.value().numel() != n) {
    throw NumericError("layer_norm: parameter width mismatch");
  }
  Tensor<Real> out({m, n});
  Tensor<Real> xhat({m, n});
  std::vector<Real> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real mean = Real(0);
    for (std::size_t j = 0; j < n; ++j) mean += x.value()(i, j);
    mean /= static_cast<Real>(n);
    Real var = Real(0);
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = x.value()(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<Real>(n);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const Real xh = (x.value()(i, j) - mean) * is;
      xhat(i, j) = xh;
      out(i, j) = gamma.value()[j] * xh + beta.value()[j];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return detail::make_op<Real>(
      std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat, inv_std, m, n](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i) {
          Real mean_h = Real(0), mean_hx = Real(0);
          for (std::size_t j = 0; j < n; ++j) {
            const Real h = gn->value[j] * self.grad(i, j);
            mean_h += h;
            mean_hx += h * xhat(i, j);
          }
          mean_h /= static_cast<Real>(n);
          mean_hx /= static_cast<Real>(n);
          if (xn->requires_grad) {
            for (std::size_t j = 0; j < n; ++j) {
              const Real h = gn->value[j] * self.grad(i, j);
              xn->grad(i, j) +=
                  inv_std[i] * (h - mean_h - xhat(i, j) * mean_hx);
            }
          }
          if (gn->requires_grad) {
            for (std::size_t j = 0; j < n; ++j)
              gn->grad[j] += self.grad(i, j) * xhat(i, j);
          }
          if (bn->requires_grad) {
            for (std::size_t j = 0; j < n; ++j) bn->grad[j] += self.grad(i, j);
          }
        }
      });
}

template <typename Real>
Var<Real> softmax_rows(const Var<Real> &a) {
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = a.value()(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.value()(i, j));
    Real sum = Real(0);
    for (std::size_t j = 0; j < n; ++j) {
      const Real e = std::exp(a.value()(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= sum;
  }
  auto an = a.node();
  Tensor<Real> saved = out;
  return detail::make_op<Real>(
      std::move(out), {a}, [an, saved, m, n](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i) {
          Real dot = Real(0);
          for (std::size_t j = 0; j < n; ++j)
            dot += self.grad(i, j) * saved(i, j);
          for (std::size_t j = 0; j < n; ++j)
            an->grad(i, j) += saved(i, j) * (self.grad(i, j) - dot);
        }
      });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real> &a) {
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = Real(1) / (Real(1) + std::exp(-out[i]));
  auto an = a.node();
  Tensor<Real> saved = out;
  return detail::make_op<Real>(std::move(out), {a},
                               [an, saved](Node<Real> &self) {
                                 for (std::size_t i = 0; i < self.grad.numel();
                                      ++i) {
                                   const Real s = saved[i];
                                   an->grad[i] +=
                                       self.grad[i] * s * (Real(1) - s);
                                 }
                               });
}

/// x * sigmoid(x); smooth activation used throughout the encoders.
template <typename Real>
Var<Real> swish(const Var<Real> &a) {
  Tensor<Real> out = a.value();
  Tensor<Real> sig = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const Real s = Real(1) / (Real(1) + std::exp(-out[i]));
    sig[i] = s;
    out[i] *= s;
  }
  auto an = a.node();
  return detail::make_op<Real>(
      std::move(out), {a}, [an, sig](Node<Real> &self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
          const Real s = sig[i];
          const Real x = an->value[i];
          an->grad[i] += self.grad[i] * (s + x * s * (Real(1) - s));
        }
      });
}

/// Gated linear unit over columns: [A | B] -> A * sigmoid(B).
template <typename Real>
Var<Real> glu_cols(const Var<Real> &a) {
  const std::size_t m = a.value().rows(), n2 = a.value().cols();
  if (n2 % 2 != 0) throw NumericError("glu_cols: odd width");
  const std::size_t n = n2 / 2;
  Tensor<Real> out({m, n});
  Tensor<Real> sig({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Real s = Real(1) / (Real(1) + std::exp(-a.value()(i, n + j)));
      sig(i, j) = s;
      out(i, j) = a.value()(i, j) * s;
    }
  }
  auto an = a.node();
  return detail::make_op<Real>(
      std::move(out), {a}, [an, sig, m, n](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const Real s = sig(i, j);
            const Real g = self.grad(i, j);
            an->grad(i, j) += g * s;
            an->grad(i, n + j) +=
                g * an->value(i, j) * s * (Real(1) - s);
          }
        }
      });
}

/// Per-channel 1-D convolution along rows with zero padding (same length).
/// x is [T x C], w is [C x K] with K odd, b is [1 x C].
template <typename Real>
Var<Real> depthwise_conv1d(const Var<Real> &x, const Var<Real> &w,
                           const Var<Real> &b) {
  const std::size_t t_len = x.value().rows(), c = x.value().cols();
  const std::size_t k = w.value().cols();
  if (w.value().rows() != c || b.value().numel() != c || k % 2 == 0) {
    throw NumericError("depthwise_conv1d: bad kernel shape");
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<Real> out({t_len, c});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real acc = b.value()[ch];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) -
            half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
        acc += w.value()(ch, kk) *
               x.value()(static_cast<std::size_t>(src), ch);
      }
      out(t, ch) = acc;
    }
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      std::move(out), {x, w, b},
      [xn, wn, bn, t_len, c, k, half](Node<Real> &self) {
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const Real g = self.grad(t, ch);
            if (g == Real(0)) continue;
            if (bn->requires_grad) bn->grad[ch] += g;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                         static_cast<std::ptrdiff_t>(kk) -
                                         half;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len))
                continue;
              const auto s = static_cast<std::size_t>(src);
              if (wn->requires_grad)
                wn->grad(ch, kk) += g * xn->value(s, ch);
              if (xn->requires_grad)
                xn->grad(s, ch) += g * wn->value(ch, kk);
            }
          }
        }
      });
}

/// Mean over rows with mask[t] == 1; yields [1 x C].
template <typename Real>
Var<Real> mean_pool_rows(const Var<Real> &x, const Tensor<Real> &mask) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (mask.numel() != m) throw NumericError("mean_pool_rows: length mismatch");
  Real count = Real(0);
  for (std::size_t i = 0; i < m; ++i) count += mask[i];
  if (count <= Real(0)) throw NumericError("mean_pool_rows: empty mask");
  Tensor<Real> out({1, n});
  for (std::size_t i = 0; i < m; ++i) {
    if (mask[i] == Real(0)) continue;
    for (std::size_t j = 0; j < n; ++j) out(0, j) += x.value()(i, j);
  }
  for (std::size_t j = 0; j < n; ++j) out(0, j) /= count;
  auto xn = x.node();
  return detail::make_op<Real>(
      std::move(out), {x}, [xn, mask, m, n, count](Node<Real> &self) {
        for (std::size_t i = 0; i < m; ++i) {
          if (mask[i] == Real(0)) continue;
          for (std::size_t j = 0; j < n; ++j)
            xn->grad(i, j) += self.grad(0, j) / count;
        }
      });
}

/// Extracts one row as [1 x C].
template <typename Real>
Var<Real> take_row(const Var<Real> &x, std::size_t row) {
  const std::size_t n = x.value().cols();
  if (row >= x.value().rows()) throw NumericError("take_row: out of range");
  Tensor<Real> out({1, n});
  for (std::size_t j = 0; j < n; ++j) out(0, j) = x.value()(row, j);
  auto xn = x.node();
  return detail::make_op<Real>(std::move(out), {x},
                               [xn, row, n](Node<Real> &self) {
                                 for (std::size_t j = 0; j < n; ++j)
                                   xn->grad(row, j) += self.grad(0, j);
                               });
}

/// Relative-position gather: p is [Tq x (Tq + Tk - 1)] scored against offset
/// rows; out[i][j] = p[i][i - j + Tk - 1].
template <typename Real>
Var<Real> rel_gather(const Var<Real> &p, std::size_t t_keys) {
  const std::size_t tq = p.value().rows();
  const std::size_t width = p.value().cols();
  if (width != tq + t_keys - 1) throw NumericError("rel_gather: bad width");
  Tensor<Real> out({tq, t_keys});
  for (std::size_t i = 0; i < tq; ++i)
    for (std::size_t j = 0; j < t_keys; ++j)
      out(i, j) = p.value()(i, i - j + t_keys - 1);
  auto pn = p.node();
  return detail::make_op<Real>(
      std::move(out), {p}, [pn, tq, t_keys](Node<Real> &self) {
        for (std::size_t i = 0; i < tq; ++i)
          for (std::size_t j = 0; j < t_keys; ++j)
            pn->grad(i, i - j + t_keys - 1) += self.grad(i, j);
      });
}

/// Stacks scalar [1 x 1] vars into an [n x 1] column.
template <typename Real>
Var<Real> stack_scalars(const std::vector<Var<Real>> &scalars) {
  if (scalars.empty()) throw NumericError("stack_scalars: empty input");
  Tensor<Real> out({scalars.size(), 1});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().numel() != 1)
      throw NumericError("stack_scalars: non-scalar input");
    out(i, 0) = scalars[i].value()[0];
  }
  std::vector<std::shared_ptr<Node<Real>>> nodes;
  for (const auto &s : scalars) nodes.push_back(s.node());
  return detail::make_op<Real>(std::move(out), scalars,
                               [nodes](Node<Real> &self) {
                                 for (std::size_t i = 0; i < nodes.size(); ++i)
                                   if (nodes[i]->requires_grad)
                                     nodes[i]->grad[0] += self.grad(i, 0);
                               });
}

/// Mean binary cross entropy with logits over an [n x 1] logit column.
/// Uses the overflow-safe form max(x,0) - x*y + log(1 + exp(-|x|)).
template <typename Real>
Var<Real> bce_with_logits_mean(const Var<Real> &logits,
                               const std::vector<Real> &labels) {
  const std::size_t n = logits.value().rows();
  if (logits.value().cols() != 1 || labels.size() != n) {
    throw NumericError("bce_with_logits_mean: shape mismatch");
  }
  Real total = Real(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Real x = logits.value()(i, 0);
    const Real y = labels[i];
    total += std::max(x, Real(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor<Real> out({1, 1});
  out[0] = total / static_cast<Real>(n);
  auto ln = logits.node();
  return detail::make_op<Real>(
      std::move(out), {logits}, [ln, labels, n](Node<Real> &self) {
        const Real g = self.grad[0] / static_cast<Real>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const Real x = ln->value(i, 0);
          const Real s = Real(1) / (Real(1) + std::exp(-x));
          ln->grad(i, 0) += g * (s - labels[i]);
        }
      });
}

/// Inverted-dropout; draws one Bernoulli mask per element when training.
template <typename Real>
Var<Real> dropout(const Var<Real> &a, Real p, bool train, Rng &rng) {
  if (!train || p <= Real(0)) return a;
  if (p >= Real(1)) throw NumericError("dropout: rate must be < 1");
  const Real keep = Real(1) - p;
  Tensor<Real> mask(a.value().shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask[i] = rng.uniform() < static_cast<double>(p) ? Real(0) : Real(1) / keep;
  }
  Tensor<Real> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  auto an = a.node();
  return detail::make_op<Real>(std::move(out), {a},
                               [an, mask](Node<Real> &self) {
                                 for (std::size_t i = 0; i < self.grad.numel();
                                      ++i)
                                   an->grad[i] += mask[i] * self.grad[i];
                               });
}

}  // namespace ced
