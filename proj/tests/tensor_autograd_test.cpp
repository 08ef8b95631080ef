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
//
// Tensor, RNG, and autograd unit tests. Every differentiable op is checked
// against central finite differences through a random rank-1 readout, so a
// transposed or misindexed backward rule cannot cancel out.
//
//------------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "ced/autograd.hpp"
#include "ced/errors.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

namespace {

using ced::backward;
using ced::Rng;
using ced::TensorD;
using VarD = ced::Var<double>;

TensorD random_tensor(Rng &rng, std::vector<std::size_t> shape,
                      double scl = 1.0) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
  return t;
}

/// Contracts an [m x n] output to a scalar via fixed random row/column
/// weights: loss = u * Y * v.
VarD scalarize(const VarD &y, const TensorD &u, const TensorD &v) {
  return matmul(matmul(VarD::constant(u), y), VarD::constant(v));
}

/// Central finite differences on every element of every leaf, against the
/// analytic gradient from one backward pass. `build` must rebuild the loss
/// graph from the current leaf values on each call.
void expect_gradcheck(std::vector<VarD> leaves,
                      const std::function<VarD()> &build, double step = 1e-5,
                      double tol = 1e-4) {
  for (auto &leaf : leaves) leaf.zero_grad();
  VarD loss = build();
  ASSERT_EQ(loss.value().numel(), 1u);
  backward(loss);

  std::vector<TensorD> analytic;
  analytic.reserve(leaves.size());
  for (auto &leaf : leaves) analytic.push_back(leaf.grad());

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    TensorD &val = leaves[li].mutable_value();
    for (std::size_t k = 0; k < val.numel(); ++k) {
      const double orig = val[k];
      double up, down;
      {
        ced::NoGradGuard guard;
        val[k] = orig + step;
        up = build().value()[0];
        val[k] = orig - step;
        down = build().value()[0];
        val[k] = orig;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      EXPECT_LT(std::abs(a - numeric) / denom, tol)
          << "leaf " << li << " element " << k << " analytic " << a
          << " numeric " << numeric;
    }
  }
}

//------------------------------------------------------------------------------
// Tensor
//------------------------------------------------------------------------------

TEST(Tensor, ShapeAndLayout) {
  TensorD t({2, 3});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.numel(), 6u);
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], 0.0);

  t(1, 2) = 7.0;
  EXPECT_EQ(t[5], 7.0);  // row-major

  TensorD u({2, 3, 4});
  u(1, 2, 3) = 9.0;
  EXPECT_EQ(u[23], 9.0);
}

TEST(Tensor, ConstructorsAndEquality) {
  TensorD a = TensorD::full({2, 2}, 3.5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i], 3.5);

  TensorD b({2, 2}, {3.5, 3.5, 3.5, 3.5});
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a.same_shape(b));
  EXPECT_THROW(TensorD({2, 2}, {1.0, 2.0}), ced::DataError);

  b(0, 1) = -1.0;
  EXPECT_FALSE(a == b);
}

TEST(Tensor, AllFinite) {
  TensorD t({1, 3}, {1.0, 2.0, 3.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

//------------------------------------------------------------------------------
// RNG
//------------------------------------------------------------------------------

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double va = a.uniform();
    EXPECT_EQ(va, b.uniform());
    if (va != c.uniform()) any_diff = true;
    EXPECT_GE(va, 0.0);
    EXPECT_LT(va, 1.0);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Rng, UniformRangeAndIndex) {
  Rng rng(7);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 3000; ++i) {
    const double v = rng.uniform(-2.0, 5.0);
    EXPECT_GE(v, -2.0);
    EXPECT_LT(v, 5.0);
    ++counts[rng.uniform_index(5)];
  }
  EXPECT_EQ(counts.size(), 5u);
  for (const auto &[idx, n] : counts) {
    EXPECT_LT(idx, 5u);
    EXPECT_GT(n, 400);  // roughly uniform
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(Rng, PermutationAndShuffle) {
  Rng rng(5);
  std::vector<std::size_t> perm = rng.permutation(20);
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);

  std::vector<int> xs{1, 2, 2, 3, 5, 8};
  std::vector<int> ys = xs;
  rng.shuffle(ys);
  std::sort(ys.begin(), ys.end());
  EXPECT_EQ(xs, ys);
}

TEST(Rng, MixSeedSeparatesStreams) {
  const std::uint64_t base = 99;
  EXPECT_NE(ced::mix_seed(base, {"alpha"}), ced::mix_seed(base, {"beta"}));
  EXPECT_NE(ced::mix_seed(base, "tag", 0, 0), ced::mix_seed(base, "tag", 1, 0));
  EXPECT_NE(ced::mix_seed(base, "tag", 0, 0), ced::mix_seed(base, "tag", 0, 1));
  EXPECT_EQ(ced::mix_seed(base, "tag", 2, 3), ced::mix_seed(base, "tag", 2, 3));
}

//------------------------------------------------------------------------------
// Autograd plumbing
//------------------------------------------------------------------------------

TEST(Autograd, BackwardRequiresScalar) {
  VarD a = VarD::parameter(TensorD::full({2, 2}, 1.0));
  VarD y = sigmoid(a);
  EXPECT_THROW(backward(y), ced::NumericError);
}

TEST(Autograd, NoGradGuardSuspendsGraph) {
  VarD a = VarD::parameter(TensorD::full({1, 2}, 0.5));
  {
    ced::NoGradGuard guard;
    VarD y = sigmoid(a);
    EXPECT_FALSE(y.requires_grad());
  }
  VarD y = sigmoid(a);
  EXPECT_TRUE(y.requires_grad());
}

TEST(Autograd, GradAccumulatesUntilZeroed) {
  VarD a = VarD::parameter(TensorD({1, 1}, {2.0}));
  TensorD one({1, 1}, {1.0});

  VarD y1 = scalarize(sigmoid(a), one, one);
  backward(y1);
  const double g1 = a.grad()[0];
  VarD y2 = scalarize(sigmoid(a), one, one);
  backward(y2);
  EXPECT_NEAR(a.grad()[0], 2.0 * g1, 1e-12);

  a.zero_grad();
  EXPECT_EQ(a.grad()[0], 0.0);
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  VarD a = VarD::parameter(TensorD({1, 2}, {1.0, -1.0}));
  VarD c = VarD::constant(TensorD({1, 2}, {3.0, 4.0}));
  VarD y = scalarize(add(a, c), TensorD({1, 1}, {1.0}),
                     TensorD({2, 1}, {1.0, 1.0}));
  backward(y);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_NEAR(a.grad()[0], 1.0, 1e-12);
}

//------------------------------------------------------------------------------
// Per-op gradient checks
//------------------------------------------------------------------------------

TEST(Gradcheck, MatmulBothSides) {
  Rng rng(101);
  VarD a = VarD::parameter(random_tensor(rng, {3, 4}));
  VarD b = VarD::parameter(random_tensor(rng, {4, 5}));
  const TensorD u = random_tensor(rng, {1, 3});
  const TensorD v = random_tensor(rng, {5, 1});
  expect_gradcheck({a, b}, [&] { return scalarize(matmul(a, b), u, v); });
  EXPECT_THROW(matmul(a, a), ced::NumericError);
}

TEST(Gradcheck, AddAndRowvec) {
  Rng rng(102);
  VarD a = VarD::parameter(random_tensor(rng, {3, 4}));
  VarD b = VarD::parameter(random_tensor(rng, {3, 4}));
  VarD r = VarD::parameter(random_tensor(rng, {1, 4}));
  const TensorD u = random_tensor(rng, {1, 3});
  const TensorD v = random_tensor(rng, {4, 1});
  expect_gradcheck({a, b, r}, [&] {
    return scalarize(add_rowvec(add(a, b), r), u, v);
  });
  EXPECT_THROW(add(a, r), ced::NumericError);
}

TEST(Gradcheck, ScaleTransposeSlice) {
  Rng rng(103);
  VarD a = VarD::parameter(random_tensor(rng, {3, 8}));
  const TensorD u = random_tensor(rng, {1, 4});
  const TensorD v = random_tensor(rng, {3, 1});
  expect_gradcheck({a}, [&] {
    return scalarize(transpose(scale(slice_cols(a, 2, 6), 0.7)), u, v);
  });
  EXPECT_THROW(slice_cols(a, 5, 5), ced::NumericError);
  EXPECT_THROW(slice_cols(a, 2, 9), ced::NumericError);
}

TEST(Gradcheck, ConcatCols) {
  Rng rng(104);
  VarD a = VarD::parameter(random_tensor(rng, {3, 4}));
  VarD b = VarD::parameter(random_tensor(rng, {3, 2}));
  const TensorD u = random_tensor(rng, {1, 3});
  const TensorD v = random_tensor(rng, {6, 1});
  expect_gradcheck({a, b}, [&] {
    return scalarize(ced::concat_cols<double>({a, b}), u, v);
  });
}

TEST(Gradcheck, SliceConcatRoundTrip) {
  Rng rng(105);
  VarD a = VarD::parameter(random_tensor(rng, {4, 6}));
  VarD y = ced::concat_cols<double>({slice_cols(a, 0, 2), slice_cols(a, 2, 6)});
  EXPECT_TRUE(y.value() == a.value());
}

TEST(Gradcheck, RowMaskZeroesRowsAndGrads) {
  Rng rng(106);
  VarD a = VarD::parameter(random_tensor(rng, {4, 3}));
  TensorD mask({4}, {1.0, 0.0, 1.0, 1.0});
  const TensorD u = random_tensor(rng, {1, 4});
  const TensorD v = random_tensor(rng, {3, 1});
  expect_gradcheck({a}, [&] { return scalarize(row_mask(a, mask), u, v); });

  a.zero_grad();
  VarD y = scalarize(row_mask(a, mask), u, v);
  backward(y);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a.grad()(1, j), 0.0);
  VarD m = row_mask(a, mask);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m.value()(1, j), 0.0);
}

TEST(Gradcheck, LayerNorm) {
  Rng rng(107);
  VarD x = VarD::parameter(random_tensor(rng, {3, 6}, 2.0));
  VarD gamma = VarD::parameter(random_tensor(rng, {1, 6}));
  VarD beta = VarD::parameter(random_tensor(rng, {1, 6}));
  const TensorD u = random_tensor(rng, {1, 3});
  const TensorD v = random_tensor(rng, {6, 1});
  expect_gradcheck({x, gamma, beta}, [&] {
    return scalarize(layer_norm(x, gamma, beta), u, v);
  });
}

TEST(LayerNorm, NormalizesRows) {
  Rng rng(108);
  VarD x = VarD::parameter(random_tensor(rng, {5, 16}, 3.0));
  VarD gamma = VarD::constant(TensorD::full({1, 16}, 1.0));
  VarD beta = VarD::constant(TensorD::zeros({1, 16}));
  VarD y = layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.value()(i, j);
    mean /= 16.0;
    for (std::size_t j = 0; j < 16; ++j) {
      const double d = y.value()(i, j) - mean;
      var += d * d;
    }
    var /= 16.0;
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-3);  // eps shrinks the variance slightly
  }
}

TEST(Gradcheck, SoftmaxRows) {
  Rng rng(109);
  VarD a = VarD::parameter(random_tensor(rng, {3, 5}, 1.5));
  const TensorD u = random_tensor(rng, {1, 3});
  const TensorD v = random_tensor(rng, {5, 1});
  expect_gradcheck({a}, [&] { return scalarize(softmax_rows(a), u, v); });
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(110);
  VarD a = VarD::parameter(random_tensor(rng, {4, 7}, 2.0));
  VarD y = softmax_rows(a);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      sum += y.value()(i, j);
      EXPECT_GT(y.value()(i, j), 0.0);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }

  TensorD shifted = a.value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += 123.0;
  VarD y2 = softmax_rows(VarD::constant(shifted));
  for (std::size_t k = 0; k < y.value().numel(); ++k)
    EXPECT_NEAR(y.value()[k], y2.value()[k], 1e-12);
}

TEST(Gradcheck, SigmoidSwishGlu) {
  Rng rng(111);
  VarD a = VarD::parameter(random_tensor(rng, {2, 4}, 1.5));
  VarD g = VarD::parameter(random_tensor(rng, {3, 8}, 1.5));
  const TensorD u2 = random_tensor(rng, {1, 2});
  const TensorD v4 = random_tensor(rng, {4, 1});
  const TensorD u3 = random_tensor(rng, {1, 3});
  expect_gradcheck({a}, [&] { return scalarize(sigmoid(a), u2, v4); });
  expect_gradcheck({a}, [&] { return scalarize(swish(a), u2, v4); });
  expect_gradcheck({g}, [&] { return scalarize(glu_cols(g), u3, v4); });

  VarD odd = VarD::parameter(random_tensor(rng, {2, 5}));
  EXPECT_THROW(glu_cols(odd), ced::NumericError);
}

TEST(Glu, GatesFirstHalfBySecond) {
  TensorD in({1, 4}, {2.0, -3.0, 0.0, 100.0});
  VarD y = glu_cols(VarD::constant(in));
  EXPECT_NEAR(y.value()(0, 0), 2.0 * 0.5, 1e-12);   // sigmoid(0) = 0.5
  EXPECT_NEAR(y.value()(0, 1), -3.0 * 1.0, 1e-12);  // sigmoid(100) ~ 1
}

TEST(Gradcheck, DepthwiseConv1d) {
  Rng rng(112);
  VarD x = VarD::parameter(random_tensor(rng, {7, 3}));
  VarD w = VarD::parameter(random_tensor(rng, {3, 5}));
  VarD b = VarD::parameter(random_tensor(rng, {1, 3}));
  const TensorD u = random_tensor(rng, {1, 7});
  const TensorD v = random_tensor(rng, {3, 1});
  expect_gradcheck({x, w, b}, [&] {
    return scalarize(depthwise_conv1d(x, w, b), u, v);
  });

  VarD weven = VarD::parameter(random_tensor(rng, {3, 4}));
  EXPECT_THROW(depthwise_conv1d(x, weven, b), ced::NumericError);
}

TEST(DepthwiseConv, MatchesDirectSum) {
  Rng rng(113);
  const std::size_t t_len = 6, c = 2, k = 3;
  TensorD x = random_tensor(rng, {t_len, c});
  TensorD w = random_tensor(rng, {c, k});
  TensorD b = random_tensor(rng, {1, c});
  VarD y = depthwise_conv1d(VarD::constant(x), VarD::constant(w),
                            VarD::constant(b));
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double want = b(0, ch);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const long src = static_cast<long>(t) + static_cast<long>(kk) - 1;
        if (src < 0 || src >= static_cast<long>(t_len)) continue;
        want += w(ch, kk) * x(static_cast<std::size_t>(src), ch);
      }
      EXPECT_NEAR(y.value()(t, ch), want, 1e-12);
    }
  }
}

TEST(Gradcheck, MeanPoolRows) {
  Rng rng(114);
  VarD x = VarD::parameter(random_tensor(rng, {5, 4}));
  TensorD mask({5}, {1.0, 1.0, 1.0, 0.0, 0.0});
  const TensorD u = random_tensor(rng, {1, 1});
  const TensorD v = random_tensor(rng, {4, 1});
  expect_gradcheck({x}, [&] { return scalarize(mean_pool_rows(x, mask), u, v); });

  VarD pooled = mean_pool_rows(x, mask);
  for (std::size_t j = 0; j < 4; ++j) {
    const double want =
        (x.value()(0, j) + x.value()(1, j) + x.value()(2, j)) / 3.0;
    EXPECT_NEAR(pooled.value()(0, j), want, 1e-12);
  }
  EXPECT_THROW(mean_pool_rows(x, TensorD::zeros({5})), ced::NumericError);
}

TEST(Gradcheck, TakeRow) {
  Rng rng(115);
  VarD x = VarD::parameter(random_tensor(rng, {4, 3}));
  const TensorD u = random_tensor(rng, {1, 1});
  const TensorD v = random_tensor(rng, {3, 1});
  expect_gradcheck({x}, [&] { return scalarize(take_row(x, 2), u, v); });
  EXPECT_THROW(take_row(x, 4), ced::NumericError);
}

TEST(Gradcheck, RelGather) {
  Rng rng(116);
  const std::size_t tq = 3, tk = 4;
  VarD p = VarD::parameter(random_tensor(rng, {tq, tq + tk - 1}));
  const TensorD u = random_tensor(rng, {1, tq});
  const TensorD v = random_tensor(rng, {tk, 1});
  expect_gradcheck({p}, [&] { return scalarize(rel_gather(p, tk), u, v); });
  EXPECT_THROW(rel_gather(p, tk + 1), ced::NumericError);
}

TEST(RelGather, IndexesByOffset) {
  const std::size_t tq = 3, tk = 4;
  TensorD p({tq, tq + tk - 1});
  for (std::size_t i = 0; i < tq; ++i)
    for (std::size_t k = 0; k < tq + tk - 1; ++k) p(i, k) = 100.0 * i + k;
  VarD y = rel_gather(VarD::constant(p), tk);
  for (std::size_t i = 0; i < tq; ++i)
    for (std::size_t j = 0; j < tk; ++j)
      EXPECT_EQ(y.value()(i, j), 100.0 * i + (i - j + tk - 1));
}

TEST(Gradcheck, StackScalarsAndBce) {
  Rng rng(117);
  std::vector<VarD> scalars;
  for (int i = 0; i < 3; ++i)
    scalars.push_back(VarD::parameter(random_tensor(rng, {1, 1}, 1.5)));
  const std::vector<double> labels{1.0, 0.0, 1.0};
  expect_gradcheck(scalars, [&] {
    return bce_with_logits_mean(stack_scalars(scalars), labels);
  });
}

TEST(Bce, MatchesDirectFormula) {
  // The naive -log(sigmoid) oracle is only trustworthy away from saturation,
  // so random trials stay within |x| <= 10.
  Rng rng(118);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    std::vector<VarD> logits;
    std::vector<double> labels;
    long double want = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-10.0, 10.0);
      const double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
      logits.push_back(VarD::constant(TensorD({1, 1}, {x})));
      labels.push_back(y);
      const long double sig = 1.0L / (1.0L + std::exp((long double)-x));
      want += y == 1.0 ? -std::log(sig) : -std::log(1.0L - sig);
    }
    want /= n;
    VarD loss = bce_with_logits_mean(stack_scalars(logits), labels);
    EXPECT_NEAR(loss.value()[0], static_cast<double>(want), 1e-9);
  }
}

TEST(Bce, SaturatedLogitsStayFinite) {
  auto single = [](double x, double y) {
    std::vector<VarD> l{VarD::constant(TensorD({1, 1}, {x}))};
    return bce_with_logits_mean(stack_scalars(l), {y}).value()[0];
  };
  EXPECT_NEAR(single(50.0, 1.0), 0.0, 1e-12);    // confident and right
  EXPECT_NEAR(single(-50.0, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(single(50.0, 0.0), 50.0, 1e-12);   // confident and wrong
  EXPECT_NEAR(single(-50.0, 1.0), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(single(800.0, 0.0)));
  EXPECT_TRUE(std::isfinite(single(-800.0, 1.0)));
}

TEST(Bce, ZeroLogitsGiveLogTwo) {
  std::vector<VarD> logits(4, VarD::constant(TensorD::zeros({1, 1})));
  VarD loss =
      bce_with_logits_mean(stack_scalars(logits), {1.0, 0.0, 1.0, 0.0});
  EXPECT_NEAR(loss.value()[0], std::log(2.0), 1e-12);
}

TEST(Gradcheck, DiamondReuseAccumulates) {
  Rng rng(119);
  VarD a = VarD::parameter(random_tensor(rng, {2, 3}));
  VarD b = VarD::parameter(random_tensor(rng, {3, 4}));
  VarD c = VarD::parameter(random_tensor(rng, {3, 4}));
  const TensorD u = random_tensor(rng, {1, 2});
  const TensorD v = random_tensor(rng, {4, 1});
  expect_gradcheck({a, b, c}, [&] {
    return scalarize(add(matmul(a, b), matmul(a, c)), u, v);
  });
}

TEST(Dropout, EvalIsIdentityTrainScalesByKeep) {
  Rng data_rng(120);
  VarD a = VarD::parameter(random_tensor(data_rng, {8, 8}));
  Rng r1(55);
  VarD eval_out = dropout(a, 0.5, false, r1);
  EXPECT_TRUE(eval_out.value() == a.value());

  Rng r2(55), r3(55);
  VarD d1 = dropout(a, 0.5, true, r2);
  VarD d2 = dropout(a, 0.5, true, r3);
  EXPECT_TRUE(d1.value() == d2.value());  // same seed, same mask

  std::size_t zeros = 0;
  for (std::size_t i = 0; i < d1.value().numel(); ++i) {
    const double out = d1.value()[i];
    const double in = a.value()[i];
    if (out == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(out, in * 2.0, 1e-12);  // inverted scaling by 1/(1-p)
    }
  }
  EXPECT_GT(zeros, 10u);
  EXPECT_LT(zeros, 54u);
  EXPECT_THROW(dropout(a, 1.0, true, r2), ced::NumericError);
}

TEST(Dropout, BackwardUsesSameMask) {
  Rng data_rng(121);
  VarD a = VarD::parameter(random_tensor(data_rng, {4, 4}));
  Rng r(77);
  VarD d = dropout(a, 0.5, true, r);
  const TensorD ones_u = TensorD::full({1, 4}, 1.0);
  const TensorD ones_v = TensorD::full({4, 1}, 1.0);
  VarD loss = scalarize(d, ones_u, ones_v);
  a.zero_grad();
  backward(loss);
  for (std::size_t i = 0; i < 16; ++i) {
    const double expected = d.value()[i] == 0.0 ? 0.0 : 2.0;
    EXPECT_NEAR(a.grad()[i], expected, 1e-12);
  }
}

}  // namespace
