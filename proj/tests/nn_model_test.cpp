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
// Model-level tests: configuration validation, encoder shapes, masking
// invariance, attention normalization, parameter budget, and checkpoint
// round-trips.
//
//------------------------------------------------------------------------------

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ced/corpus.hpp"
#include "ced/errors.hpp"
#include "ced/io.hpp"
#include "ced/model.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

namespace {

namespace fs = std::filesystem;
using ced::ModelConfig;
using ced::Rng;
using ced::TensorD;
using ced::TensorF;
using ModelD = ced::CedModel<double>;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.conformer_units = 16;
  cfg.transformer_units = 8;
  cfg.heads = 2;
  cfg.conv_kernel = 7;
  cfg.dropout = 0.0;
  cfg.max_frames = 64;
  cfg.head_hidden = 16;
  return cfg;
}

TensorD random_input(Rng &rng, std::size_t t_len, std::size_t dim,
                     double scl = 1.0) {
  TensorD x({t_len, dim});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = scl * rng.normal();
  return x;
}

ced::FeatureSequence make_feature_sequence(const std::string &session,
                                           std::size_t turn_index, Rng &rng,
                                           std::size_t t_len, std::size_t dim) {
  TensorF frames({t_len, dim});
  for (std::size_t i = 0; i < frames.numel(); ++i)
    frames[i] = static_cast<float>(rng.normal());
  ced::FeatureSequence f;
  f.session_id = session;
  f.turn_index = turn_index;
  f.frames = std::make_shared<TensorF>(std::move(frames));
  f.frame_period = 0.04;
  return f;
}

ced::TurnPair make_pair(Rng &rng, std::size_t t_lead, std::size_t t_resp,
                        std::size_t dim) {
  ced::TurnPair p;
  p.session_id = "s";
  p.pair_index = 0;
  p.lead_speaker = "A";
  p.resp_speaker = "B";
  p.leading = make_feature_sequence("s", 0, rng, t_lead, dim);
  p.responding = make_feature_sequence("s", 1, rng, t_resp, dim);
  return p;
}

/// Layer-by-layer parameter total derived from the documented shapes, kept
/// independent from ParamStore bookkeeping.
std::size_t analytic_parameter_count(const ModelConfig &c) {
  const std::size_t d = c.conformer_units;
  const std::size_t tu = c.transformer_units;
  const std::size_t ec = c.conformer_ff_expansion;
  const std::size_t ex = c.cross_ff_expansion;

  std::size_t total = c.input_dim * d + d;  // input projection

  // conformer block: relative-position MHSA (4 projections with bias, one
  // position projection, two position biases), five layer norms, the conv
  // module (pointwise d->2d, depthwise K, pointwise d->d), and the
  // feed-forward pair.
  const std::size_t mhsa = 5 * d * d + 6 * d;
  const std::size_t norms = 10 * d;
  const std::size_t conv = (2 * d * d + 2 * d) + (d * c.conv_kernel + d) +
                           (d * d + d);
  const std::size_t ffn = (d * ec * d + ec * d) + (ec * d * d + d);
  total += c.conformer_layers * (mhsa + norms + conv + ffn);

  total += d * tu + tu;  // bridge

  // cross layer: plain MHA (4 projections with bias), three layer norms,
  // feed-forward pair.
  const std::size_t cross = (4 * tu * tu + 4 * tu) + 6 * tu +
                            (tu * ex * tu + ex * tu) + (ex * tu * tu + tu);
  const std::size_t stacks = c.share_cross_weights ? 1 : 2;
  total += stacks * c.cross_layers * cross;

  total += 2 * tu * c.head_hidden + c.head_hidden;  // head.0
  total += c.head_hidden + 1;                       // head.1
  return total;
}

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() /
           ("ced_model_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  fs::path path(const std::string &name) const { return dir_ / name; }

 private:
  fs::path dir_;
  static int counter_;
};

int TempDir::counter_ = 0;

//------------------------------------------------------------------------------
// Configuration
//------------------------------------------------------------------------------

TEST(ModelConfig, DefaultsValidate) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.input_dim, 768u);
  EXPECT_EQ(cfg.conformer_units, 352u);
  EXPECT_EQ(cfg.transformer_units, 64u);
  EXPECT_EQ(cfg.heads, 4u);
  EXPECT_EQ(cfg.conv_kernel, 31u);
  EXPECT_EQ(cfg.pooling, ced::Pooling::kMean);
}

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig cfg;
  cfg.heads = 5;  // 64 % 5 != 0
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ced::ConfigError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("5"), std::string::npos);
    EXPECT_NE(msg.find("heads"), std::string::npos);
  }
}

TEST(ModelConfig, RejectsBadFields) {
  ModelConfig cfg = tiny_config();
  cfg.conv_kernel = 4;
  EXPECT_THROW(cfg.validate(), ced::ConfigError);
  cfg = tiny_config();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), ced::ConfigError);
  cfg = tiny_config();
  cfg.dropout = -0.1;
  EXPECT_THROW(cfg.validate(), ced::ConfigError);
  cfg = tiny_config();
  cfg.max_frames = 1;
  EXPECT_THROW(cfg.validate(), ced::ConfigError);
  EXPECT_THROW(ced::pooling_from_name("avg"), ced::ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKey) {
  ModelConfig cfg = tiny_config();
  cfg.pooling = ced::Pooling::kFirst;
  cfg.share_cross_weights = true;
  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());

  nlohmann::json j = cfg.to_json();
  j["window_size"] = 3;
  EXPECT_THROW(ModelConfig::from_json(j), ced::ConfigError);
}

//------------------------------------------------------------------------------
// Parameter budget
//------------------------------------------------------------------------------

TEST(ParameterBudget, TinyConfigMatchesAnalyticSum) {
  const ModelConfig cfg = tiny_config();
  ModelD model(cfg, 3);
  EXPECT_EQ(model.parameter_count(), analytic_parameter_count(cfg));
}

TEST(ParameterBudget, SharedCrossStackDropsOneStack) {
  ModelConfig cfg = tiny_config();
  ModelD separate(cfg, 3);
  cfg.share_cross_weights = true;
  ModelD shared(cfg, 3);
  EXPECT_EQ(shared.parameter_count(), analytic_parameter_count(cfg));
  EXPECT_LT(shared.parameter_count(), separate.parameter_count());
}

//------------------------------------------------------------------------------
// Self-encoder
//------------------------------------------------------------------------------

TEST(SelfEncoder, OutputShape) {
  ModelD model(tiny_config(), 5);
  Rng rng(21);
  TensorD x = random_input(rng, 9, 8);
  TensorD h = model.self_encode(x);
  EXPECT_EQ(h.rows(), 9u);
  EXPECT_EQ(h.cols(), 16u);
  EXPECT_TRUE(h.all_finite());
}

TEST(SelfEncoder, RejectsBadInputs) {
  ModelD model(tiny_config(), 5);
  Rng rng(22);
  EXPECT_THROW(model.self_encode(random_input(rng, 1, 8)), ced::DataError);
  EXPECT_THROW(model.self_encode(random_input(rng, 4, 9)), ced::DataError);
  TensorD x = random_input(rng, 4, 8);
  EXPECT_THROW(model.self_encode(x, TensorD::full({5}, 1.0)), ced::DataError);
}

TEST(SelfEncoder, PaddingFramesDoNotLeakIntoValidRows) {
  ModelD model(tiny_config(), 5);
  Rng rng(23);
  const std::size_t t_len = 6, pad = 10;
  TensorD x = random_input(rng, t_len, 8);

  TensorD padded({t_len + pad, 8});
  for (std::size_t i = 0; i < t_len; ++i)
    for (std::size_t j = 0; j < 8; ++j) padded(i, j) = x(i, j);
  for (std::size_t i = t_len; i < t_len + pad; ++i)
    for (std::size_t j = 0; j < 8; ++j) padded(i, j) = 1e3 * rng.normal();
  TensorD mask = TensorD::zeros({t_len + pad});
  for (std::size_t i = 0; i < t_len; ++i) mask[i] = 1.0;

  TensorD h = model.self_encode(x);
  TensorD hp = model.self_encode(padded, mask);
  for (std::size_t i = 0; i < t_len; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      EXPECT_NEAR(hp(i, j), h(i, j), 1e-5) << "row " << i << " col " << j;
}

TEST(SelfEncoder, FrameOrderMatters) {
  ModelD model(tiny_config(), 5);
  Rng rng(24);
  TensorD x = random_input(rng, 6, 8);
  TensorD swapped = x;
  for (std::size_t j = 0; j < 8; ++j) std::swap(swapped(0, j), swapped(5, j));

  TensorD h = model.self_encode(x);
  TensorD hs = model.self_encode(swapped);
  double max_diff = 0.0;
  for (std::size_t k = 0; k < h.numel(); ++k)
    max_diff = std::max(max_diff, std::abs(h[k] - hs[k]));
  EXPECT_GT(max_diff, 1e-4);
}

//------------------------------------------------------------------------------
// Cross-encoder
//------------------------------------------------------------------------------

TEST(CrossEncoder, ShapesAndAttentionRowsNormalized) {
  ModelD model(tiny_config(), 5);
  Rng rng(31);
  const std::size_t t1 = 5, t2 = 7;
  TensorD hl = model.self_encode(random_input(rng, t1, 8));
  TensorD hr = model.self_encode(random_input(rng, t2, 8));
  TensorD ml = TensorD::full({t1}, 1.0);
  TensorD mr = TensorD::full({t2}, 1.0);

  std::vector<ced::AttentionRecord<double>> records;
  ced::EmbeddingPair<double> emb = model.cross_encode(hl, ml, hr, mr, &records);

  EXPECT_EQ(emb.z_lead.rows(), t1);
  EXPECT_EQ(emb.z_lead.cols(), 8u);
  EXPECT_EQ(emb.z_resp.rows(), t2);
  EXPECT_EQ(emb.z_resp.cols(), 8u);
  EXPECT_EQ(emb.pooled_lead.rows(), 1u);
  EXPECT_EQ(emb.pooled_lead.cols(), 8u);

  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].layer_id, ced::CrossLayerId::kCrossEncoder1);
  EXPECT_EQ(records[1].layer_id, ced::CrossLayerId::kCrossEncoder2);
  EXPECT_EQ(records[0].weights.shape(), (std::vector<std::size_t>{2, t1, t2}));
  EXPECT_EQ(records[1].weights.shape(), (std::vector<std::size_t>{2, t2, t1}));

  for (const auto &rec : records) {
    for (std::size_t h = 0; h < rec.weights.dim(0); ++h) {
      for (std::size_t q = 0; q < rec.weights.dim(1); ++q) {
        double sum = 0.0;
        for (std::size_t k = 0; k < rec.weights.dim(2); ++k) {
          const double w = rec.weights(h, q, k);
          EXPECT_GE(w, 0.0);
          sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-5);
      }
    }
  }
}

TEST(CrossEncoder, ZeroKeysGiveUniformAttention) {
  ModelD model(tiny_config(), 5);
  Rng rng(32);
  const std::size_t t1 = 3, t2 = 4;
  TensorD hl = random_input(rng, t1, 16);
  TensorD zeros = TensorD::zeros({t2, 16});
  TensorD ml = TensorD::full({t1}, 1.0);
  TensorD mr = TensorD::full({t2}, 1.0);

  std::vector<ced::AttentionRecord<double>> records;
  model.cross_encode(hl, ml, zeros, mr, &records, /*add_positions=*/false);

  ASSERT_FALSE(records.empty());
  const auto &attn = records[0].weights;  // lead queries over zeroed resp keys
  for (std::size_t h = 0; h < attn.dim(0); ++h)
    for (std::size_t q = 0; q < attn.dim(1); ++q)
      for (std::size_t k = 0; k < attn.dim(2); ++k)
        EXPECT_NEAR(attn(h, q, k), 1.0 / t2, 1e-5);
}

TEST(CrossEncoder, MaskedKeysGetZeroWeight) {
  ModelD model(tiny_config(), 5);
  Rng rng(33);
  const std::size_t t1 = 4, t2 = 6;
  TensorD hl = model.self_encode(random_input(rng, t1, 8));
  TensorD hr = model.self_encode(random_input(rng, t2, 8));
  TensorD ml = TensorD::full({t1}, 1.0);
  TensorD mr = TensorD::zeros({t2});
  for (std::size_t i = 0; i < 4; ++i) mr[i] = 1.0;  // last two resp frames padded

  std::vector<ced::AttentionRecord<double>> records;
  model.cross_encode(hl, ml, hr, mr, &records);
  const auto &attn = records[0].weights;
  for (std::size_t h = 0; h < attn.dim(0); ++h)
    for (std::size_t q = 0; q < attn.dim(1); ++q) {
      EXPECT_EQ(attn(h, q, 4), 0.0);
      EXPECT_EQ(attn(h, q, 5), 0.0);
    }
}

TEST(CrossEncoder, FirstPoolingTakesRowZero) {
  ModelConfig cfg = tiny_config();
  cfg.pooling = ced::Pooling::kFirst;
  ModelD model(cfg, 5);
  Rng rng(34);
  TensorD hl = model.self_encode(random_input(rng, 4, 8));
  TensorD hr = model.self_encode(random_input(rng, 5, 8));
  ced::EmbeddingPair<double> emb =
      model.cross_encode(hl, TensorD::full({4}, 1.0), hr,
                         TensorD::full({5}, 1.0));
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(emb.pooled_lead(0, j), emb.z_lead(0, j));
    EXPECT_EQ(emb.pooled_resp(0, j), emb.z_resp(0, j));
  }
}

//------------------------------------------------------------------------------
// Pair classification
//------------------------------------------------------------------------------

TEST(ClassifyPair, FiniteAndDeterministic) {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.2;  // must not fire in evaluation mode
  ModelD model(cfg, 5);
  Rng rng(41);
  ced::TurnPair pair = make_pair(rng, 6, 7, 8);

  const double logit1 = model.classify_pair(pair);
  const double logit2 = model.classify_pair(pair);
  EXPECT_TRUE(std::isfinite(logit1));
  EXPECT_EQ(logit1, logit2);
}

TEST(ClassifyPair, NonFiniteInputNamesLayer) {
  ModelD model(tiny_config(), 5);
  Rng rng(42);
  ced::TurnPair pair = make_pair(rng, 5, 5, 8);
  TensorF bad = *pair.leading.frames;
  bad(2, 3) = std::nanf("");
  pair.leading.frames = std::make_shared<TensorF>(std::move(bad));

  try {
    model.classify_pair(pair);
    FAIL() << "expected NumericError";
  } catch (const ced::NumericError &e) {
    EXPECT_NE(std::string(e.what()).find("self_encoder"), std::string::npos);
  }
}

TEST(ClassifyPair, RejectsSingleFrameTurn) {
  ModelD model(tiny_config(), 5);
  Rng rng(43);
  ced::TurnPair pair = make_pair(rng, 1, 5, 8);
  EXPECT_THROW(model.classify_pair(pair), ced::DataError);
}

TEST(PairInput, TruncatesLeadTailRespHead) {
  Rng rng(44);
  ced::FeatureSequence fsq = make_feature_sequence("s", 0, rng, 10, 3);
  auto [lead, lead_mask] = ModelD::pair_input(fsq, /*keep_tail=*/true, 4);
  auto [resp, resp_mask] = ModelD::pair_input(fsq, /*keep_tail=*/false, 4);
  ASSERT_EQ(lead.rows(), 4u);
  ASSERT_EQ(resp.rows(), 4u);
  EXPECT_EQ(lead_mask.numel(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(lead(i, j), static_cast<double>((*fsq.frames)(6 + i, j)));
      EXPECT_EQ(resp(i, j), static_cast<double>((*fsq.frames)(i, j)));
    }
  }
}

//------------------------------------------------------------------------------
// Default configuration
//------------------------------------------------------------------------------

TEST(DefaultModel, BudgetShapesAndNormalization) {
  const ModelConfig cfg;  // full-scale defaults
  ModelD model(cfg, 7);

  const std::size_t count = model.parameter_count();
  EXPECT_EQ(count, analytic_parameter_count(cfg));
  EXPECT_GE(count, 1'900'000u);
  EXPECT_LE(count, 2'300'000u);

  Rng rng(51);
  TensorD xl = random_input(rng, 5, 768);
  TensorD xr = random_input(rng, 4, 768);
  TensorD hl = model.self_encode(xl);
  TensorD hr = model.self_encode(xr);
  EXPECT_EQ(hl.rows(), 5u);
  EXPECT_EQ(hl.cols(), 352u);

  std::vector<ced::AttentionRecord<double>> records;
  ced::EmbeddingPair<double> emb =
      model.cross_encode(hl, TensorD::full({5}, 1.0), hr,
                         TensorD::full({4}, 1.0), &records);
  EXPECT_EQ(emb.z_lead.cols(), 64u);
  EXPECT_EQ(emb.pooled_resp.cols(), 64u);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].weights.shape(), (std::vector<std::size_t>{4, 5, 4}));
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t q = 0; q < 5; ++q) {
      double sum = 0.0;
      for (std::size_t k = 0; k < 4; ++k) sum += records[0].weights(h, q, k);
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
}

//------------------------------------------------------------------------------
// Checkpoints
//------------------------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesBehavior) {
  TempDir tmp;
  const fs::path path = tmp.path("model.ckpt");

  ModelConfig cfg = tiny_config();
  cfg.pooling = ced::Pooling::kFirst;
  ModelD model(cfg, 9);
  Rng rng(61);
  ced::TurnPair pair = make_pair(rng, 6, 5, 8);
  const double logit = model.classify_pair(pair);

  ced::save_checkpoint(model, path);
  ModelD loaded = ced::load_checkpoint<double>(path);
  EXPECT_EQ(loaded.classify_pair(pair), logit);
  EXPECT_EQ(loaded.config().to_json(), cfg.to_json());

  const auto &a = model.params().items;
  const auto &b = loaded.params().items;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(a[i].second.value() == b[i].second.value());
  }
}

TEST(Checkpoint, PeekReadsConfigOnly) {
  TempDir tmp;
  const fs::path path = tmp.path("model.ckpt");
  ModelConfig cfg = tiny_config();
  cfg.cross_layers = 2;
  ModelD model(cfg, 9);
  ced::save_checkpoint(model, path);
  EXPECT_EQ(ced::peek_checkpoint_config(path).to_json(), cfg.to_json());
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir tmp;
  const fs::path path = tmp.path("model.ckpt");
  ModelD model(tiny_config(), 9);
  ced::save_checkpoint(model, path);

  std::string blob = ced::io::read_file(path);
  std::string bad_magic = blob;
  bad_magic[0] = 'X';
  ced::io::write_file_atomic(tmp.path("bad_magic.ckpt"), bad_magic);
  EXPECT_THROW(ced::load_checkpoint<double>(tmp.path("bad_magic.ckpt")),
               ced::DataError);

  std::string truncated = blob.substr(0, blob.size() - 64);
  ced::io::write_file_atomic(tmp.path("truncated.ckpt"), truncated);
  EXPECT_THROW(ced::load_checkpoint<double>(tmp.path("truncated.ckpt")),
               ced::DataError);

  ced::io::write_file_atomic(tmp.path("empty.ckpt"), "");
  EXPECT_THROW(ced::load_checkpoint<double>(tmp.path("empty.ckpt")),
               ced::DataError);
}

}  // namespace
