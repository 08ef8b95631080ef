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
// The CED network: a shared per-speaker conformer self-encoder, a bridge
// projection, two cross-subject transformer encoder stacks, and a real/fake
// classification head. Checkpoint serialization lives at the bottom.
//
//------------------------------------------------------------------------------
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ced/autograd.hpp"
#include "ced/corpus.hpp"
#include "ced/errors.hpp"
#include "ced/io.hpp"
#include "ced/nn.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

namespace ced {

enum class Pooling { kMean, kFirst };

inline std::string pooling_name(Pooling p) {
  return p == Pooling::kMean ? "mean" : "first";
}

inline Pooling pooling_from_name(const std::string &s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "first") return Pooling::kFirst;
  throw ConfigError("pooling must be 'mean' or 'first', got '" + s + "'");
}

struct ModelConfig {
  std::size_t input_dim = 768;
  std::size_t conformer_units = 352;
  std::size_t transformer_units = 64;
  std::size_t heads = 4;
  std::size_t conformer_layers = 1;
  std::size_t cross_layers = 1;
  std::size_t conv_kernel = 31;
  double dropout = 0.2;
  std::size_t max_frames = 512;
  Pooling pooling = Pooling::kMean;
  // widths not pinned by the protocol, tuned so the default build lands
  // near the published 2.1M parameter total
  std::size_t conformer_ff_expansion = 3;
  std::size_t cross_ff_expansion = 4;
  std::size_t head_hidden = 64;
  bool share_cross_weights = false;

  void validate() const {
    if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (conformer_units % heads != 0)
      throw ConfigError("model: conformer_units (" +
                        std::to_string(conformer_units) +
                        ") not divisible by heads (" + std::to_string(heads) +
                        ")");
    if (transformer_units % heads != 0)
      throw ConfigError("model: transformer_units (" +
                        std::to_string(transformer_units) +
                        ") not divisible by heads (" + std::to_string(heads) +
                        ")");
    if (conv_kernel % 2 == 0 || conv_kernel < 1)
      throw ConfigError("model: conv_kernel must be odd, got " +
                        std::to_string(conv_kernel));
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw ConfigError("model: dropout must lie in [0,1), got " +
                        std::to_string(dropout));
    if (conformer_layers < 1)
      throw ConfigError("model: conformer_layers must be >= 1");
    if (cross_layers < 1) throw ConfigError("model: cross_layers must be >= 1");
    if (max_frames < kMinTurnFrames)
      throw ConfigError("model: max_frames must be >= 2");
    if (conformer_ff_expansion < 1 || cross_ff_expansion < 1)
      throw ConfigError("model: feed-forward expansions must be >= 1");
    if (head_hidden < 1) throw ConfigError("model: head_hidden must be >= 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["input_dim"] = input_dim;
    j["conformer_units"] = conformer_units;
    j["transformer_units"] = transformer_units;
    j["heads"] = heads;
    j["conformer_layers"] = conformer_layers;
    j["cross_layers"] = cross_layers;
    j["conv_kernel"] = conv_kernel;
    j["dropout"] = dropout;
    j["max_frames"] = max_frames;
    j["pooling"] = pooling_name(pooling);
    j["conformer_ff_expansion"] = conformer_ff_expansion;
    j["cross_ff_expansion"] = cross_ff_expansion;
    j["head_hidden"] = head_hidden;
    j["share_cross_weights"] = share_cross_weights;
    return j;
  }

  static ModelConfig from_json(const nlohmann::json &j) {
    ModelConfig c;
    for (const auto &[key, value] : j.items()) {
      if (key == "input_dim") c.input_dim = value.get<std::size_t>();
      else if (key == "conformer_units") c.conformer_units = value.get<std::size_t>();
      else if (key == "transformer_units") c.transformer_units = value.get<std::size_t>();
      else if (key == "heads") c.heads = value.get<std::size_t>();
      else if (key == "conformer_layers") c.conformer_layers = value.get<std::size_t>();
      else if (key == "cross_layers") c.cross_layers = value.get<std::size_t>();
      else if (key == "conv_kernel") c.conv_kernel = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "max_frames") c.max_frames = value.get<std::size_t>();
      else if (key == "pooling") c.pooling = pooling_from_name(value.get<std::string>());
      else if (key == "conformer_ff_expansion") c.conformer_ff_expansion = value.get<std::size_t>();
      else if (key == "cross_ff_expansion") c.cross_ff_expansion = value.get<std::size_t>();
      else if (key == "head_hidden") c.head_hidden = value.get<std::size_t>();
      else if (key == "share_cross_weights") c.share_cross_weights = value.get<bool>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

enum class CrossLayerId { kCrossEncoder1, kCrossEncoder2 };

inline std::string cross_layer_name(CrossLayerId id) {
  return id == CrossLayerId::kCrossEncoder1 ? "cross_encoder_1"
                                            : "cross_encoder_2";
}

template <typename Real>
struct AttentionRecord {
  CrossLayerId layer_id = CrossLayerId::kCrossEncoder1;
  std::size_t layer_index = 0;   // depth within the stack
  Tensor<Real> weights;          // [heads x T_query x T_key]
};

template <typename Real>
struct EmbeddingPair {
  Tensor<Real> z_lead;       // [T1 x transformer_units]
  Tensor<Real> z_resp;       // [T2 x transformer_units]
  Tensor<Real> pooled_lead;  // [1 x transformer_units]
  Tensor<Real> pooled_resp;  // [1 x transformer_units]
};

template <typename Real>
void check_finite(const Tensor<Real> &t, const char *layer) {
  if (!t.all_finite())
    throw NumericError(std::string("non-finite activations in ") + layer);
}

template <typename Real>
class CedModel {
 public:
  struct CrossVars {
    Var<Real> z_lead, z_resp;
    Var<Real> pooled_lead, pooled_resp;
    std::vector<AttentionRecord<Real>> attention;
  };
  struct PairVars {
    Var<Real> logit;
    CrossVars cross;
  };

  explicit CedModel(ModelConfig cfg, std::uint64_t init_seed = 1) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(init_seed, {"model-init"}));
    const std::size_t cu = cfg_.conformer_units;
    const std::size_t tu = cfg_.transformer_units;
    const Real p = static_cast<Real>(cfg_.dropout);

    in_proj_ = Linear<Real>(params_, "in_proj", cfg_.input_dim, cu, rng);
    for (std::size_t i = 0; i < cfg_.conformer_layers; ++i)
      conformer_.emplace_back(params_, "conformer." + std::to_string(i), cu,
                              cfg_.heads, cfg_.conv_kernel,
                              cfg_.conformer_ff_expansion, p, rng);
    bridge_ = Linear<Real>(params_, "bridge", cu, tu, rng);
    for (std::size_t i = 0; i < cfg_.cross_layers; ++i)
      cross1_.emplace_back(params_, "cross_encoder_1." + std::to_string(i), tu,
                           cfg_.heads, cfg_.cross_ff_expansion, p, rng);
    if (!cfg_.share_cross_weights) {
      for (std::size_t i = 0; i < cfg_.cross_layers; ++i)
        cross2_.emplace_back(params_, "cross_encoder_2." + std::to_string(i),
                             tu, cfg_.heads, cfg_.cross_ff_expansion, p, rng);
    }
    head1_ = Linear<Real>(params_, "head.0", 2 * tu, cfg_.head_hidden, rng);
    head2_ = Linear<Real>(params_, "head.1", cfg_.head_hidden, 1, rng);
  }

  const ModelConfig &config() const { return cfg_; }
  ParamStore<Real> &params() { return params_; }
  const ParamStore<Real> &params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  //----------------------------------------------------------------------
  // Graph-building forms (shared by training and inference)
  //----------------------------------------------------------------------

  Var<Real> self_encode_var(const Var<Real> &x, const Tensor<Real> &mask,
                            const RunContext &ctx) const {
    const std::size_t t_len = x.value().rows();
    if (t_len < kMinTurnFrames)
      throw DataError("input too short: self-encoder needs at least " +
                      std::to_string(kMinTurnFrames) + " frames, got " +
                      std::to_string(t_len));
    if (mask.numel() != t_len)
      throw DataError("mask length " + std::to_string(mask.numel()) +
                      " does not match frame count " + std::to_string(t_len));
    if (x.value().cols() != cfg_.input_dim)
      throw DataError("feature dim " + std::to_string(x.value().cols()) +
                      " does not match model input_dim " +
                      std::to_string(cfg_.input_dim));
    auto h = in_proj_.forward(x);
    for (const auto &block : conformer_) h = block.forward(h, mask, ctx);
    return h;
  }

  struct CrossOptions {
    bool add_positions = true;
    bool capture_attention = false;
  };

  CrossVars cross_encode_var(const Var<Real> &h_lead,
                             const Tensor<Real> &lead_mask,
                             const Var<Real> &h_resp,
                             const Tensor<Real> &resp_mask,
                             const RunContext &ctx,
                             const CrossOptions &opts = {}) const {
    if (h_lead.value().rows() == 0 || h_resp.value().rows() == 0)
      throw DataError("input too short: cross-encoder needs non-empty sequences");

    auto zl = bridge_.forward(h_lead);
    auto zr = bridge_.forward(h_resp);
    if (opts.add_positions) {
      zl = add(zl, Var<Real>::constant(sinusoid_positions<Real>(
                       zl.value().rows(), cfg_.transformer_units)));
      zr = add(zr, Var<Real>::constant(sinusoid_positions<Real>(
                       zr.value().rows(), cfg_.transformer_units)));
    }

    CrossVars out;
    const auto &c2 = cfg_.share_cross_weights ? cross1_ : cross2_;
    for (std::size_t i = 0; i < cfg_.cross_layers; ++i) {
      Tensor<Real> attn1, attn2;
      auto zl_in = zl, zr_in = zr;
      zl = cross1_[i].forward(zl_in, zr_in, resp_mask, ctx,
                              opts.capture_attention ? &attn1 : nullptr);
      zr = c2[i].forward(zr_in, zl_in, lead_mask, ctx,
                         opts.capture_attention ? &attn2 : nullptr);
      if (opts.capture_attention) {
        out.attention.push_back(
            {CrossLayerId::kCrossEncoder1, i, std::move(attn1)});
        out.attention.push_back(
            {CrossLayerId::kCrossEncoder2, i, std::move(attn2)});
      }
    }

    out.z_lead = zl;
    out.z_resp = zr;
    out.pooled_lead = pool(zl, lead_mask);
    out.pooled_resp = pool(zr, resp_mask);
    return out;
  }

  Var<Real> head_logit_var(const Var<Real> &pooled_lead,
                           const Var<Real> &pooled_resp,
                           const RunContext &ctx) const {
    auto h = swish(head1_.forward(concat_cols(
        std::vector<Var<Real>>{pooled_lead, pooled_resp})));
    h = maybe_dropout(h, static_cast<Real>(cfg_.dropout), ctx);
    return head2_.forward(h);  // [1 x 1]
  }

  PairVars forward_pair_var(const Tensor<Real> &lead,
                            const Tensor<Real> &lead_mask,
                            const Tensor<Real> &resp,
                            const Tensor<Real> &resp_mask,
                            const RunContext &ctx,
                            const CrossOptions &opts = {}) const {
    auto hl = self_encode_var(Var<Real>::constant(lead), lead_mask, ctx);
    auto hr = self_encode_var(Var<Real>::constant(resp), resp_mask, ctx);
    check_finite(hl.value(), "self_encoder");
    check_finite(hr.value(), "self_encoder");
    PairVars pv;
    pv.cross = cross_encode_var(hl, lead_mask, hr, resp_mask, ctx, opts);
    check_finite(pv.cross.z_lead.value(), "cross_encoder_1");
    check_finite(pv.cross.z_resp.value(), "cross_encoder_2");
    pv.logit = head_logit_var(pv.cross.pooled_lead, pv.cross.pooled_resp, ctx);
    check_finite(pv.logit.value(), "classification_head");
    return pv;
  }

  //----------------------------------------------------------------------
  // Evaluation-mode entry points (no graph, dropout off)
  //----------------------------------------------------------------------

  Tensor<Real> self_encode(const Tensor<Real> &x,
                           const Tensor<Real> &mask) const {
    NoGradGuard guard;
    RunContext ctx;
    auto h = self_encode_var(Var<Real>::constant(x), mask, ctx);
    check_finite(h.value(), "self_encoder");
    return h.value();
  }

  Tensor<Real> self_encode(const Tensor<Real> &x) const {
    return self_encode(x, Tensor<Real>::full({x.rows()}, Real(1)));
  }

  EmbeddingPair<Real> cross_encode(
      const Tensor<Real> &h_lead, const Tensor<Real> &lead_mask,
      const Tensor<Real> &h_resp, const Tensor<Real> &resp_mask,
      std::vector<AttentionRecord<Real>> *records = nullptr,
      bool add_positions = true) const {
    NoGradGuard guard;
    RunContext ctx;
    CrossOptions opts;
    opts.add_positions = add_positions;
    opts.capture_attention = records != nullptr;
    auto cv = cross_encode_var(Var<Real>::constant(h_lead), lead_mask,
                               Var<Real>::constant(h_resp), resp_mask, ctx,
                               opts);
    check_finite(cv.z_lead.value(), "cross_encoder_1");
    check_finite(cv.z_resp.value(), "cross_encoder_2");
    if (records) *records = std::move(cv.attention);
    return {cv.z_lead.value(), cv.z_resp.value(), cv.pooled_lead.value(),
            cv.pooled_resp.value()};
  }

  /// Truncates per the leading-tail / responding-head rule and converts the
  /// stored float frames to the model scalar type.
  static std::pair<Tensor<Real>, Tensor<Real>> pair_input(
      const FeatureSequence &fsq, bool keep_tail, std::size_t max_frames) {
    const TensorF &src = *fsq.frames;
    const std::size_t t_full = src.rows();
    if (t_full < kMinTurnFrames)
      throw DataError("turn below the " + std::to_string(kMinTurnFrames) +
                      "-frame minimum in session " + fsq.session_id);
    const std::size_t t_len = std::min(t_full, max_frames);
    const std::size_t row0 = keep_tail ? t_full - t_len : 0;
    Tensor<Real> x({t_len, src.cols()});
    for (std::size_t i = 0; i < t_len; ++i)
      for (std::size_t j = 0; j < src.cols(); ++j)
        x(i, j) = static_cast<Real>(src(row0 + i, j));
    return {std::move(x), Tensor<Real>::full({t_len}, Real(1))};
  }

  EmbeddingPair<Real> extract_embeddings(
      const TurnPair &pair,
      std::vector<AttentionRecord<Real>> *records = nullptr) const {
    NoGradGuard guard;
    RunContext ctx;
    auto [lead, lead_mask] = pair_input(pair.leading, true, cfg_.max_frames);
    auto [resp, resp_mask] = pair_input(pair.responding, false, cfg_.max_frames);
    CrossOptions opts;
    opts.capture_attention = records != nullptr;
    auto pv = forward_pair_var(lead, lead_mask, resp, resp_mask, ctx, opts);
    if (records) *records = std::move(pv.cross.attention);
    return {pv.cross.z_lead.value(), pv.cross.z_resp.value(),
            pv.cross.pooled_lead.value(), pv.cross.pooled_resp.value()};
  }

  /// Real/fake logit for one turn pair; deterministic in evaluation mode.
  Real classify_pair(const TurnPair &pair) const {
    NoGradGuard guard;
    RunContext ctx;
    auto [lead, lead_mask] = pair_input(pair.leading, true, cfg_.max_frames);
    auto [resp, resp_mask] = pair_input(pair.responding, false, cfg_.max_frames);
    auto pv = forward_pair_var(lead, lead_mask, resp, resp_mask, ctx);
    return pv.logit.value()(0, 0);
  }

 private:
  Var<Real> pool(const Var<Real> &z, const Tensor<Real> &mask) const {
    if (cfg_.pooling == Pooling::kFirst) return take_row(z, 0);
    return mean_pool_rows(z, mask);
  }

  ModelConfig cfg_;
  ParamStore<Real> params_;
  Linear<Real> in_proj_;
  std::vector<ConformerBlock<Real>> conformer_;
  Linear<Real> bridge_;
  std::vector<CrossEncoderLayer<Real>> cross1_;
  std::vector<CrossEncoderLayer<Real>> cross2_;
  Linear<Real> head1_;
  Linear<Real> head2_;
};

//------------------------------------------------------------------------------
// Checkpoints
//
// Layout: 8-byte magic, u64 little-endian header length, JSON header
// (format_version, scalar type, model config, tensor table with shapes and
// payload offsets), then the raw little-endian tensor payload in table order.
//------------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "CEDCKPT1";

template <typename Real>
void save_checkpoint(const CedModel<Real> &model,
                     const std::filesystem::path &path) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["scalar"] = sizeof(Real) == 8 ? "f64" : "f32";
  header["config"] = model.config().to_json();

  std::string payload;
  nlohmann::json table = nlohmann::json::array();
  for (const auto &[name, var] : model.params().items) {
    const Tensor<Real> &t = var.value();
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = payload.size();
    table.push_back(std::move(entry));
    for (std::size_t k = 0; k < t.numel(); ++k) {
      if constexpr (sizeof(Real) == 8)
        io::put_f64(payload, static_cast<double>(t[k]));
      else
        io::put_f32(payload, static_cast<float>(t[k]));
    }
  }
  header["tensors"] = std::move(table);

  const std::string header_str = header.dump();
  std::string blob;
  blob.append(kCheckpointMagic, 8);
  io::put_u64(blob, header_str.size());
  blob += header_str;
  blob += payload;
  io::write_file_atomic(path, blob);
}

template <typename Real>
CedModel<Real> load_checkpoint(const std::filesystem::path &path) {
  const std::string blob = io::read_file(path);
  if (blob.size() < 16 || blob.compare(0, 8, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  const std::uint64_t header_len = io::get_u64(blob.data() + 8);
  if (16 + header_len > blob.size())
    throw DataError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception &e) {
    throw DataError("bad checkpoint header: " + std::string(e.what()));
  }
  if (header.at("format_version").get<int>() != 1)
    throw DataError("unsupported checkpoint format_version");
  const std::string scalar = header.at("scalar").get<std::string>();
  if (scalar != "f64" && scalar != "f32")
    throw DataError("unsupported checkpoint scalar type '" + scalar + "'");
  const std::size_t word = scalar == "f64" ? 8 : 4;

  ModelConfig cfg = ModelConfig::from_json(header.at("config"));
  CedModel<Real> model(cfg, /*init_seed=*/0);

  const auto &table = header.at("tensors");
  auto &items = model.params().items;
  if (table.size() != items.size())
    throw DataError("checkpoint tensor count " + std::to_string(table.size()) +
                    " does not match model (" + std::to_string(items.size()) +
                    ")");
  const char *payload = blob.data() + 16 + header_len;
  const std::size_t payload_size = blob.size() - 16 - header_len;

  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto &entry = table[i];
    auto &[name, var] = items[i];
    if (entry.at("name").get<std::string>() != name)
      throw DataError("checkpoint tensor '" +
                      entry.at("name").get<std::string>() +
                      "' does not match model parameter '" + name + "'");
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor<Real> &t = var.node()->value;
    if (shape != t.shape())
      throw DataError("shape mismatch for checkpoint tensor '" + name + "'");
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (offset + word * t.numel() > payload_size)
      throw DataError("checkpoint payload out of range for tensor '" + name +
                      "'");
    for (std::size_t k = 0; k < t.numel(); ++k) {
      const char *p = payload + offset + word * k;
      t[k] = word == 8 ? static_cast<Real>(io::get_f64(p))
                       : static_cast<Real>(io::get_f32(p));
    }
  }
  return model;
}

/// Reads just the config block of a checkpoint.
inline ModelConfig peek_checkpoint_config(const std::filesystem::path &path) {
  const std::string blob = io::read_file(path);
  if (blob.size() < 16 || blob.compare(0, 8, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  const std::uint64_t header_len = io::get_u64(blob.data() + 8);
  if (16 + header_len > blob.size())
    throw DataError("truncated checkpoint header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(blob.substr(16, header_len));
  return ModelConfig::from_json(header.at("config"));
}

}  // namespace ced
