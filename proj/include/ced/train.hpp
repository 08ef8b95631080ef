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
// Real/fake discrimination training: balanced batch construction from
// shuffled counterpart sessions, Adam, session-level validation split, and
// early stopping on validation loss.
//
//------------------------------------------------------------------------------
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ced/autograd.hpp"
#include "ced/corpus.hpp"
#include "ced/errors.hpp"
#include "ced/log.hpp"
#include "ced/model.hpp"
#include "ced/rng.hpp"

namespace ced {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw ConfigError("train: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw ConfigError("train: val_fraction must lie in (0,1), got " +
                        std::to_string(val_fraction));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["max_epochs"] = max_epochs;
    j["patience"] = patience;
    j["val_fraction"] = val_fraction;
    j["seed"] = seed;
    j["checkpoint_dir"] = checkpoint_dir.string();
    return j;
  }

  static TrainConfig from_json(const nlohmann::json &j) {
    TrainConfig c;
    for (const auto &[key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "checkpoint_dir")
        c.checkpoint_dir = value.get<std::string>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
    c.validate();
    return c;
  }
};

struct TrainRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double wall_time = 0.0;  // seconds

  nlohmann::json to_json(bool with_wall_time = true) const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["val_accuracy"] = val_accuracy;
    if (with_wall_time) j["wall_time"] = wall_time;
    return j;
  }
};

struct LabeledPair {
  TurnPair pair;
  double label = 0.0;  // 1 real, 0 fake
};

/// One epoch's labeled pair stream: every usable real session contributes its
/// pairs (label 1) and the pairs of one freshly shuffled counterpart
/// (label 0). The two halves are shuffled per (seed, epoch) and interleaved
/// real/fake so contiguous batches stay label-balanced within one.
inline std::vector<LabeledPair> make_training_batches(
    const std::vector<Conversation> &corpus, const TrainConfig &cfg,
    std::size_t epoch) {
  if (corpus.empty())
    throw DataError("empty corpus: no sessions to build batches from");

  std::vector<LabeledPair> real, fake;
  std::size_t skipped = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const Conversation &conv = corpus[s];
    if (conv.turns.size() < 3 || make_turn_pairs(conv).empty()) {
      ++skipped;
      continue;
    }
    Conversation shuffled =
        shuffle_session(conv, mix_seed(cfg.seed, "fake-session", epoch, s));
    for (TurnPair &p : make_turn_pairs(conv))
      real.push_back({std::move(p), 1.0});
    for (TurnPair &p : make_turn_pairs(shuffled))
      fake.push_back({std::move(p), 0.0});
  }
  if (skipped > 0)
    log::warn("make_training_batches: skipped ", skipped,
              " session(s) too short to shuffle");
  if (real.empty())
    throw DataError("empty corpus: no usable sessions (need >= 3 turns)");

  Rng rng_real(mix_seed(cfg.seed, "order-real", epoch, 0));
  Rng rng_fake(mix_seed(cfg.seed, "order-fake", epoch, 0));
  rng_real.shuffle(real);
  rng_fake.shuffle(fake);

  std::vector<LabeledPair> stream;
  stream.reserve(real.size() + fake.size());
  const std::size_t common = std::min(real.size(), fake.size());
  for (std::size_t i = 0; i < common; ++i) {
    stream.push_back(std::move(real[i]));
    stream.push_back(std::move(fake[i]));
  }
  for (std::size_t i = common; i < real.size(); ++i)
    stream.push_back(std::move(real[i]));
  for (std::size_t i = common; i < fake.size(); ++i)
    stream.push_back(std::move(fake[i]));
  return stream;
}

/// Mean BCE-with-logits loss and threshold-0.5 accuracy in evaluation mode.
/// A zero logit (sigmoid exactly 0.5) predicts label 0.
template <typename Real>
std::pair<double, double> evaluate_loss(const CedModel<Real> &model,
                                        const std::vector<LabeledPair> &pairs) {
  if (pairs.empty()) throw DataError("evaluate_loss: empty input");
  NoGradGuard guard;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const LabeledPair &lp : pairs) {
    const double x = static_cast<double>(model.classify_pair(lp.pair));
    loss += std::max(x, 0.0) - x * lp.label + std::log1p(std::exp(-std::abs(x)));
    const double pred = x > 0.0 ? 1.0 : 0.0;
    if (pred == lp.label) ++correct;
  }
  const double n = static_cast<double>(pairs.size());
  return {loss / n, static_cast<double>(correct) / n};
}

/// Adam over a parameter store, updating in registration order.
template <typename Real>
class Adam {
 public:
  Adam(ParamStore<Real> &params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto &[name, var] : params_->items) {
      m_.push_back(Tensor<double>::zeros(var.value().shape()));
      v_.push_back(Tensor<double>::zeros(var.value().shape()));
    }
  }

  void zero_grad() {
    for (auto &[name, var] : params_->items) var.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_->items.size(); ++i) {
      auto &var = params_->items[i].second;
      Tensor<Real> &w = var.mutable_value();
      const Tensor<Real> &g = var.grad();
      Tensor<double> &m = m_[i];
      Tensor<double> &v = v_[i];
      for (std::size_t k = 0; k < w.numel(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
        const double update =
            lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
        w[k] = static_cast<Real>(static_cast<double>(w[k]) - update);
      }
    }
  }

 private:
  ParamStore<Real> *params_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<double>> m_;
  std::vector<Tensor<double>> v_;
};

/// Full optimization loop. Splits sessions (never pairs) into train and
/// validation, trains with Adam, early-stops on validation loss, keeps the
/// best checkpoint at checkpoint_dir/best.ckpt, and leaves the model holding
/// the best-epoch weights. A checkpoint of the incoming weights is written
/// up front so a numeric abort always leaves a loadable last-good file.
template <typename Real>
std::vector<TrainRecord> train(CedModel<Real> &model,
                               const std::vector<Conversation> &corpus,
                               const TrainConfig &cfg) {
  cfg.validate();
  if (corpus.empty()) throw DataError("empty corpus: nothing to train on");
  if (corpus.size() < 2)
    throw DataError("train: need >= 2 sessions for a train/validation split");
  if (cfg.checkpoint_dir.empty())
    throw ConfigError("train: checkpoint_dir must be set");

  // session-level split
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(cfg.seed, {"val-split"}));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(cfg.val_fraction * static_cast<double>(corpus.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, corpus.size() - 1);

  std::vector<Conversation> val_set, train_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_set : train_set).push_back(corpus[order[i]]);
  }
  log::info("train: ", train_set.size(), " train / ", val_set.size(),
            " validation sessions");

  // Fixed validation stream (epoch-independent fake counterparts).
  TrainConfig val_cfg = cfg;
  val_cfg.seed = mix_seed(cfg.seed, {"val-stream"});
  const std::vector<LabeledPair> val_pairs =
      make_training_batches(val_set, val_cfg, 0);

  const std::filesystem::path best_path = cfg.checkpoint_dir / "best.ckpt";
  save_checkpoint(model, best_path);

  Adam<Real> opt(model.params(), cfg.learning_rate);
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improve = 0;
  std::vector<TrainRecord> history;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<LabeledPair> stream =
        make_training_batches(train_set, cfg, epoch);
    Rng dropout_rng(mix_seed(cfg.seed, "dropout", epoch, 0));
    RunContext ctx;
    ctx.train = true;
    ctx.rng = &dropout_rng;

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t off = 0; off < stream.size(); off += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, stream.size() - off);
      std::vector<Var<Real>> logits;
      std::vector<Real> labels;
      logits.reserve(nb);
      labels.reserve(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const LabeledPair &lp = stream[off + i];
        auto [lead, lead_mask] = CedModel<Real>::pair_input(
            lp.pair.leading, true, model.config().max_frames);
        auto [resp, resp_mask] = CedModel<Real>::pair_input(
            lp.pair.responding, false, model.config().max_frames);
        auto pv = model.forward_pair_var(lead, lead_mask, resp, resp_mask, ctx);
        logits.push_back(pv.logit);
        labels.push_back(static_cast<Real>(lp.label));
      }
      auto loss = bce_with_logits_mean(stack_scalars(logits), labels);
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv))
        throw NumericError(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            "; last-good checkpoint retained at " + best_path.string());
      opt.zero_grad();
      backward(loss);
      opt.step();
      loss_sum += lv * static_cast<double>(nb);
      seen += nb;
    }

    auto [val_loss, val_acc] = evaluate_loss(model, val_pairs);
    if (!std::isfinite(val_loss))
      throw NumericError(
          "non-finite validation loss at epoch " + std::to_string(epoch) +
          "; last-good checkpoint retained at " + best_path.string());

    TrainRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = val_loss;
    rec.val_accuracy = val_acc;
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    history.push_back(rec);
    log::info("epoch ", epoch, ": train_loss=", rec.train_loss,
              " val_loss=", val_loss, " val_acc=", val_acc);

    if (val_loss < best_val) {
      best_val = val_loss;
      epochs_since_improve = 0;
      save_checkpoint(model, best_path);
    } else if (++epochs_since_improve >= cfg.patience) {
      log::info("early stop after epoch ", epoch, " (no improvement in ",
                cfg.patience, " epochs)");
      break;
    }
  }

  model = load_checkpoint<Real>(best_path);
  return history;
}

}  // namespace ced
