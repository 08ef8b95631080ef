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
// Command-line entry point. Subcommands: synth, train, validate, ced,
// correlate, groups, attention. Exit codes: 0 success, 2 usage/config error,
// 3 data error, 4 numeric failure.
//
//------------------------------------------------------------------------------

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ced/analysis.hpp"
#include "ced/corpus.hpp"
#include "ced/entrainment.hpp"
#include "ced/errors.hpp"
#include "ced/io.hpp"
#include "ced/log.hpp"
#include "ced/manifest.hpp"
#include "ced/model.hpp"
#include "ced/stats.hpp"
#include "ced/train.hpp"
#include "ced/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Scalar = double;  // model arithmetic for the CLI

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool force = false;
};

json load_config_file(const std::string &path) {
  if (path.empty()) return json::object();
  json cfg;
  try {
    cfg = json::parse(ced::io::read_file(path));
  } catch (const json::exception &e) {
    throw ced::ConfigError("bad config file " + path + ": " + e.what());
  }
  if (!cfg.is_object())
    throw ced::ConfigError("config file must hold a JSON object");
  for (const auto &[key, value] : cfg.items()) {
    if (key != "model" && key != "train" && key != "synth" && key != "beta")
      throw ced::ConfigError("unknown config file key '" + key + "'");
  }
  return cfg;
}

/// Output directory with temp-then-rename discipline: files go into a
/// sibling ".partial" directory which is atomically moved into place, so a
/// partial run never masquerades as a complete one.
class OutputDir {
 public:
  OutputDir(fs::path final_dir, bool force)
      : final_(std::move(final_dir)), force_(force) {
    if (final_.empty()) throw ced::ConfigError("output directory not set");
    if (fs::exists(final_) && !force_)
      throw ced::ConfigError("output directory " + final_.string() +
                             " exists; pass --force to overwrite");
    tmp_ = final_;
    tmp_ += ".partial";
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }

  fs::path staging(const std::string &rel = "") const {
    return rel.empty() ? tmp_ : tmp_ / rel;
  }
  const fs::path &final_path() const { return final_; }

  void finalize() {
    if (fs::exists(final_)) {
      if (!force_)
        throw ced::ConfigError("output directory " + final_.string() +
                               " appeared during the run; pass --force");
      fs::remove_all(final_);
    }
    fs::rename(tmp_, final_);
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool force_ = false;
};

std::vector<std::string> list_dir_files(const fs::path &root) {
  std::vector<std::string> rels;
  for (const auto &entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file())
      rels.push_back(fs::relative(entry.path(), root).string());
  }
  std::sort(rels.begin(), rels.end());
  return rels;
}

void write_run_manifest(const OutputDir &out, const std::string &command,
                        const json &effective_config,
                        const std::map<std::string, std::uint64_t> &seeds,
                        const std::vector<std::string> &inputs) {
  ced::RunManifest m;
  m.command = command;
  m.effective_config = effective_config;
  m.seeds = seeds;
  for (const std::string &in : inputs)
    if (!in.empty()) m.input_paths.push_back(in);
  m.output_paths = list_dir_files(out.staging());
  m.output_paths.push_back("run_manifest.json");
  std::sort(m.output_paths.begin(), m.output_paths.end());
  m.write(out.staging("run_manifest.json"));
}

//------------------------------------------------------------------------------
// Option plumbing: CLI flag > config file > default.
//------------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::optional<std::size_t> sessions, turns, dim, frames_min, frames_max;
  std::optional<double> alpha, noise, frame_period;
};

ced::SynthConfig resolve_synth(const json &file_cfg, const SynthOpts &o,
                               std::uint64_t seed) {
  ced::SynthConfig cfg;
  if (file_cfg.contains("synth")) {
    const json &s = file_cfg.at("synth");
    for (const auto &[key, value] : s.items()) {
      if (key == "n_sessions") cfg.n_sessions = value.get<std::size_t>();
      else if (key == "turns_per_session") cfg.turns_per_session = value.get<std::size_t>();
      else if (key == "dim") cfg.dim = value.get<std::size_t>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "noise_scale") cfg.noise_scale = value.get<double>();
      else if (key == "frames_min") cfg.frames_min = value.get<std::size_t>();
      else if (key == "frames_max") cfg.frames_max = value.get<std::size_t>();
      else if (key == "frame_period") cfg.frame_period = value.get<double>();
      else if (key == "style_scale") cfg.style_scale = value.get<double>();
      else throw ced::ConfigError("unknown synth config key '" + key + "'");
    }
  }
  if (o.sessions) cfg.n_sessions = *o.sessions;
  if (o.turns) cfg.turns_per_session = *o.turns;
  if (o.dim) cfg.dim = *o.dim;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.noise) cfg.noise_scale = *o.noise;
  if (o.frames_min) cfg.frames_min = *o.frames_min;
  if (o.frames_max) cfg.frames_max = *o.frames_max;
  if (o.frame_period) cfg.frame_period = *o.frame_period;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

struct ModelOpts {
  std::optional<std::size_t> input_dim, conformer_units, transformer_units,
      heads, conformer_layers, cross_layers, conv_kernel, max_frames,
      conformer_ff_expansion, cross_ff_expansion, head_hidden;
  std::optional<double> dropout;
  std::optional<std::string> pooling;
  std::optional<bool> share_cross_weights;
};

/// corpus_dim, when nonzero, fills input_dim unless the user set it.
ced::ModelConfig resolve_model(const json &file_cfg, const ModelOpts &o,
                               std::size_t corpus_dim) {
  ced::ModelConfig cfg;
  if (file_cfg.contains("model"))
    cfg = ced::ModelConfig::from_json(file_cfg.at("model"));
  bool input_dim_set =
      file_cfg.contains("model") && file_cfg.at("model").contains("input_dim");
  if (o.input_dim) {
    cfg.input_dim = *o.input_dim;
    input_dim_set = true;
  }
  if (o.conformer_units) cfg.conformer_units = *o.conformer_units;
  if (o.transformer_units) cfg.transformer_units = *o.transformer_units;
  if (o.heads) cfg.heads = *o.heads;
  if (o.conformer_layers) cfg.conformer_layers = *o.conformer_layers;
  if (o.cross_layers) cfg.cross_layers = *o.cross_layers;
  if (o.conv_kernel) cfg.conv_kernel = *o.conv_kernel;
  if (o.max_frames) cfg.max_frames = *o.max_frames;
  if (o.conformer_ff_expansion)
    cfg.conformer_ff_expansion = *o.conformer_ff_expansion;
  if (o.cross_ff_expansion) cfg.cross_ff_expansion = *o.cross_ff_expansion;
  if (o.head_hidden) cfg.head_hidden = *o.head_hidden;
  if (o.dropout) cfg.dropout = *o.dropout;
  if (o.pooling) cfg.pooling = ced::pooling_from_name(*o.pooling);
  if (o.share_cross_weights) cfg.share_cross_weights = *o.share_cross_weights;
  if (!input_dim_set && corpus_dim > 0) cfg.input_dim = corpus_dim;
  cfg.validate();
  return cfg;
}

struct TrainOpts {
  std::string corpus, out;
  std::optional<double> lr, val_fraction;
  std::optional<std::size_t> batch_size, max_epochs, patience;
};

ced::TrainConfig resolve_train(const json &file_cfg, const TrainOpts &o,
                               std::uint64_t seed) {
  ced::TrainConfig cfg;
  if (file_cfg.contains("train"))
    cfg = ced::TrainConfig::from_json(file_cfg.at("train"));
  if (o.lr) cfg.learning_rate = *o.lr;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.max_epochs) cfg.max_epochs = *o.max_epochs;
  if (o.patience) cfg.patience = *o.patience;
  if (o.val_fraction) cfg.val_fraction = *o.val_fraction;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::vector<ced::Conversation> load_corpus_checked(const std::string &dir) {
  if (dir.empty()) throw ced::ConfigError("missing --corpus");
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw ced::DataError("no corpus manifest at " + dir + "/manifest.json");
  return ced::load_corpus(dir);
}

std::size_t corpus_dim(const std::vector<ced::Conversation> &corpus) {
  for (const auto &conv : corpus)
    if (!conv.features.empty()) return conv.features.front().dim();
  return 0;
}

ced::PairScorer make_scorer(const std::string &measure,
                            const ced::CedModel<Scalar> *model, double beta) {
  if (measure == "baseline1")
    return [beta](const ced::TurnPair &p) {
      return ced::baseline_smooth_l1(p, beta);
    };
  if (!model)
    throw ced::ConfigError("measure 'ced' needs --checkpoint");
  return [model, beta](const ced::TurnPair &p) {
    return ced::ced_pair(*model, p, beta);
  };
}

/// Directional session results for every session that has pairs in the
/// requested direction(s); sessions without such pairs are skipped with a
/// logged count.
std::vector<ced::CedResult> session_results(
    const std::vector<ced::Conversation> &corpus, const std::string &direction,
    const ced::PairScorer &score) {
  std::vector<ced::CedResult> results;
  std::size_t skipped = 0;
  for (const ced::Conversation &conv : corpus) {
    std::vector<std::pair<std::string, std::string>> wanted;
    if (direction == "both" || direction == "ab")
      wanted.emplace_back(conv.speaker_a, conv.speaker_b);
    if (direction == "both" || direction == "ba")
      wanted.emplace_back(conv.speaker_b, conv.speaker_a);
    for (const auto &[lead, resp] : wanted) {
      try {
        results.push_back(ced::session_distance(conv, lead, resp, score));
      } catch (const ced::DataError &) {
        ++skipped;
      }
    }
  }
  if (skipped > 0)
    ced::log::warn("skipped ", skipped,
                   " session-direction(s) without usable pairs");
  if (results.empty())
    throw ced::DataError("no session produced pairs in direction " + direction);
  return results;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

//------------------------------------------------------------------------------
// Subcommands
//------------------------------------------------------------------------------

int cmd_synth(const GlobalOpts &g, const SynthOpts &o) {
  const json file_cfg = load_config_file(g.config_path);
  const ced::SynthConfig cfg = resolve_synth(file_cfg, o, g.seed);

  OutputDir out(o.out, g.force);
  std::vector<ced::Conversation> corpus = ced::synth_corpus(cfg);
  ced::write_corpus(out.staging(), corpus);

  json eff;
  eff["n_sessions"] = cfg.n_sessions;
  eff["turns_per_session"] = cfg.turns_per_session;
  eff["dim"] = cfg.dim;
  eff["alpha"] = cfg.alpha;
  eff["noise_scale"] = cfg.noise_scale;
  eff["frames_min"] = cfg.frames_min;
  eff["frames_max"] = cfg.frames_max;
  eff["frame_period"] = cfg.frame_period;
  eff["style_scale"] = cfg.style_scale;
  eff["seed"] = cfg.seed;
  write_run_manifest(out, "synth", eff, {{"base", cfg.seed}}, {});
  out.finalize();
  ced::log::info("synth: wrote ", corpus.size(), " sessions to ",
                 out.final_path().string());
  return ced::exit_code::kOk;
}

int cmd_train(const GlobalOpts &g, const TrainOpts &to, const ModelOpts &mo) {
  const json file_cfg = load_config_file(g.config_path);
  std::vector<ced::Conversation> corpus = load_corpus_checked(to.corpus);
  const ced::ModelConfig mcfg = resolve_model(file_cfg, mo, corpus_dim(corpus));
  ced::TrainConfig tcfg = resolve_train(file_cfg, to, g.seed);

  OutputDir out(to.out, g.force);
  tcfg.checkpoint_dir = out.staging();

  const std::uint64_t init_seed = ced::mix_seed(g.seed, {"model-init-cli"});
  ced::CedModel<Scalar> model(mcfg, init_seed);
  ced::log::info("train: model has ", model.parameter_count(), " parameters");

  std::vector<ced::TrainRecord> history = ced::train(model, corpus, tcfg);

  std::string hist_lines;
  for (const auto &rec : history) {
    hist_lines += rec.to_json(true).dump();
    hist_lines += '\n';
  }
  ced::io::write_file_atomic(out.staging("history.jsonl"), hist_lines);

  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double best_acc = 0.0;
  for (const auto &rec : history) {
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best_acc = rec.val_accuracy;
      best_epoch = rec.epoch;
    }
  }
  json report;
  report["type"] = "train_report";
  report["epochs_run"] = history.size();
  report["best_epoch"] = best_epoch;
  report["best_val_loss"] = best_val;
  report["best_val_accuracy"] = best_acc;
  report["final_train_loss"] = history.back().train_loss;
  report["parameter_count"] = model.parameter_count();
  json hist = json::array();
  for (const auto &rec : history) hist.push_back(rec.to_json(false));
  report["history"] = std::move(hist);
  report["reference"] = ced::reference_annotations();
  ced::io::write_file_atomic(out.staging("report.json"), report.dump(2) + "\n");

  json eff;
  eff["model"] = mcfg.to_json();
  eff["train"] = tcfg.to_json();
  eff["train"]["checkpoint_dir"] = out.final_path().string();
  write_run_manifest(out, "train", eff,
                     {{"base", g.seed}, {"model_init", init_seed}},
                     {to.corpus});
  out.finalize();
  ced::log::info("train: best epoch ", best_epoch, " val_loss ",
                 fixed(best_val), " val_acc ", fixed(best_acc));
  return ced::exit_code::kOk;
}

struct ValidateOpts {
  std::string checkpoint, corpus, out;
  std::size_t repeats = 30;
  std::string measure = "ced";
  bool random_init = false;
};

int cmd_validate(const GlobalOpts &g, const ValidateOpts &o,
                 const ModelOpts &mo) {
  const json file_cfg = load_config_file(g.config_path);
  std::vector<ced::Conversation> corpus = load_corpus_checked(o.corpus);
  const double beta =
      file_cfg.contains("beta") ? file_cfg.at("beta").get<double>() : 1.0;

  std::optional<ced::CedModel<Scalar>> model;
  std::map<std::string, std::uint64_t> seeds{{"base", g.seed}};
  if (o.measure == "ced") {
    if (o.random_init) {
      ced::ModelConfig mcfg =
          o.checkpoint.empty()
              ? resolve_model(file_cfg, mo, corpus_dim(corpus))
              : ced::peek_checkpoint_config(o.checkpoint);
      const std::uint64_t init_seed = ced::mix_seed(g.seed, {"random-init"});
      seeds["model_init"] = init_seed;
      model.emplace(mcfg, init_seed);
    } else {
      if (o.checkpoint.empty())
        throw ced::ConfigError("validate: need --checkpoint or --random-init");
      model.emplace(ced::load_checkpoint<Scalar>(o.checkpoint));
    }
  }

  OutputDir out(o.out, g.force);
  const ced::PairScorer scorer =
      make_scorer(o.measure, model ? &*model : nullptr, beta);
  ced::RealFakeReport report = ced::real_fake_experiment_scored(
      corpus, scorer, o.repeats, g.seed, fs::path(o.corpus).filename().string(),
      o.measure, g.workers);

  ced::io::write_file_atomic(out.staging("report.json"),
                             report.to_json().dump(2) + "\n");
  std::string summary;
  summary += "real/fake classification (" + report.measure + ")\n";
  summary += "  sessions: " + std::to_string(report.sessions_used) +
             "  repeats: " + std::to_string(report.repeats) + "\n";
  summary += "  mean accuracy: " + fixed(report.mean_accuracy) + "  stddev: " +
             fixed(report.stddev) + "\n";
  ced::io::write_file_atomic(out.staging("summary.txt"), summary);

  json eff;
  eff["measure"] = o.measure;
  eff["repeats"] = o.repeats;
  eff["random_init"] = o.random_init;
  eff["beta"] = beta;
  eff["checkpoint"] = o.checkpoint;
  write_run_manifest(out, "validate", eff, seeds, {o.corpus, o.checkpoint});
  out.finalize();
  ced::log::info("validate: mean accuracy ", fixed(report.mean_accuracy),
                 " over ", report.repeats, " repeats");
  return ced::exit_code::kOk;
}

struct CedCmdOpts {
  std::string checkpoint, corpus, out;
  std::string direction = "both";
  std::string measure = "ced";
};

int cmd_ced(const GlobalOpts &g, const CedCmdOpts &o) {
  const json file_cfg = load_config_file(g.config_path);
  std::vector<ced::Conversation> corpus = load_corpus_checked(o.corpus);
  const double beta =
      file_cfg.contains("beta") ? file_cfg.at("beta").get<double>() : 1.0;

  std::optional<ced::CedModel<Scalar>> model;
  if (o.measure == "ced") {
    if (o.checkpoint.empty()) throw ced::ConfigError("ced: need --checkpoint");
    model.emplace(ced::load_checkpoint<Scalar>(o.checkpoint));
  }

  OutputDir out(o.out, g.force);
  const ced::PairScorer scorer =
      make_scorer(o.measure, model ? &*model : nullptr, beta);
  std::vector<ced::CedResult> results =
      session_results(corpus, o.direction, scorer);
  ced::io::write_file_atomic(out.staging("ced.jsonl"),
                             ced::ced_results_to_jsonl(results));

  json eff;
  eff["direction"] = o.direction;
  eff["measure"] = o.measure;
  eff["beta"] = beta;
  eff["checkpoint"] = o.checkpoint;
  write_run_manifest(out, "ced", eff, {{"base", g.seed}},
                     {o.corpus, o.checkpoint});
  out.finalize();
  ced::log::info("ced: wrote ", results.size(), " session records");
  return ced::exit_code::kOk;
}

struct CorrelateOpts {
  std::string checkpoint, corpus, out, ced_report;
  std::vector<std::string> scores;
  std::string direction = "both";
};

int cmd_correlate(const GlobalOpts &g, const CorrelateOpts &o) {
  const json file_cfg = load_config_file(g.config_path);
  std::vector<ced::Conversation> corpus = load_corpus_checked(o.corpus);
  const double beta =
      file_cfg.contains("beta") ? file_cfg.at("beta").get<double>() : 1.0;

  std::vector<ced::CedResult> results;
  if (!o.ced_report.empty()) {
    results = ced::ced_results_from_jsonl(ced::io::read_file(o.ced_report));
  } else {
    if (o.checkpoint.empty())
      throw ced::ConfigError("correlate: need --checkpoint or --ced");
    ced::CedModel<Scalar> model = ced::load_checkpoint<Scalar>(o.checkpoint);
    results = session_results(
        corpus, o.direction,
        [&](const ced::TurnPair &p) { return ced::ced_pair(model, p, beta); });
  }

  OutputDir out(o.out, g.force);
  std::vector<ced::CorrelationReport> reports = ced::correlate_scores(
      results, ced::metadata_by_session(corpus), o.scores);

  std::string lines, summary;
  summary += "score correlations (significance: p < 0.05)\n";
  for (const auto &rep : reports) {
    lines += rep.to_json().dump();
    lines += '\n';
    summary += "  " + rep.score_name + "  " + rep.direction +
               "  n=" + std::to_string(rep.n) + "  rho=" + fixed(rep.rho) +
               "  p=" + fixed(rep.p, 6) + (rep.significant ? "  *" : "") + "\n";
  }
  ced::io::write_file_atomic(out.staging("correlations.jsonl"), lines);
  ced::io::write_file_atomic(out.staging("summary.txt"), summary);

  json eff;
  eff["scores"] = o.scores;
  eff["direction"] = o.direction;
  eff["beta"] = beta;
  eff["ced_report"] = o.ced_report;
  eff["checkpoint"] = o.checkpoint;
  write_run_manifest(out, "correlate", eff, {{"base", g.seed}},
                     {o.corpus, o.checkpoint, o.ced_report});
  out.finalize();
  return ced::exit_code::kOk;
}

struct GroupsOpts {
  std::string checkpoint, corpus, out, ced_report;
  std::string direction = "both";
};

int cmd_groups(const GlobalOpts &g, const GroupsOpts &o) {
  const json file_cfg = load_config_file(g.config_path);
  std::vector<ced::Conversation> corpus = load_corpus_checked(o.corpus);
  const double beta =
      file_cfg.contains("beta") ? file_cfg.at("beta").get<double>() : 1.0;

  std::vector<ced::CedResult> results;
  if (!o.ced_report.empty()) {
    results = ced::ced_results_from_jsonl(ced::io::read_file(o.ced_report));
  } else {
    if (o.checkpoint.empty())
      throw ced::ConfigError("groups: need --checkpoint or --ced");
    ced::CedModel<Scalar> model = ced::load_checkpoint<Scalar>(o.checkpoint);
    results = session_results(
        corpus, o.direction,
        [&](const ced::TurnPair &p) { return ced::ced_pair(model, p, beta); });
  }

  OutputDir out(o.out, g.force);
  std::vector<ced::GroupStat> stats =
      ced::group_stats(results, ced::metadata_by_session(corpus));

  std::string lines, summary;
  summary += "mean absolute CED by gender x age band x direction\n";
  for (const auto &s : stats) {
    lines += s.to_json().dump();
    lines += '\n';
    summary += "  " + s.gender + "  band" + std::to_string(s.age_band) + "  " +
               s.direction + "  n=" + std::to_string(s.n) + "  " +
               fixed(s.mean_abs_ced) + "\n";
  }
  ced::io::write_file_atomic(out.staging("groups.jsonl"), lines);
  ced::io::write_file_atomic(out.staging("summary.txt"), summary);

  json eff;
  eff["direction"] = o.direction;
  eff["beta"] = beta;
  eff["ced_report"] = o.ced_report;
  eff["checkpoint"] = o.checkpoint;
  write_run_manifest(out, "groups", eff, {{"base", g.seed}},
                     {o.corpus, o.checkpoint, o.ced_report});
  out.finalize();
  return ced::exit_code::kOk;
}

struct AttentionOpts {
  std::string checkpoint, corpus, out, session;
  std::size_t pair_index = 0;
};

int cmd_attention(const GlobalOpts &g, const AttentionOpts &o) {
  std::vector<ced::Conversation> corpus = load_corpus_checked(o.corpus);
  if (o.checkpoint.empty())
    throw ced::ConfigError("attention: need --checkpoint");
  ced::CedModel<Scalar> model = ced::load_checkpoint<Scalar>(o.checkpoint);

  const ced::Conversation *conv = nullptr;
  if (o.session.empty()) {
    conv = &corpus.front();
  } else {
    for (const auto &c : corpus)
      if (c.session_id == o.session) conv = &c;
    if (!conv)
      throw ced::DataError("session '" + o.session + "' not found in corpus");
  }
  std::vector<ced::TurnPair> pairs = ced::make_turn_pairs(*conv);
  if (o.pair_index >= pairs.size())
    throw ced::DataError("pair index " + std::to_string(o.pair_index) +
                         " out of range; session " + conv->session_id +
                         " has " + std::to_string(pairs.size()) + " pairs");

  OutputDir out(o.out, g.force);
  ced::export_attention(model, pairs[o.pair_index], out.staging());

  json eff;
  eff["session"] = conv->session_id;
  eff["pair_index"] = o.pair_index;
  eff["checkpoint"] = o.checkpoint;
  write_run_manifest(out, "attention", eff, {{"base", g.seed}},
                     {o.corpus, o.checkpoint});
  out.finalize();
  return ced::exit_code::kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"contextual entrainment distance toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", std::string(ced::kToolVersion));

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file")
      ->envname("CED_CONFIG");
  app.add_option("--seed", g.seed, "base RNG seed (default 0)");
  app.add_option("--workers", g.workers, "worker threads for analysis")
      ->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "overwrite existing output directories");

  // synth
  SynthOpts so;
  auto *synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", so.out, "output corpus directory")->required();
  synth->add_option("--sessions", so.sessions, "number of sessions");
  synth->add_option("--turns", so.turns, "turns per session");
  synth->add_option("--dim", so.dim, "feature dimensionality");
  synth->add_option("--alpha", so.alpha, "entrainment strength in [0,1]");
  synth->add_option("--noise", so.noise, "frame noise scale");
  synth->add_option("--frames-min", so.frames_min, "minimum frames per turn");
  synth->add_option("--frames-max", so.frames_max, "maximum frames per turn");
  synth->add_option("--frame-period", so.frame_period, "seconds per frame");

  // shared model overrides (train, validate --random-init)
  ModelOpts mo;
  auto add_model_opts = [&mo](CLI::App *cmd) {
    cmd->add_option("--input-dim", mo.input_dim,
                    "feature dim (default: taken from the corpus)");
    cmd->add_option("--conformer-units", mo.conformer_units, "");
    cmd->add_option("--transformer-units", mo.transformer_units, "");
    cmd->add_option("--heads", mo.heads, "");
    cmd->add_option("--conformer-layers", mo.conformer_layers, "");
    cmd->add_option("--cross-layers", mo.cross_layers, "");
    cmd->add_option("--conv-kernel", mo.conv_kernel, "");
    cmd->add_option("--dropout", mo.dropout, "");
    cmd->add_option("--max-frames", mo.max_frames, "");
    cmd->add_option("--pooling", mo.pooling, "mean|first");
    cmd->add_option("--conformer-ff-expansion", mo.conformer_ff_expansion, "");
    cmd->add_option("--cross-ff-expansion", mo.cross_ff_expansion, "");
    cmd->add_option("--head-hidden", mo.head_hidden, "");
    cmd->add_option("--share-cross-weights", mo.share_cross_weights, "");
  };

  // train
  TrainOpts to;
  auto *train = app.add_subcommand("train", "train the real/fake classifier");
  train->add_option("--corpus", to.corpus, "corpus directory")->required();
  train->add_option("--out", to.out, "output directory")->required();
  train->add_option("--lr", to.lr, "learning rate");
  train->add_option("--batch-size", to.batch_size, "");
  train->add_option("--max-epochs", to.max_epochs, "");
  train->add_option("--patience", to.patience, "early stopping patience");
  train->add_option("--val-fraction", to.val_fraction, "");
  add_model_opts(train);

  // validate
  ValidateOpts vo;
  auto *validate =
      app.add_subcommand("validate", "repeated real/fake classification");
  validate->add_option("--checkpoint", vo.checkpoint, "trained checkpoint");
  validate->add_option("--corpus", vo.corpus, "corpus directory")->required();
  validate->add_option("--out", vo.out, "output directory")->required();
  validate->add_option("--repeats", vo.repeats, "shuffle repeats (default 30)");
  validate->add_option("--measure", vo.measure, "ced|baseline1")
      ->check(CLI::IsMember({"ced", "baseline1"}));
  validate->add_flag("--random-init", vo.random_init,
                     "use freshly initialized weights instead of a checkpoint");
  add_model_opts(validate);

  // ced
  CedCmdOpts co;
  auto *cedc = app.add_subcommand("ced", "per-session directional distances");
  cedc->add_option("--checkpoint", co.checkpoint, "trained checkpoint");
  cedc->add_option("--corpus", co.corpus, "corpus directory")->required();
  cedc->add_option("--out", co.out, "output directory")->required();
  cedc->add_option("--direction", co.direction, "both|ab|ba")
      ->check(CLI::IsMember({"both", "ab", "ba"}));
  cedc->add_option("--measure", co.measure, "ced|baseline1")
      ->check(CLI::IsMember({"ced", "baseline1"}));

  // correlate
  CorrelateOpts ro;
  auto *correlate =
      app.add_subcommand("correlate", "Pearson correlation against scores");
  correlate->add_option("--checkpoint", ro.checkpoint, "trained checkpoint");
  correlate->add_option("--ced", ro.ced_report,
                        "existing ced.jsonl (skips the model)");
  correlate->add_option("--corpus", ro.corpus, "corpus directory")->required();
  correlate->add_option("--out", ro.out, "output directory")->required();
  correlate->add_option("--score", ro.scores, "metadata score name")
      ->required();
  correlate->add_option("--direction", ro.direction, "both|ab|ba")
      ->check(CLI::IsMember({"both", "ab", "ba"}));

  // groups
  GroupsOpts go;
  auto *groups =
      app.add_subcommand("groups", "mean |CED| by gender and age band");
  groups->add_option("--checkpoint", go.checkpoint, "trained checkpoint");
  groups->add_option("--ced", go.ced_report,
                     "existing ced.jsonl (skips the model)");
  groups->add_option("--corpus", go.corpus, "corpus directory")->required();
  groups->add_option("--out", go.out, "output directory")->required();
  groups->add_option("--direction", go.direction, "both|ab|ba")
      ->check(CLI::IsMember({"both", "ab", "ba"}));

  // attention
  AttentionOpts ao;
  auto *attention =
      app.add_subcommand("attention", "export cross-attention weights");
  attention->add_option("--checkpoint", ao.checkpoint, "trained checkpoint");
  attention->add_option("--corpus", ao.corpus, "corpus directory")->required();
  attention->add_option("--out", ao.out, "output directory")->required();
  attention->add_option("--session", ao.session,
                        "session id (default: first in corpus)");
  attention->add_option("--pair", ao.pair_index, "pair index within session");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ced::exit_code::kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(g, so);
    if (train->parsed()) return cmd_train(g, to, mo);
    if (validate->parsed()) return cmd_validate(g, vo, mo);
    if (cedc->parsed()) return cmd_ced(g, co);
    if (correlate->parsed()) return cmd_correlate(g, ro);
    if (groups->parsed()) return cmd_groups(g, go);
    if (attention->parsed()) return cmd_attention(g, ao);
    std::cerr << "no subcommand selected" << std::endl;
    return ced::exit_code::kUsage;
  } catch (const ced::ConfigError &e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return ced::exit_code::kUsage;
  } catch (const ced::NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << std::endl;
    return ced::exit_code::kNumeric;
  } catch (const ced::DataError &e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return ced::exit_code::kData;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return ced::exit_code::kData;
  }
}
