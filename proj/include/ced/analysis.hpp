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
// Evaluation protocols: repeated real/fake session classification, score
// correlation, demographic group statistics, and attention export.
//
//------------------------------------------------------------------------------
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ced/corpus.hpp"
#include "ced/entrainment.hpp"
#include "ced/errors.hpp"
#include "ced/image.hpp"
#include "ced/log.hpp"
#include "ced/model.hpp"
#include "ced/parallel.hpp"
#include "ced/rng.hpp"
#include "ced/stats.hpp"

namespace ced {

/// Published results on the original corpora, carried as annotations in
/// report files. Those corpora are not distributable, so these numbers are
/// context, not targets.
inline nlohmann::json reference_annotations() {
  nlohmann::json ref;
  ref["note"] =
      "published evaluation on the original non-distributable corpora";
  ref["real_fake_accuracy"]["ced"] = {{"fisher", 92.13}, {"adosmod3", 95.66}};
  ref["real_fake_accuracy"]["baseline1_smooth_l1"] = {{"fisher", 80.52},
                                                      {"adosmod3", 82.22}};
  ref["score_correlations"] = {
      {"vineland_communication_pc", {{"rho", -0.158}, {"p", 0.003}}},
      {"css_pc", {{"rho", 0.222}, {"p", 0.004}}}};
  return ref;
}

//------------------------------------------------------------------------------
// Real vs fake classification
//------------------------------------------------------------------------------

struct RealFakeReport {
  std::string corpus_id;
  std::string measure;  // "ced" or "baseline1"
  std::size_t repeats = 0;
  std::vector<double> per_repeat_accuracy;
  double mean_accuracy = 0.0;
  double stddev = 0.0;  // sample stddev over repeats
  std::size_t sessions_used = 0;
  std::size_t sessions_skipped = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["type"] = "real_fake_report";
    j["corpus_id"] = corpus_id;
    j["measure"] = measure;
    j["repeats"] = repeats;
    j["per_repeat_accuracy"] = per_repeat_accuracy;
    j["mean_accuracy"] = mean_accuracy;
    j["stddev"] = stddev;
    j["sessions_used"] = sessions_used;
    j["sessions_skipped"] = sessions_skipped;
    j["reference"] = reference_annotations();
    return j;
  }
};

/// A session counts as correctly classified when its real mean pair distance
/// is strictly below that of a freshly shuffled counterpart; ties count as
/// incorrect. One shuffle per (repeat, session), seeded deterministically.
inline RealFakeReport real_fake_experiment_scored(
    const std::vector<Conversation> &corpus, const PairScorer &score,
    std::size_t repeats, std::uint64_t seed, const std::string &corpus_id,
    const std::string &measure, std::size_t workers = 1) {
  if (repeats < 1) throw ConfigError("real_fake_experiment: repeats must be >= 1");

  std::vector<const Conversation *> usable;
  std::size_t skipped = 0;
  for (const Conversation &conv : corpus) {
    if (conv.turns.size() < 3 || make_turn_pairs(conv).empty()) {
      ++skipped;
      continue;
    }
    usable.push_back(&conv);
  }
  if (skipped > 0)
    log::warn("real_fake_experiment: skipped ", skipped,
              " degenerate session(s)");
  if (usable.empty())
    throw DataError("empty input: every session was degenerate");

  // Real scores are repeat-independent; compute them once.
  std::vector<double> real_scores(usable.size());
  parallel_for(usable.size(), workers, [&](std::size_t i) {
    real_scores[i] = session_mean_distance(*usable[i], score);
  });

  RealFakeReport report;
  report.corpus_id = corpus_id;
  report.measure = measure;
  report.repeats = repeats;
  report.sessions_used = usable.size();
  report.sessions_skipped = skipped;
  report.per_repeat_accuracy.resize(repeats);

  for (std::size_t r = 0; r < repeats; ++r) {
    std::vector<unsigned> correct(usable.size(), 0);
    parallel_for(usable.size(), workers, [&](std::size_t i) {
      Conversation fake =
          shuffle_session(*usable[i], mix_seed(seed, "real-fake", r, i));
      const double fake_score = session_mean_distance(fake, score);
      correct[i] = real_scores[i] < fake_score ? 1u : 0u;
    });
    std::size_t hits = 0;
    for (unsigned c : correct) hits += c;
    report.per_repeat_accuracy[r] =
        static_cast<double>(hits) / static_cast<double>(usable.size());
  }
  report.mean_accuracy = mean(report.per_repeat_accuracy);
  report.stddev = sample_stddev(report.per_repeat_accuracy);
  return report;
}

template <typename Real>
RealFakeReport real_fake_experiment(const CedModel<Real> &model,
                                    const std::vector<Conversation> &corpus,
                                    std::size_t repeats, std::uint64_t seed,
                                    const std::string &corpus_id = "corpus",
                                    std::size_t workers = 1) {
  PairScorer score = [&model](const TurnPair &p) { return ced_pair(model, p); };
  return real_fake_experiment_scored(corpus, score, repeats, seed, corpus_id,
                                     "ced", workers);
}

//------------------------------------------------------------------------------
// Score correlation
//------------------------------------------------------------------------------

struct CorrelationReport {
  std::string score_name;
  std::string direction;
  std::size_t n = 0;
  double rho = 0.0;
  double p = 1.0;
  bool significant = false;  // p < 0.05
  std::size_t sessions_skipped = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["type"] = "correlation_report";
    j["score_name"] = score_name;
    j["direction"] = direction;
    j["n"] = n;
    j["rho"] = rho;
    j["p_value"] = p;
    j["significant"] = significant;
    j["sessions_skipped"] = sessions_skipped;
    return j;
  }
};

inline std::map<std::string, SessionMetadata> metadata_by_session(
    const std::vector<Conversation> &corpus) {
  std::map<std::string, SessionMetadata> m;
  for (const Conversation &conv : corpus) m[conv.session_id] = conv.metadata;
  return m;
}

/// One report per (score name, direction present in the CED list). Sessions
/// missing the score are skipped with a logged count; fewer than 3 usable
/// sessions for a report is an error.
inline std::vector<CorrelationReport> correlate_scores(
    const std::vector<CedResult> &ced,
    const std::map<std::string, SessionMetadata> &metadata,
    const std::vector<std::string> &score_names) {
  if (score_names.empty())
    throw ConfigError("correlate_scores: no score names given");

  std::vector<std::string> directions;
  for (const CedResult &r : ced) {
    if (std::find(directions.begin(), directions.end(), r.direction()) ==
        directions.end())
      directions.push_back(r.direction());
  }
  std::sort(directions.begin(), directions.end());

  std::vector<CorrelationReport> reports;
  for (const std::string &score_name : score_names) {
    for (const std::string &direction : directions) {
      std::vector<double> xs, ys;
      std::size_t skipped = 0;
      for (const CedResult &r : ced) {
        if (r.direction() != direction) continue;
        auto mit = metadata.find(r.session_id);
        if (mit == metadata.end() ||
            !mit->second.scores.count(score_name)) {
          ++skipped;
          continue;
        }
        xs.push_back(r.session_ced);
        ys.push_back(mit->second.scores.at(score_name));
      }
      if (skipped > 0)
        log::warn("correlate: skipped ", skipped, " session(s) without score '",
                  score_name, "'");
      if (xs.size() < 3)
        throw DataError("insufficient data for score '" + score_name +
                        "' direction " + direction + ": " +
                        std::to_string(xs.size()) + " usable sessions");
      PearsonResult pr = pearson(xs, ys);
      CorrelationReport rep;
      rep.score_name = score_name;
      rep.direction = direction;
      rep.n = pr.n;
      rep.rho = pr.rho;
      rep.p = pr.p;
      rep.significant = pr.p < 0.05;
      rep.sessions_skipped = skipped;
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

//------------------------------------------------------------------------------
// Group statistics
//------------------------------------------------------------------------------

struct GroupStat {
  std::string gender;
  int age_band = 0;  // 1: <=5, 2: (5,10], 3: >10
  std::string direction;
  double mean_abs_ced = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["type"] = "group_stat";
    j["gender"] = gender;
    j["age_band"] = age_band;
    j["direction"] = direction;
    j["mean_abs_ced"] = mean_abs_ced;
    j["n"] = n;
    return j;
  }
};

/// Age bands with boundaries assigned to the lower band: <=5, (5,10], >10.
inline int age_band(double age) {
  if (age <= 5.0) return 1;
  if (age <= 10.0) return 2;
  return 3;
}

inline std::vector<GroupStat> group_stats(
    const std::vector<CedResult> &ced,
    const std::map<std::string, SessionMetadata> &metadata) {
  std::map<std::tuple<std::string, int, std::string>,
           std::pair<double, std::size_t>>
      acc;
  std::size_t skipped = 0;
  for (const CedResult &r : ced) {
    auto mit = metadata.find(r.session_id);
    if (mit == metadata.end() || mit->second.gender.empty() ||
        !mit->second.has_age()) {
      ++skipped;
      continue;
    }
    auto key = std::make_tuple(mit->second.gender, age_band(mit->second.age),
                               r.direction());
    auto &slot = acc[key];
    slot.first += std::abs(r.session_ced);
    slot.second += 1;
  }
  if (skipped > 0)
    log::warn("group_stats: excluded ", skipped,
              " session(s) missing gender or age");

  std::vector<GroupStat> stats;
  for (const auto &[key, slot] : acc) {
    GroupStat g;
    g.gender = std::get<0>(key);
    g.age_band = std::get<1>(key);
    g.direction = std::get<2>(key);
    g.n = slot.second;
    g.mean_abs_ced = slot.first / static_cast<double>(slot.second);
    stats.push_back(std::move(g));
  }
  return stats;  // std::map iteration keeps rows sorted by (gender, band, dir)
}

//------------------------------------------------------------------------------
// Attention export
//------------------------------------------------------------------------------

/// Writes each captured cross-attention record as a raw little-endian float
/// matrix file plus a JSON shape sidecar and a heatmap image (heads tiled
/// horizontally, values scaled by the record maximum for display only).
/// Returns the written paths.
template <typename Real>
std::vector<std::filesystem::path> export_attention(
    const CedModel<Real> &model, const TurnPair &pair,
    const std::filesystem::path &out_dir) {
  std::vector<AttentionRecord<Real>> records;
  model.extract_embeddings(pair, &records);

  std::vector<std::filesystem::path> written;
  std::filesystem::create_directories(out_dir);
  for (const AttentionRecord<Real> &rec : records) {
    const std::string base =
        cross_layer_name(rec.layer_id) + "." + std::to_string(rec.layer_index);
    const std::size_t heads = rec.weights.dim(0);
    const std::size_t tq = rec.weights.dim(1);
    const std::size_t tk = rec.weights.dim(2);

    std::string blob;
    blob.reserve(rec.weights.numel() * 4);
    for (std::size_t k = 0; k < rec.weights.numel(); ++k)
      io::put_f32(blob, static_cast<float>(rec.weights[k]));
    io::write_file_atomic(out_dir / (base + ".bin"), blob);
    written.push_back(out_dir / (base + ".bin"));

    nlohmann::json meta;
    meta["layer_id"] = cross_layer_name(rec.layer_id);
    meta["layer_index"] = rec.layer_index;
    meta["shape"] = {heads, tq, tk};
    meta["dtype"] = "f32-le";
    meta["session_id"] = pair.session_id;
    meta["pair_index"] = pair.pair_index;
    io::write_file_atomic(out_dir / (base + ".json"), meta.dump(2) + "\n");
    written.push_back(out_dir / (base + ".json"));

    // heads side by side with a one-column gap
    Tensor<double> img({tq, heads * tk + (heads - 1)});
    double vmax = 0.0;
    for (std::size_t k = 0; k < rec.weights.numel(); ++k)
      vmax = std::max(vmax, static_cast<double>(rec.weights[k]));
    if (vmax <= 0.0) vmax = 1.0;
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < tq; ++i)
        for (std::size_t j = 0; j < tk; ++j)
          img(i, h * (tk + 1) + j) =
              static_cast<double>(rec.weights(h, i, j)) / vmax;
    write_heatmap_ppm(out_dir / (base + ".ppm"), img);
    written.push_back(out_dir / (base + ".ppm"));
  }
  return written;
}

}  // namespace ced
