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
// CED proper: smooth-L1 distance between pooled cross-encoder embeddings,
// aggregated per turn pair and per session, plus the raw-feature baseline.
//
//------------------------------------------------------------------------------
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ced/corpus.hpp"
#include "ced/errors.hpp"
#include "ced/model.hpp"
#include "ced/tensor.hpp"

namespace ced {

inline constexpr double kDefaultSmoothL1Beta = 1.0;

/// Piecewise smooth-L1 distance: per coordinate 0.5 d^2 / beta for |d| < beta,
/// |d| - 0.5 beta otherwise, summed over coordinates.
inline double smooth_l1(const double *u, const double *v, std::size_t n,
                        double beta = kDefaultSmoothL1Beta) {
  if (!(beta > 0.0)) throw ConfigError("smooth_l1: beta must be > 0");
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = std::abs(u[k] - v[k]);
    total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  return total;
}

inline double smooth_l1(const std::vector<double> &u,
                        const std::vector<double> &v,
                        double beta = kDefaultSmoothL1Beta) {
  if (u.size() != v.size())
    throw DataError("smooth_l1: length mismatch (" + std::to_string(u.size()) +
                    " vs " + std::to_string(v.size()) + ")");
  return smooth_l1(u.data(), v.data(), u.size(), beta);
}

template <typename Real>
double smooth_l1(const Tensor<Real> &u, const Tensor<Real> &v,
                 double beta = kDefaultSmoothL1Beta) {
  if (u.numel() != v.numel())
    throw DataError("smooth_l1: length mismatch (" + std::to_string(u.numel()) +
                    " vs " + std::to_string(v.numel()) + ")");
  std::vector<double> ud(u.numel()), vd(v.numel());
  for (std::size_t k = 0; k < u.numel(); ++k) {
    ud[k] = static_cast<double>(u[k]);
    vd[k] = static_cast<double>(v[k]);
  }
  return smooth_l1(ud.data(), vd.data(), ud.size(), beta);
}

/// Directional per-session CED summary.
struct CedResult {
  std::string session_id;
  std::string lead_speaker;  // direction X -> Y
  std::string resp_speaker;
  std::vector<std::pair<std::size_t, double>> pair_distances;
  double session_ced = 0.0;

  std::string direction() const { return lead_speaker + "->" + resp_speaker; }
};

/// CED for a single pair: smooth-L1 between the pooled cross-encoder
/// embeddings of the two turns.
template <typename Real>
double ced_pair(const CedModel<Real> &model, const TurnPair &pair,
                double beta = kDefaultSmoothL1Beta) {
  EmbeddingPair<Real> emb = model.extract_embeddings(pair);
  return smooth_l1(emb.pooled_lead, emb.pooled_resp, beta);
}

/// Baseline 1: smooth-L1 between mean-pooled raw feature frames, no model.
inline double baseline_smooth_l1(const TurnPair &pair,
                                 double beta = kDefaultSmoothL1Beta) {
  const TensorF &a = *pair.leading.frames;
  const TensorF &b = *pair.responding.frames;
  if (a.cols() != b.cols())
    throw DataError("baseline_smooth_l1: feature dim mismatch");
  std::vector<double> pa(a.cols(), 0.0), pb(b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) pa[j] += a(i, j);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) pb[j] += b(i, j);
  for (double &v : pa) v /= static_cast<double>(a.rows());
  for (double &v : pb) v /= static_cast<double>(b.rows());
  return smooth_l1(pa, pb, beta);
}

using PairScorer = std::function<double(const TurnPair &)>;

/// Aggregates a pair scorer over exactly the session's pairs in direction
/// lead -> resp. Throws when the session has no pairs in that direction.
inline CedResult session_distance(const Conversation &conv,
                                  const std::string &lead_speaker,
                                  const std::string &resp_speaker,
                                  const PairScorer &score) {
  CedResult r;
  r.session_id = conv.session_id;
  r.lead_speaker = lead_speaker;
  r.resp_speaker = resp_speaker;
  double total = 0.0;
  for (const TurnPair &pair : make_turn_pairs(conv)) {
    if (pair.lead_speaker != lead_speaker ||
        pair.resp_speaker != resp_speaker)
      continue;
    const double d = score(pair);
    r.pair_distances.emplace_back(pair.pair_index, d);
    total += d;
  }
  if (r.pair_distances.empty())
    throw DataError("session " + conv.session_id + " has no pairs in direction " +
                    lead_speaker + "->" + resp_speaker);
  r.session_ced = total / static_cast<double>(r.pair_distances.size());
  return r;
}

template <typename Real>
CedResult ced_session(const CedModel<Real> &model, const Conversation &conv,
                      const std::string &lead_speaker,
                      const std::string &resp_speaker,
                      double beta = kDefaultSmoothL1Beta) {
  return session_distance(conv, lead_speaker, resp_speaker,
                          [&](const TurnPair &p) {
                            return ced_pair(model, p, beta);
                          });
}

inline CedResult baseline_session(const Conversation &conv,
                                  const std::string &lead_speaker,
                                  const std::string &resp_speaker,
                                  double beta = kDefaultSmoothL1Beta) {
  return session_distance(conv, lead_speaker, resp_speaker,
                          [&](const TurnPair &p) {
                            return baseline_smooth_l1(p, beta);
                          });
}

/// Mean of a pair scorer over all consecutive pairs of a session, both
/// directions together (the real/fake classification statistic).
inline double session_mean_distance(const Conversation &conv,
                                    const PairScorer &score) {
  const std::vector<TurnPair> pairs = make_turn_pairs(conv);
  if (pairs.empty())
    throw DataError("session " + conv.session_id + " has no turn pairs");
  double total = 0.0;
  for (const TurnPair &pair : pairs) total += score(pair);
  return total / static_cast<double>(pairs.size());
}

//------------------------------------------------------------------------------
// Line-delimited record form
//------------------------------------------------------------------------------

inline nlohmann::json ced_result_to_json(const CedResult &r) {
  nlohmann::json j;
  j["type"] = "session";
  j["session_id"] = r.session_id;
  j["direction"] = r.direction();
  j["n_pairs"] = r.pair_distances.size();
  j["session_ced"] = r.session_ced;
  return j;
}

inline std::string ced_results_to_jsonl(const std::vector<CedResult> &results) {
  std::string out;
  for (const CedResult &r : results) {
    for (const auto &[idx, d] : r.pair_distances) {
      nlohmann::json j;
      j["type"] = "pair";
      j["session_id"] = r.session_id;
      j["direction"] = r.direction();
      j["pair_index"] = idx;
      j["distance"] = d;
      out += j.dump();
      out += '\n';
    }
    out += ced_result_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Parses session-summary records back from report lines; pair records are
/// skipped. Used by downstream commands that consume a CED report.
inline std::vector<CedResult> ced_results_from_jsonl(const std::string &text) {
  std::vector<CedResult> out;
  for (const std::string &line : io::split_lines(text)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw DataError("bad CED record line: " + std::string(e.what()));
    }
    if (j.value("type", "") != "session") continue;
    CedResult r;
    r.session_id = j.at("session_id").get<std::string>();
    const std::string dir = j.at("direction").get<std::string>();
    const std::size_t arrow = dir.find("->");
    if (arrow == std::string::npos)
      throw DataError("bad direction field '" + dir + "' in CED record");
    r.lead_speaker = dir.substr(0, arrow);
    r.resp_speaker = dir.substr(arrow + 2);
    r.session_ced = j.at("session_ced").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ced
