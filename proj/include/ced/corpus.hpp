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
// Transcript ingestion, turn pairing, session shuffling, the synthetic
// entrained-corpus generator, and the on-disk feature store.
//
//------------------------------------------------------------------------------
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ced/errors.hpp"
#include "ced/io.hpp"
#include "ced/log.hpp"
#include "ced/rng.hpp"
#include "ced/tensor.hpp"

namespace ced {

inline constexpr double kDefaultPauseThreshold = 0.5;  // seconds
inline constexpr double kDefaultFramePeriod = 0.04;    // seconds
inline constexpr std::size_t kMinTurnFrames = 2;

/// One maximal stretch of a single speaker's speech. Internal pauses shorter
/// than the merge threshold are bridged; the voiced sub-spans record where
/// speech actually occurred.
struct Turn {
  std::string session_id;
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
  std::vector<std::pair<double, double>> segments;

  double voiced_duration() const {
    double total = 0.0;
    for (const auto &[s, e] : segments) total += e - s;
    return total;
  }
};

/// Feature frames for one turn. The matrix is shared, not copied, when turns
/// move between real and shuffled sessions.
struct FeatureSequence {
  std::string session_id;
  std::size_t turn_index = 0;
  std::shared_ptr<const TensorF> frames;  // [T x D]
  double frame_period = kDefaultFramePeriod;

  std::size_t length() const { return frames ? frames->rows() : 0; }
  std::size_t dim() const { return frames ? frames->cols() : 0; }
};

/// Per-session sidecar data used by the analysis module. Missing values are
/// encoded as an empty gender string / NaN age / absent score key.
struct SessionMetadata {
  std::string gender;
  double age = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> scores;

  bool has_age() const { return !std::isnan(age); }
};

struct Conversation {
  std::string session_id;
  std::string speaker_a;
  std::string speaker_b;
  std::vector<Turn> turns;
  std::vector<FeatureSequence> features;  // parallel to turns; empty until attached
  SessionMetadata metadata;

  bool has_features() const { return features.size() == turns.size(); }
};

/// Ordered pair of consecutive cross-speaker turns.
struct TurnPair {
  std::string session_id;
  std::size_t pair_index = 0;  // position within the session's pair list
  std::string lead_speaker;
  std::string resp_speaker;
  FeatureSequence leading;
  FeatureSequence responding;
};

struct SynthConfig {
  std::size_t n_sessions = 1;
  std::size_t turns_per_session = 8;
  std::size_t dim = 16;
  double alpha = 0.0;       // entrainment strength in [0,1]
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
  // generation details not fixed by the protocol
  std::size_t frames_min = 6;
  std::size_t frames_max = 16;
  double frame_period = kDefaultFramePeriod;
  double style_scale = 1.0;

  void validate() const {
    if (n_sessions < 1) throw ConfigError("synth: n_sessions must be >= 1");
    if (turns_per_session < 1)
      throw ConfigError("synth: turns_per_session must be >= 1");
    if (dim < 1) throw ConfigError("synth: dim must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw ConfigError("synth: alpha must lie in [0,1], got " +
                        std::to_string(alpha));
    if (!(noise_scale > 0.0))
      throw ConfigError("synth: noise_scale must be > 0");
    if (frames_min < kMinTurnFrames)
      throw ConfigError("synth: frames_min must be >= 2");
    if (frames_max < frames_min)
      throw ConfigError("synth: frames_max must be >= frames_min");
    if (!(frame_period > 0.0))
      throw ConfigError("synth: frame_period must be > 0");
  }
};

//------------------------------------------------------------------------------
// Transcript parsing
//------------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

inline double parse_seconds(const std::string &s, std::size_t line_no,
                            const char *what) {
  try {
    std::size_t consumed = 0;
    double v = std::stod(s, &consumed);
    if (consumed != s.size()) throw std::invalid_argument(s);
    if (!std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw ParseError(std::string("bad ") + what + " value '" + s + "'",
                     line_no);
  }
}

}  // namespace detail

/// Parses a line-delimited transcript (tab-separated fields: session_id,
/// speaker, start_seconds, end_seconds, optional text) into a Conversation.
/// Adjacent same-speaker segments closer than pause_threshold are merged into
/// one Turn whose sub-spans record the bridged gap.
inline Conversation parse_transcript_text(
    const std::string &text, const std::string &origin,
    double pause_threshold = kDefaultPauseThreshold) {
  struct Segment {
    std::string speaker;
    double start, end;
  };

  std::vector<std::string> lines = io::split_lines(text);
  std::vector<Segment> segments;
  std::string session_id;
  std::set<std::string> speakers;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string &line = lines[i];
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_tabs(line);
    if (fields.size() < 4 || fields.size() > 5)
      throw ParseError("expected 4 or 5 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    if (fields[0].empty()) throw ParseError("empty session_id", line_no);
    if (fields[1].empty()) throw ParseError("empty speaker label", line_no);
    if (session_id.empty()) {
      session_id = fields[0];
    } else if (session_id != fields[0]) {
      throw ParseError("conflicting session_id '" + fields[0] +
                           "' (file began with '" + session_id + "')",
                       line_no);
    }
    double start = detail::parse_seconds(fields[2], line_no, "start");
    double end = detail::parse_seconds(fields[3], line_no, "end");
    if (!(end > start))
      throw ParseError("segment end must exceed start", line_no);
    speakers.insert(fields[1]);
    if (speakers.size() > 2)
      throw DataError("unsupported session in " + origin +
                      ": more than two speakers (saw '" + fields[1] + "')");
    segments.push_back({fields[1], start, end});
  }

  if (segments.empty())
    throw DataError("empty corpus: no transcript records in " + origin);

  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment &a, const Segment &b) {
                     return a.start < b.start;
                   });

  Conversation conv;
  conv.session_id = session_id;
  for (const Segment &seg : segments) {
    if (!conv.turns.empty() && conv.turns.back().speaker == seg.speaker &&
        seg.start - conv.turns.back().end < pause_threshold) {
      Turn &t = conv.turns.back();
      t.end = std::max(t.end, seg.end);
      // keep sub-spans sorted and non-overlapping
      if (!t.segments.empty() && seg.start <= t.segments.back().second) {
        t.segments.back().second =
            std::max(t.segments.back().second, seg.end);
      } else {
        t.segments.emplace_back(seg.start, seg.end);
      }
    } else {
      Turn t;
      t.session_id = session_id;
      t.speaker = seg.speaker;
      t.start = seg.start;
      t.end = seg.end;
      t.segments.emplace_back(seg.start, seg.end);
      conv.turns.push_back(std::move(t));
    }
  }

  auto it = speakers.begin();
  conv.speaker_a = *it;
  if (speakers.size() == 2) conv.speaker_b = *(++it);
  return conv;
}

inline Conversation parse_transcript(
    const std::filesystem::path &path,
    double pause_threshold = kDefaultPauseThreshold) {
  return parse_transcript_text(io::read_file(path), path.string(),
                               pause_threshold);
}

//------------------------------------------------------------------------------
// Turn pairs
//------------------------------------------------------------------------------

/// One TurnPair per adjacent cross-speaker turn pair, in temporal order.
/// Fewer than 2 turns yields an empty list.
inline std::vector<TurnPair> make_turn_pairs(const Conversation &conv) {
  if (!conv.has_features())
    throw DataError("make_turn_pairs: session " + conv.session_id +
                    " has no attached features");
  std::vector<TurnPair> pairs;
  std::size_t next_index = 0;
  for (std::size_t i = 0; i + 1 < conv.turns.size(); ++i) {
    if (conv.turns[i].speaker == conv.turns[i + 1].speaker) continue;
    TurnPair p;
    p.session_id = conv.session_id;
    p.pair_index = next_index++;
    p.lead_speaker = conv.turns[i].speaker;
    p.resp_speaker = conv.turns[i + 1].speaker;
    p.leading = conv.features[i];
    p.responding = conv.features[i + 1];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

//------------------------------------------------------------------------------
// Session shuffling (fake-session synthesis)
//------------------------------------------------------------------------------

/// Permutes each speaker's turns among that speaker's own slots, keeping the
/// slot speaker pattern and slot start times. The combined permutation is
/// never the identity; deterministic given rng_seed.
inline Conversation shuffle_session(const Conversation &conv,
                                    std::uint64_t rng_seed) {
  if (conv.turns.size() < 3)
    throw DataError("degenerate session " + conv.session_id +
                    ": need >= 3 turns to shuffle, have " +
                    std::to_string(conv.turns.size()));
  if (!conv.has_features())
    throw DataError("shuffle_session: session " + conv.session_id +
                    " has no attached features");

  // slot indices per speaker
  std::map<std::string, std::vector<std::size_t>> slots;
  for (std::size_t i = 0; i < conv.turns.size(); ++i)
    slots[conv.turns[i].speaker].push_back(i);

  Rng rng(mix_seed(rng_seed, {"shuffle"}));
  // source[i] = index of the turn whose content lands in slot i
  std::vector<std::size_t> source(conv.turns.size());
  while (true) {
    bool identity = true;
    for (const auto &[speaker, idx] : slots) {
      std::vector<std::size_t> perm = rng.permutation(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        source[idx[k]] = idx[perm[k]];
        if (perm[k] != k) identity = false;
      }
    }
    if (!identity) break;
  }

  Conversation fake;
  fake.session_id = conv.session_id;
  fake.speaker_a = conv.speaker_a;
  fake.speaker_b = conv.speaker_b;
  fake.metadata = conv.metadata;
  fake.turns.resize(conv.turns.size());
  fake.features.resize(conv.turns.size());
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    const Turn &slot = conv.turns[i];
    const Turn &src = conv.turns[source[i]];
    Turn t;
    t.session_id = conv.session_id;
    t.speaker = slot.speaker;
    // the slot keeps its start time; the moved content keeps its duration
    const double shift = slot.start - src.start;
    t.start = slot.start;
    t.end = src.end + shift;
    for (const auto &[s, e] : src.segments)
      t.segments.emplace_back(s + shift, e + shift);
    fake.turns[i] = std::move(t);
    FeatureSequence fs = conv.features[source[i]];
    fs.turn_index = i;
    fake.features[i] = std::move(fs);
  }
  return fake;
}

//------------------------------------------------------------------------------
// Synthetic entrained corpus
//------------------------------------------------------------------------------

namespace detail {

inline std::string synth_session_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth-%04zu", i);
  return std::string(buf);
}

}  // namespace detail

/// Generates dyadic sessions in which each responding turn's frames are
/// alpha * (mean of the previous turn's frames) + (1 - alpha) * (the
/// speaker's persistent style vector) + Gaussian noise. All random draws are
/// independent of alpha, so corpora generated at different alpha from the
/// same seed share their randomness.
inline std::vector<Conversation> synth_corpus(const SynthConfig &cfg) {
  cfg.validate();
  std::vector<Conversation> corpus;
  corpus.reserve(cfg.n_sessions);

  for (std::size_t s = 0; s < cfg.n_sessions; ++s) {
    Rng rng(mix_seed(cfg.seed, "synth-session", s, 0));
    Rng meta_rng(mix_seed(cfg.seed, "synth-meta", s, 0));

    Conversation conv;
    conv.session_id = detail::synth_session_id(s);
    conv.speaker_a = "A";
    conv.speaker_b = "B";
    conv.metadata.gender = (s % 2 == 0) ? "f" : "m";
    conv.metadata.age = meta_rng.uniform(2.0, 14.0);

    std::vector<double> style_a(cfg.dim), style_b(cfg.dim);
    for (double &v : style_a) v = cfg.style_scale * rng.normal();
    for (double &v : style_b) v = cfg.style_scale * rng.normal();

    std::vector<double> prev_pool(cfg.dim, 0.0);
    double cursor = 0.0;
    const double gap = 0.25;

    for (std::size_t t = 0; t < cfg.turns_per_session; ++t) {
      const bool is_a = (t % 2 == 0);
      const std::vector<double> &style = is_a ? style_a : style_b;
      const std::size_t n_frames =
          cfg.frames_min +
          rng.uniform_index(cfg.frames_max - cfg.frames_min + 1);

      auto frames = std::make_shared<TensorF>(
          TensorF({n_frames, cfg.dim}));
      std::vector<double> pool(cfg.dim, 0.0);
      for (std::size_t f = 0; f < n_frames; ++f) {
        for (std::size_t d = 0; d < cfg.dim; ++d) {
          const double base =
              (t == 0) ? style[d]
                       : cfg.alpha * prev_pool[d] + (1.0 - cfg.alpha) * style[d];
          const double v = base + cfg.noise_scale * rng.normal();
          (*frames)(f, d) = static_cast<float>(v);
          pool[d] += v;
        }
      }
      for (double &v : pool) v /= static_cast<double>(n_frames);
      prev_pool = pool;

      Turn turn;
      turn.session_id = conv.session_id;
      turn.speaker = is_a ? "A" : "B";
      turn.start = cursor;
      turn.end = cursor + static_cast<double>(n_frames) * cfg.frame_period;
      turn.segments.emplace_back(turn.start, turn.end);
      cursor = turn.end + gap;

      FeatureSequence fs;
      fs.session_id = conv.session_id;
      fs.turn_index = t;
      fs.frames = frames;
      fs.frame_period = cfg.frame_period;

      conv.turns.push_back(std::move(turn));
      conv.features.push_back(std::move(fs));
    }
    corpus.push_back(std::move(conv));
  }
  return corpus;
}

//------------------------------------------------------------------------------
// Feature store (corpus directory layout)
//------------------------------------------------------------------------------
//
// corpus_dir/
//   manifest.json      format_version, dim, frame_period, per-session turn
//                      table with frame counts and blob offsets
//   features.bin       per-turn [T x D] float32 little-endian row-major blobs
//   transcripts/<session_id>.tsv
//   metadata.json      per-session gender / age / score map
//

namespace detail {

inline std::string format_seconds(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::string(buf);
}

}  // namespace detail

inline std::string transcript_to_tsv(const Conversation &conv) {
  std::string out;
  for (const Turn &t : conv.turns) {
    for (const auto &[s, e] : t.segments) {
      out += conv.session_id;
      out += '\t';
      out += t.speaker;
      out += '\t';
      out += detail::format_seconds(s);
      out += '\t';
      out += detail::format_seconds(e);
      out += '\n';
    }
  }
  return out;
}

inline void write_corpus(const std::filesystem::path &dir,
                         const std::vector<Conversation> &corpus) {
  namespace fs = std::filesystem;
  if (corpus.empty()) throw DataError("write_corpus: empty corpus");
  fs::create_directories(dir / "transcripts");

  std::size_t dim = 0;
  double frame_period = 0.0;
  std::string blob;
  nlohmann::json sessions = nlohmann::json::array();

  for (const Conversation &conv : corpus) {
    if (!conv.has_features())
      throw DataError("write_corpus: session " + conv.session_id +
                      " has no attached features");
    nlohmann::json turns = nlohmann::json::array();
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
      const FeatureSequence &fsq = conv.features[i];
      if (dim == 0) {
        dim = fsq.dim();
        frame_period = fsq.frame_period;
      } else if (fsq.dim() != dim) {
        throw DataError("write_corpus: inconsistent feature dim in session " +
                        conv.session_id);
      }
      nlohmann::json t;
      t["turn_index"] = i;
      t["speaker"] = conv.turns[i].speaker;
      t["frame_count"] = fsq.length();
      t["offset"] = blob.size();
      turns.push_back(std::move(t));
      const TensorF &m = *fsq.frames;
      for (std::size_t k = 0; k < m.numel(); ++k) io::put_f32(blob, m[k]);
    }
    nlohmann::json s;
    s["session_id"] = conv.session_id;
    s["transcript"] = "transcripts/" + conv.session_id + ".tsv";
    s["turns"] = std::move(turns);
    sessions.push_back(std::move(s));
    io::write_file_atomic(dir / "transcripts" / (conv.session_id + ".tsv"),
                          transcript_to_tsv(conv));
  }

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["dim"] = dim;
  manifest["frame_period"] = frame_period;
  manifest["feature_file"] = "features.bin";
  manifest["sessions"] = std::move(sessions);

  nlohmann::json meta;
  for (const Conversation &conv : corpus) {
    nlohmann::json m;
    if (!conv.metadata.gender.empty()) m["gender"] = conv.metadata.gender;
    if (conv.metadata.has_age()) m["age"] = conv.metadata.age;
    if (!conv.metadata.scores.empty()) m["scores"] = conv.metadata.scores;
    meta["sessions"][conv.session_id] = std::move(m);
  }

  io::write_file_atomic(dir / "features.bin", blob);
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  io::write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
}

inline SessionMetadata metadata_from_json(const nlohmann::json &m) {
  SessionMetadata md;
  if (m.contains("gender")) md.gender = m.at("gender").get<std::string>();
  if (m.contains("age")) md.age = m.at("age").get<double>();
  if (m.contains("scores")) {
    for (const auto &[k, v] : m.at("scores").items())
      md.scores[k] = v.get<double>();
  }
  return md;
}

/// Loads a corpus directory: manifest + transcripts + feature blob +
/// metadata sidecar. Turns whose stored frame count disagrees with the
/// transcript's voiced duration by more than one frame are rejected; turns
/// shorter than the 2-frame model minimum are dropped with a warning.
inline std::vector<Conversation> load_corpus(const std::filesystem::path &dir) {
  namespace fs = std::filesystem;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception &e) {
    throw DataError("bad corpus manifest " + (dir / "manifest.json").string() +
                    ": " + e.what());
  }
  if (!manifest.contains("format_version") ||
      manifest.at("format_version").get<int>() != 1)
    throw DataError("unsupported corpus manifest format_version");

  const std::size_t dim = manifest.at("dim").get<std::size_t>();
  const double frame_period = manifest.at("frame_period").get<double>();
  const std::string blob =
      io::read_file(dir / manifest.at("feature_file").get<std::string>());

  nlohmann::json meta;
  if (fs::exists(dir / "metadata.json")) {
    try {
      meta = nlohmann::json::parse(io::read_file(dir / "metadata.json"));
    } catch (const nlohmann::json::exception &e) {
      throw DataError("bad metadata.json: " + std::string(e.what()));
    }
  }

  std::vector<Conversation> corpus;
  std::size_t dropped = 0;
  for (const auto &sess : manifest.at("sessions")) {
    const std::string sid = sess.at("session_id").get<std::string>();
    Conversation conv =
        parse_transcript(dir / sess.at("transcript").get<std::string>());
    if (conv.session_id != sid)
      throw DataError("manifest/transcript session_id mismatch for " + sid);

    const auto &turn_entries = sess.at("turns");
    if (turn_entries.size() != conv.turns.size())
      throw DataError("session " + sid + ": manifest lists " +
                      std::to_string(turn_entries.size()) +
                      " turns, transcript parses to " +
                      std::to_string(conv.turns.size()));

    Conversation kept;
    kept.session_id = conv.session_id;
    kept.speaker_a = conv.speaker_a;
    kept.speaker_b = conv.speaker_b;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
      const auto &entry = turn_entries[i];
      const std::size_t frame_count = entry.at("frame_count").get<std::size_t>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      if (entry.at("speaker").get<std::string>() != conv.turns[i].speaker)
        throw DataError("session " + sid + " turn " + std::to_string(i) +
                        ": manifest speaker disagrees with transcript");
      const double expected =
          conv.turns[i].voiced_duration() / frame_period;
      if (std::abs(expected - static_cast<double>(frame_count)) > 1.0 + 1e-9)
        throw DataError(
            "session " + sid + " turn " + std::to_string(i) +
            ": frame count " + std::to_string(frame_count) +
            " inconsistent with voiced duration (expected ~" +
            std::to_string(expected) + ")");
      const std::size_t bytes = frame_count * dim * 4;
      if (offset + bytes > blob.size())
        throw DataError("session " + sid + " turn " + std::to_string(i) +
                        ": feature blob out of range");
      if (frame_count < kMinTurnFrames) {
        ++dropped;
        continue;
      }
      auto m = std::make_shared<TensorF>(TensorF({frame_count, dim}));
      for (std::size_t k = 0; k < frame_count * dim; ++k) {
        const float v = io::get_f32(blob.data() + offset + 4 * k);
        if (!std::isfinite(v))
          throw DataError("session " + sid + " turn " + std::to_string(i) +
                          ": non-finite feature value");
        (*m)[k] = v;
      }
      FeatureSequence fsq;
      fsq.session_id = sid;
      fsq.turn_index = kept.turns.size();
      fsq.frames = std::move(m);
      fsq.frame_period = frame_period;
      kept.turns.push_back(conv.turns[i]);
      kept.features.push_back(std::move(fsq));
    }
    if (meta.contains("sessions") && meta.at("sessions").contains(sid))
      kept.metadata = metadata_from_json(meta.at("sessions").at(sid));
    corpus.push_back(std::move(kept));
  }
  if (dropped > 0)
    log::warn("load_corpus: dropped ", dropped,
              " turn(s) shorter than the 2-frame minimum");
  std::sort(corpus.begin(), corpus.end(),
            [](const Conversation &a, const Conversation &b) {
              return a.session_id < b.session_id;
            });
  return corpus;
}

}  // namespace ced
