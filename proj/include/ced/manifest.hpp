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

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ced/io.hpp"
#include "ced/rng.hpp"
#include "ced/version.hpp"

namespace ced {

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string(buf);
}

/// Digest of the effective configuration (canonical JSON, FNV-1a 64).
inline std::string config_digest(const nlohmann::json &effective_config) {
  const std::uint64_t h = hash64(effective_config.dump());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Every command writes one of these into its output directory before the
/// outputs are finalized, so a run is reproducible from the manifest alone.
struct RunManifest {
  std::string command;
  nlohmann::json effective_config;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_paths;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_digest(effective_config);
    j["effective_config"] = effective_config;
    j["seeds"] = seeds;
    j["input_paths"] = input_paths;
    j["output_paths"] = output_paths;
    j["tool_version"] = kToolVersion;
    j["timestamp"] = utc_timestamp();
    return j;
  }

  void write(const std::filesystem::path &path) const {
    io::write_file_atomic(path, to_json().dump(2) + "\n");
  }
};

}  // namespace ced
