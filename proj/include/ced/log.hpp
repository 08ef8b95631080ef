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

#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace ced::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kQuiet = 4 };

inline Level &threshold() {
  static Level level = Level::kInfo;
  return level;
}

inline std::mutex &sink_mutex() {
  static std::mutex m;
  return m;
}

inline void emit(Level level, const std::string &msg) {
  if (level < threshold()) return;
  static const char *names[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[ced:" << names[static_cast<int>(level)] << "] " << msg
            << std::endl;
}

template <typename... Args>
std::string format(Args &&...args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

template <typename... Args>
void debug(Args &&...args) {
  emit(Level::kDebug, format(std::forward<Args>(args)...));
}
template <typename... Args>
void info(Args &&...args) {
  emit(Level::kInfo, format(std::forward<Args>(args)...));
}
template <typename... Args>
void warn(Args &&...args) {
  emit(Level::kWarn, format(std::forward<Args>(args)...));
}
template <typename... Args>
void error(Args &&...args) {
  emit(Level::kError, format(std::forward<Args>(args)...));
}

}  // namespace ced::log
