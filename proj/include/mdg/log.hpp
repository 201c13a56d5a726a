/* Copyright 2026 The MDG Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MDG_LOG_HPP_
#define MDG_LOG_HPP_

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace mdg::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

// Threshold from MDG_LOG={error,info,debug}; info when unset or unknown.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MDG_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error") return Level::kError;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return level;
}

inline void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static std::mutex mu;
  static constexpr std::string_view kTags[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[mdg " << kTags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void error(std::string_view msg) { write(Level::kError, msg); }
inline void info(std::string_view msg) { write(Level::kInfo, msg); }
inline void debug(std::string_view msg) { write(Level::kDebug, msg); }

}  // namespace mdg::log

#endif  // MDG_LOG_HPP_
