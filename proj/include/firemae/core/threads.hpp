#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#include "firemae/core/error.hpp"

namespace firemae {

/// Worker-thread cap: DM_THREADS when set, else the hardware concurrency.
inline std::size_t configured_threads() {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const char* env = std::getenv("DM_THREADS");
  if (!env || !*env) return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("DM_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace firemae
