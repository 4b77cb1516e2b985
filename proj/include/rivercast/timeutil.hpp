#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace rivercast {

using Timestamp = std::chrono::sys_seconds;
using Hours = std::chrono::hours;

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z|+00:00]`. Only UTC is accepted.
/// Throws std::invalid_argument on malformed text.
Timestamp parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp t);

inline Timestamp floor_hour(Timestamp t) { return std::chrono::floor<Hours>(t); }

inline std::int64_t hours_between(Timestamp from, Timestamp to) {
  return std::chrono::duration_cast<Hours>(to - from).count();
}

}  // namespace rivercast
