#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace uvf {

/// Base class for every error raised by the library. Callers that only care
/// about "something in the simulator rejected this" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Simulated time is held as integer milliseconds so clock accumulation is
/// exact. Scenario files and exports speak minutes.
using SimDuration = std::chrono::milliseconds;

inline constexpr std::int64_t kMsPerMinute = 60'000;

inline SimDuration from_minutes(double minutes) {
  return SimDuration{static_cast<std::int64_t>(std::llround(minutes * kMsPerMinute))};
}

inline double to_minutes(SimDuration d) {
  return static_cast<double>(d.count()) / static_cast<double>(kMsPerMinute);
}

}  // namespace uvf
