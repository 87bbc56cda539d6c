#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fluidb {

using Nanos = std::chrono::nanoseconds;
using SampleId = std::int64_t;
using BatchId = std::int64_t;

inline constexpr std::int64_t kNone = -1;

// Error hierarchy. Every failure raised by the library derives from Error so
// front ends can catch one type and still report the specific category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error("invalid argument: " + what) {}
};

class InvalidProfile : public Error {
 public:
  explicit InvalidProfile(const std::string& what)
      : Error("invalid exit profile: " + what) {}
};

class InvalidDescriptor : public Error {
 public:
  explicit InvalidDescriptor(const std::string& what)
      : Error("invalid network descriptor: " + what) {}
};

class InvalidPolicy : public Error {
 public:
  explicit InvalidPolicy(const std::string& what)
      : Error("invalid batching policy: " + what) {}
};

class UnsupportedStacking : public Error {
 public:
  explicit UnsupportedStacking(const std::string& what)
      : Error("unsupported PE stacking: " + what) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what)
      : Error("lookup out of range: " + what) {}
};

class NoFeasibleDesign : public Error {
 public:
  explicit NoFeasibleDesign(const std::string& what)
      : Error("no feasible design: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("configuration error: " + what) {}
};

class EmptyReport : public Error {
 public:
  explicit EmptyReport(const std::string& what)
      : Error("empty report: " + what) {}
};

inline Nanos to_nanos(double seconds) {
  return Nanos{static_cast<std::int64_t>(std::llround(seconds * 1e9))};
}

inline double to_seconds(Nanos t) { return static_cast<double>(t.count()) * 1e-9; }

inline double to_millis(Nanos t) { return static_cast<double>(t.count()) * 1e-6; }

inline Nanos from_millis(double ms) { return to_nanos(ms * 1e-3); }

// Runs fn(i) for i in [0, n) on at most `threads` workers (0: hardware
// concurrency). Each index runs exactly once; the first exception, by index,
// is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned count = threads != 0 ? threads : std::max(1U, std::thread::hardware_concurrency());
  count = static_cast<unsigned>(std::min<std::size_t>(count, n));
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fluidb
