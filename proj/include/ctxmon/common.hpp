#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctxmon {

// Error taxonomy shared by all modules. Everything user-facing derives from
// MonitorError so the CLI can catch one type and map it to an exit code.
struct MonitorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : MonitorError {
  using MonitorError::MonitorError;
};
struct StructuralError : MonitorError {
  using MonitorError::MonitorError;
};
struct ConfigError : MonitorError {
  using MonitorError::MonitorError;
};
struct ShapeError : MonitorError {
  using MonitorError::MonitorError;
};
struct InjectionError : MonitorError {
  using MonitorError::MonitorError;
};
struct OracleError : MonitorError {
  using MonitorError::MonitorError;
};
struct IntegrityError : MonitorError {
  using MonitorError::MonitorError;
};
struct EstimationError : MonitorError {
  using MonitorError::MonitorError;
};

// FNV-1a, used for config hashing and bundle checksums.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t seed = 14695981039346656037ull) {
  return fnv1a(s.data(), s.size(), seed);
}

// Counter-based seed fan-out: module seeds derived from one root seed stay
// stable when unrelated parts of a config change.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& tag,
                                 std::uint64_t counter = 0) {
  std::uint64_t h = fnv1a(tag, root ^ 0x9e3779b97f4a7c15ull);
  h ^= counter + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

}  // namespace ctxmon
