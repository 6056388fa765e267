#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

// The library is compiled twice from the same sources: the default 32-bit
// engine and a 64-bit variant used for finite-difference gradient checks.
// Each build lives in its own inline namespace so both can be linked into
// one executable.
#if defined(GAIN_DOUBLE_PRECISION)
#define GAIN_PRECISION_NS f64
#else
#define GAIN_PRECISION_NS f32
#endif

#define GAIN_NAMESPACE_BEGIN \
  namespace gain {           \
  inline namespace GAIN_PRECISION_NS {
#define GAIN_NAMESPACE_END \
  }                        \
  }

GAIN_NAMESPACE_BEGIN

#if defined(GAIN_DOUBLE_PRECISION)
using Real = double;
#else
using Real = float;
#endif

using NodeId = std::uint32_t;

/// Malformed or inconsistent input data (files, indices, labels).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf in a forward value, gradient or loss.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or API misuse (shape mismatch, bad options).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// splitmix64 finalizer; used to derive independent random streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the stream named `label` under the run seed, optionally indexed
/// (epoch, batch, ...). Streams with different labels or indices are
/// statistically independent.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                    std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = mix64(seed ^ fnv1a(label));
  h = mix64(h ^ a);
  return mix64(h ^ (b * 0x2545f4914f6cdd1dULL));
}

GAIN_NAMESPACE_END
