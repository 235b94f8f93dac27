// Shared constants, hashing, and deterministic RNG plumbing.
//
// Every stochastic component in the library draws through Rng so that a run is
// fully reproducible from a single master seed. Seeds for sub-tasks are derived
// by hashing the master seed with string tags (see derive_seed), never by
// sharing one engine across tasks, so results do not depend on scheduling or
// evaluation order.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace canary {

// Token vocabulary: all 256 byte values plus two sequence markers.
inline constexpr int kVocabSize = 258;
inline constexpr int kBosToken = 256;
inline constexpr int kEosToken = 257;

// FNV-1a 64-bit hash. Used for seed derivation; stable across platforms,
// unlike std::hash.
inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// Derives a child seed from a master seed and a list of string parts.
// Parts are length-delimited before hashing so ("ab","c") != ("a","bc").
inline uint64_t derive_seed(uint64_t master_seed,
                            std::initializer_list<std::string_view> parts) {
  std::string buf;
  buf.reserve(64);
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((master_seed >> (8 * i)) & 0xff));
  }
  for (std::string_view p : parts) {
    buf.push_back('/');
    buf += std::to_string(p.size());
    buf.push_back(':');
    buf.append(p.data(), p.size());
  }
  return fnv1a64(buf);
}

// Deterministic random source. mt19937_64 output is pinned by the standard,
// and the uniform conversions below avoid std::uniform_*_distribution, whose
// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  size_t uniform_index(size_t n) {
    if (n == 0) {
      throw std::invalid_argument("uniform_index: n must be positive");
    }
    return static_cast<size_t>(engine_() % n);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace canary
