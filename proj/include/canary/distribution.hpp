// Shared next-token distribution type and the small set of operations the
// model, the guards, and the samplers all agree on.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "canary/common.hpp"

namespace canary {

// Probability over the 258-token vocabulary, indexed by token id.
using TokenDistribution = std::vector<double>;

inline TokenDistribution uniform_distribution() {
  return TokenDistribution(static_cast<size_t>(kVocabSize),
                           1.0 / static_cast<double>(kVocabSize));
}

// Index of the largest probability; ties resolve to the lowest token id so
// greedy decoding is deterministic.
inline int argmax(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("argmax of empty distribution");
  size_t best = 0;
  for (size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return static_cast<int>(best);
}

// Shannon entropy in bits, with the 0 * log(0) term defined as 0.
inline double shannon_entropy_bits(std::span<const double> p) {
  if (p.empty()) {
    throw std::invalid_argument("entropy of empty distribution");
  }
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log2(x);
  }
  return h;
}

inline void validate_distribution(std::span<const double> p,
                                  double tolerance = 1e-6) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) {
      throw std::invalid_argument("distribution has a negative entry");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw std::invalid_argument("distribution does not sum to 1");
  }
}

// Sharpen or flatten a distribution: q_i proportional to p_i^(1/T). Computed
// in log space for stability. T=1 returns the input unchanged; T -> 0 tends
// to a point mass on the argmax; large T tends to uniform over the support.
inline std::vector<double> softmax_with_temperature(std::span<const double> p,
                                                    double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  std::vector<double> q(p.begin(), p.end());
  if (temperature == 1.0) return q;
  double max_log = -std::numeric_limits<double>::infinity();
  for (double x : p) {
    if (x > 0.0) max_log = std::max(max_log, std::log(x) / temperature);
  }
  double sum = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    q[i] = p[i] > 0.0 ? std::exp(std::log(p[i]) / temperature - max_log) : 0.0;
    sum += q[i];
  }
  for (double& x : q) x /= sum;
  return q;
}

// Draw one index from the distribution using the shared deterministic stream.
inline int sample_index(std::span<const double> p, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return static_cast<int>(i);
  }
  // Floating-point slack: fall back to the last positive entry.
  for (size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0.0) return static_cast<int>(i);
  }
  throw std::invalid_argument("cannot sample from an all-zero distribution");
}

}  // namespace canary
