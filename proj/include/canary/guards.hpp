// The layered privacy-guard stack.
//
// Layer order, from the inside of generation outward:
//   1. differential-privacy noise  - per-step logit perturbation (dp_perturb)
//   2. entropy gate                - aggregate over per-step entropies of the
//                                    post-noise distributions, evaluated once
//                                    the completion is finished
//   3. pattern filter              - regex scan of the final text
// (Layer 0, corpus deduplication, acts on training data and lives in
// dedup.hpp; it never sees generation.)
//
// The stack records every layer's observation independently, then resolves
// one action: a pattern hit applies the configured action (block / redact /
// regenerate-with-fresh-seed); an entropy flag always regenerates and blocks
// if the retry budget runs out; regenerate falling out of budget with only a
// pattern hit degrades to redact, never to pass-through.
#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "canary/common.hpp"
#include "canary/distribution.hpp"
#include "canary/generation.hpp"
#include "canary/patterns.hpp"

namespace canary {

// Inverse-CDF Laplace draw: u ~ U(-1/2, 1/2), x = -b sign(u) ln(1 - 2|u|).
inline double sample_laplace(double scale, Rng& rng) {
  if (!(scale > 0.0)) {
    throw std::invalid_argument("laplace scale must be positive");
  }
  double u;
  do {
    u = rng.uniform01() - 0.5;
  } while (u == -0.5);  // keep the log argument strictly positive
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return -scale * sign * std::log(1.0 - 2.0 * std::abs(u));
}

struct DpConfig {
  bool enabled = false;
  double epsilon = 1.0;
  double delta_f = 1.0;       // sensitivity bound on the clamped logits
  double logit_floor = 1e-9;  // probabilities below this clamp to the floor
};

inline double dp_noise_scale(const DpConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) {
    throw std::invalid_argument("dp epsilon must be positive");
  }
  if (!(cfg.delta_f > 0.0)) {
    throw std::invalid_argument("dp sensitivity must be positive");
  }
  return 2.0 * cfg.delta_f / cfg.epsilon;
}

// Adds Laplace(2*delta_f/epsilon) noise to the log-probabilities (clamped to
// [ln(floor), 0]) and renormalizes through a softmax.
inline TokenDistribution dp_perturb(const TokenDistribution& p,
                                    const DpConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return p;
  const double scale = dp_noise_scale(cfg);
  const double floor_log = std::log(cfg.logit_floor);
  std::vector<double> logits(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double l = p[i] > cfg.logit_floor ? std::log(p[i]) : floor_log;
    logits[i] = std::min(l, 0.0) + sample_laplace(scale, rng);
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  TokenDistribution q(p.size());
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    q[i] = std::exp(logits[i] - max_logit);
    sum += q[i];
  }
  for (double& x : q) x /= sum;
  return q;
}

enum class EntropyAggregate { mean, min };

inline std::string entropy_aggregate_name(EntropyAggregate a) {
  return a == EntropyAggregate::mean ? "mean" : "min";
}

inline EntropyAggregate entropy_aggregate_from_name(std::string_view name) {
  if (name == "mean") return EntropyAggregate::mean;
  if (name == "min") return EntropyAggregate::min;
  throw std::invalid_argument("unknown entropy aggregate: " +
                              std::string(name));
}

struct EntropyConfig {
  bool enabled = false;
  double min_entropy_bits = 3.0;
  EntropyAggregate aggregate = EntropyAggregate::mean;
};

inline double aggregate_entropy(std::span<const double> step_bits,
                                EntropyAggregate aggregate) {
  if (step_bits.empty()) {
    throw std::invalid_argument("no entropy steps to aggregate");
  }
  if (aggregate == EntropyAggregate::min) {
    return *std::min_element(step_bits.begin(), step_bits.end());
  }
  return std::accumulate(step_bits.begin(), step_bits.end(), 0.0) /
         static_cast<double>(step_bits.size());
}

// True when the aggregated entropy falls strictly below the threshold.
inline bool entropy_flag(std::span<const double> step_bits,
                         const EntropyConfig& cfg) {
  if (!cfg.enabled) return false;
  return aggregate_entropy(step_bits, cfg.aggregate) < cfg.min_entropy_bits;
}

struct PatternConfig {
  bool enabled = false;
  PatternAction action = PatternAction::redact;
  int max_regenerations = 3;
  std::vector<PatternRule> rules = builtin_rules();
};

struct GuardConfig {
  DpConfig dp;
  EntropyConfig entropy;
  PatternConfig pattern;
};

struct GuardVerdict {
  std::string final_text;
  bool blocked = false;
  std::string action_taken = "none";  // none | redact | block | regenerate
  std::string reason;
  bool dp_applied = false;
  bool entropy_flagged = false;
  double mean_entropy_bits = 0.0;
  // Matches found on the accepted attempt, before any redaction.
  std::vector<PatternMatch> pattern_matches;
  int regenerations = 0;
};

// Produces one candidate completion. The transform is the DP hook (empty when
// DP is off); the seed is unique per attempt so regeneration explores new
// samples.
using GenerateFn =
    std::function<Completion(const StepTransform& dp_transform,
                             uint64_t attempt_seed)>;

inline GuardVerdict run_guard_stack(const GuardConfig& cfg,
                                    const GenerateFn& generate,
                                    uint64_t seed) {
  if (cfg.pattern.max_regenerations < 0) {
    throw std::invalid_argument("max_regenerations must be >= 0");
  }
  StepTransform dp_transform;
  if (cfg.dp.enabled) {
    dp_transform = [&cfg](const TokenDistribution& p, Rng& rng) {
      return dp_perturb(p, cfg.dp, rng);
    };
  }

  GuardVerdict verdict;
  verdict.dp_applied = cfg.dp.enabled;
  const int budget = cfg.pattern.max_regenerations;
  for (int attempt = 0; attempt <= budget; ++attempt) {
    const uint64_t attempt_seed =
        derive_seed(seed, {"attempt", std::to_string(attempt)});
    const Completion completion = generate(dp_transform, attempt_seed);

    verdict.regenerations = attempt;
    verdict.mean_entropy_bits =
        completion.step_entropies_bits.empty()
            ? 0.0
            : aggregate_entropy(completion.step_entropies_bits,
                                cfg.entropy.aggregate);
    verdict.entropy_flagged =
        entropy_flag(completion.step_entropies_bits, cfg.entropy);
    verdict.pattern_matches =
        cfg.pattern.enabled
            ? pattern_scan(completion.text, cfg.pattern.rules)
            : std::vector<PatternMatch>{};
    const bool pattern_hit = !verdict.pattern_matches.empty();

    if (!verdict.entropy_flagged && !pattern_hit) {
      verdict.final_text = completion.text;
      verdict.action_taken = attempt > 0 ? "regenerate" : "none";
      return verdict;
    }

    if (pattern_hit && cfg.pattern.action == PatternAction::block &&
        !verdict.entropy_flagged) {
      verdict.blocked = true;
      verdict.action_taken = "block";
      verdict.reason = "pattern filter matched rule '" +
                       verdict.pattern_matches[0].rule_id + "'";
      return verdict;
    }

    if (pattern_hit && cfg.pattern.action == PatternAction::redact &&
        !verdict.entropy_flagged) {
      verdict.final_text = redact(completion.text, verdict.pattern_matches);
      verdict.action_taken = "redact";
      verdict.reason = "pattern filter matched rule '" +
                       verdict.pattern_matches[0].rule_id + "'";
      return verdict;
    }

    // Remaining cases want a fresh sample: an entropy flag (always), or a
    // pattern hit under the regenerate action. Retry if budget remains.
    if (attempt < budget) continue;

    if (verdict.entropy_flagged) {
      verdict.blocked = true;
      verdict.action_taken = "block";
      verdict.reason = "entropy stayed below threshold after " +
                       std::to_string(budget) + " regenerations";
      return verdict;
    }
    verdict.final_text = redact(completion.text, verdict.pattern_matches);
    verdict.action_taken = "redact";
    verdict.reason = "pattern filter still matching after " +
                     std::to_string(budget) + " regenerations";
    return verdict;
  }
  throw std::logic_error("guard stack fell through the attempt loop");
}

// Full pipeline on a local model: per-step DP inside sampling, entropy over
// the recorded steps, pattern scan on the final text.
inline GuardVerdict guarded_generate(const NGramModel& model,
                                     std::string_view prompt, int max_tokens,
                                     SamplerSpec sampler,
                                     const GuardConfig& cfg, uint64_t seed) {
  const GenerateFn gen = [&](const StepTransform& dp_transform,
                             uint64_t attempt_seed) {
    return sample_completion(model, prompt, max_tokens, sampler, attempt_seed,
                             dp_transform);
  };
  return run_guard_stack(cfg, gen, seed);
}

}  // namespace canary
