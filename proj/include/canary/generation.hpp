// Completion sampling on top of the n-gram model.
//
// Each step queries the model for the next-token distribution, hands it to an
// optional per-step transform (the guard stack hooks in here), records the
// entropy of the transformed distribution, and only then applies greedy or
// temperature decoding. All randomness for one completion comes from a single
// seeded stream, so (prompt, settings, seed) fully determines the output.
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "canary/common.hpp"
#include "canary/distribution.hpp"
#include "canary/ngram.hpp"
#include "canary/tokenizer.hpp"

namespace canary {

enum class SampleMode { greedy, temperature };

struct SamplerSpec {
  SampleMode mode = SampleMode::temperature;
  double temperature = 1.0;

  static SamplerSpec Greedy() { return {SampleMode::greedy, 1.0}; }
  static SamplerSpec Temp(double t) { return {SampleMode::temperature, t}; }
};

struct Completion {
  std::string text;                        // generated bytes, prompt excluded
  std::vector<double> step_entropies_bits; // one entry per decoding step
  bool ended_with_eos = false;
};

// Per-step hook: receives the model distribution and the completion's random
// stream, returns the distribution decoding should proceed with.
using StepTransform =
    std::function<TokenDistribution(const TokenDistribution&, Rng&)>;

inline Completion sample_completion(const NGramModel& model,
                                    std::string_view prompt, int max_tokens,
                                    SamplerSpec spec, uint64_t seed,
                                    const StepTransform& transform = nullptr) {
  if (max_tokens <= 0) {
    throw std::invalid_argument("max_tokens must be positive");
  }
  if (spec.mode == SampleMode::temperature && !(spec.temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }

  std::vector<int> context = tokenize(prompt);
  context.pop_back();  // drop the end marker: the prompt is a prefix
  Rng rng(seed);
  Completion out;
  for (int step = 0; step < max_tokens; ++step) {
    TokenDistribution p = model.next_distribution(context);
    if (transform) p = transform(p, rng);
    out.step_entropies_bits.push_back(shannon_entropy_bits(p));

    int tok;
    if (spec.mode == SampleMode::greedy) {
      tok = argmax(p);
    } else {
      const TokenDistribution q =
          spec.temperature == 1.0 ? p
                                  : softmax_with_temperature(p,
                                                             spec.temperature);
      tok = sample_index(q, rng);
    }
    if (tok == kEosToken) {
      out.ended_with_eos = true;
      break;
    }
    context.push_back(tok);
    if (tok < 256) out.text.push_back(static_cast<char>(tok));
    // A begin marker mid-stream carries no bytes; keep it in context only.
  }
  return out;
}

}  // namespace canary
