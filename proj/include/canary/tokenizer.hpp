// Byte-level tokenizer. Text maps to its raw bytes (0..255) framed by
// begin/end-of-sequence markers; no unicode normalization is applied, so the
// inverse mapping is exact for arbitrary binary content.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "canary/common.hpp"

namespace canary {

inline std::vector<int> tokenize(std::string_view text) {
  std::vector<int> tokens;
  tokens.reserve(text.size() + 2);
  tokens.push_back(kBosToken);
  for (unsigned char c : text) {
    tokens.push_back(static_cast<int>(c));
  }
  tokens.push_back(kEosToken);
  return tokens;
}

// Restores the original bytes. Sequence markers are skipped wherever they
// appear; any other token outside [0, 255] is rejected.
inline std::string detokenize(std::span<const int> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t == kBosToken || t == kEosToken) continue;
    if (t < 0 || t > 255) {
      throw std::invalid_argument("detokenize: token " + std::to_string(t) +
                                  " is outside the byte range");
    }
    out.push_back(static_cast<char>(t));
  }
  return out;
}

}  // namespace canary
