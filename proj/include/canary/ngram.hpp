// Character-level interpolated n-gram language model with add-k smoothing.
//
// The model keeps one count table per order j = 1..N. For a context of the
// last j-1 tokens (left-padded with the begin marker), the order-j estimate is
//
//   P_j(w | ctx) = (count(ctx, w) + k) / (total(ctx) + k * 258)
//
// and the model distribution is the interpolation sum(lambda_j * P_j) with
// uniform weights lambda_j = 1/N. An untrained model is therefore exactly
// uniform. Counts are stored as doubles so that continued training can weight
// documents (finetuned() below); training twice is equivalent to training once
// on the concatenated corpus.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "canary/common.hpp"
#include "canary/corpus.hpp"
#include "canary/distribution.hpp"
#include "canary/tokenizer.hpp"

namespace canary {

class NGramModel {
 public:
  // Orders up to 8 keep every context packable into a single 64-bit key
  // (9 bits per token), which is all a character-level model of this scale
  // needs.
  static constexpr int kMaxOrder = 8;

  explicit NGramModel(int order = 5, double smoothing_k = 0.1)
      : order_(order), k_(smoothing_k) {
    if (order < 1 || order > kMaxOrder) {
      throw std::invalid_argument("n-gram order must be in [1, 8]");
    }
    if (!(smoothing_k > 0.0)) {
      throw std::invalid_argument("smoothing k must be positive");
    }
    weights_.assign(static_cast<size_t>(order_), 1.0 / order_);
    tables_.resize(static_cast<size_t>(order_));
  }

  static NGramModel train(const std::vector<Document>& corpus, int order = 5,
                          double smoothing_k = 0.1) {
    NGramModel model(order, smoothing_k);
    model.add_counts(corpus, 1.0);
    return model;
  }

  // Returns a copy with `weight` counts added per occurrence in `corpus`.
  // Weight w on a document equals w plain repetitions of it.
  NGramModel finetuned(const std::vector<Document>& corpus,
                       double weight) const {
    if (!(weight > 0.0)) {
      throw std::invalid_argument("finetune weight must be positive");
    }
    NGramModel copy = *this;
    copy.add_counts(corpus, weight);
    return copy;
  }

  void add_counts(const std::vector<Document>& corpus, double weight) {
    for (const Document& doc : corpus) {
      const std::vector<int> toks = tokenize(doc.text);
      for (size_t i = 1; i < toks.size(); ++i) {
        for (int j = 1; j <= order_; ++j) {
          ContextCounts& slot =
              tables_[static_cast<size_t>(j - 1)][pack_window(toks, i, j - 1)];
          slot.total += weight;
          slot.by_token[toks[i]] += weight;
        }
      }
      total_training_tokens_ += toks.size() - 1;
    }
  }

  // Distribution over the next token given the full preceding token sequence
  // (only the last order-1 tokens matter). The context may be empty or
  // shorter than order-1; missing positions count as begin markers.
  TokenDistribution next_distribution(std::span<const int> context) const {
    TokenDistribution p(static_cast<size_t>(kVocabSize), 0.0);
    for (int j = 1; j <= order_; ++j) {
      const double lambda = weights_[static_cast<size_t>(j - 1)];
      const auto& table = tables_[static_cast<size_t>(j - 1)];
      const auto it = table.find(pack_tail(context, j - 1));
      const double total = it == table.end() ? 0.0 : it->second.total;
      const double denom = total + k_ * kVocabSize;
      const double base = lambda * k_ / denom;
      for (double& x : p) x += base;
      if (it != table.end()) {
        for (const auto& [tok, count] : it->second.by_token) {
          p[static_cast<size_t>(tok)] += lambda * count / denom;
        }
      }
    }
    return p;
  }

  // exp(mean negative log-likelihood) over every next-token prediction in the
  // documents, including the end-of-sequence token.
  double perplexity(const std::vector<Document>& docs) const {
    if (docs.empty()) {
      throw std::invalid_argument("perplexity needs at least one document");
    }
    double nll = 0.0;
    size_t n = 0;
    for (const Document& doc : docs) {
      const std::vector<int> toks = tokenize(doc.text);
      for (size_t i = 1; i < toks.size(); ++i) {
        const std::span<const int> ctx(toks.data(), i);
        nll += -std::log(
            next_distribution(ctx)[static_cast<size_t>(toks[i])]);
        ++n;
      }
    }
    return std::exp(nll / static_cast<double>(n));
  }

  int order() const { return order_; }
  double smoothing_k() const { return k_; }
  const std::vector<double>& interpolation_weights() const { return weights_; }
  size_t total_training_tokens() const { return total_training_tokens_; }

  nlohmann::json to_json() const {
    nlohmann::json counts = nlohmann::json::object();
    for (int j = 1; j <= order_; ++j) {
      nlohmann::json per_ctx = nlohmann::json::object();
      // Unpack keys back into comma-joined token ids so the file is
      // self-describing and ordered deterministically.
      for (const auto& [key, slot] : tables_[static_cast<size_t>(j - 1)]) {
        nlohmann::json by_tok = nlohmann::json::object();
        std::vector<int> toks;
        toks.reserve(slot.by_token.size());
        for (const auto& [tok, _] : slot.by_token) toks.push_back(tok);
        std::sort(toks.begin(), toks.end());
        for (int tok : toks) {
          by_tok[std::to_string(tok)] = slot.by_token.at(tok);
        }
        per_ctx[unpack_key(key, j - 1)] = by_tok;
      }
      counts[std::to_string(j)] = per_ctx;
    }
    return nlohmann::json{{"format_version", 1},
                          {"order", order_},
                          {"smoothing_k", k_},
                          {"weights", weights_},
                          {"total_training_tokens", total_training_tokens_},
                          {"counts", counts}};
  }

  static NGramModel from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("format_version")) {
      throw std::invalid_argument("model file is missing format_version");
    }
    if (j.at("format_version").get<int>() != 1) {
      throw std::invalid_argument("unsupported model format_version");
    }
    NGramModel model(j.at("order").get<int>(),
                     j.at("smoothing_k").get<double>());
    model.weights_ = j.at("weights").get<std::vector<double>>();
    if (model.weights_.size() != static_cast<size_t>(model.order_)) {
      throw std::invalid_argument("weights length must equal the order");
    }
    model.total_training_tokens_ =
        j.value("total_training_tokens", static_cast<size_t>(0));
    for (const auto& [order_key, per_ctx] : j.at("counts").items()) {
      const int jj = std::stoi(order_key);
      if (jj < 1 || jj > model.order_) {
        throw std::invalid_argument("count table order out of range");
      }
      for (const auto& [ctx_key, by_tok] : per_ctx.items()) {
        const std::vector<int> ctx = parse_ctx_key(ctx_key, jj - 1);
        ContextCounts& slot =
            model.tables_[static_cast<size_t>(jj - 1)]
                         [pack_tail(ctx, jj - 1)];
        for (const auto& [tok_key, count] : by_tok.items()) {
          const int tok = std::stoi(tok_key);
          if (tok < 0 || tok >= kVocabSize) {
            throw std::invalid_argument("token id out of range in model file");
          }
          const double c = count.get<double>();
          slot.by_token[tok] += c;
          slot.total += c;
        }
      }
    }
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << to_json().dump(2) << "\n";
  }

  static NGramModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("model file is not valid JSON: " +
                                  std::string(e.what()));
    }
    return from_json(j);
  }

 private:
  struct ContextCounts {
    double total = 0.0;
    std::unordered_map<int, double> by_token;
  };

  // Packs `len` tokens ending just before position i (begin-marker padded on
  // the left) into a 64-bit key, 9 bits per token, length tagged implicitly
  // by the table it lives in.
  static uint64_t pack_window(const std::vector<int>& toks, size_t i,
                              int len) {
    uint64_t key = 1;  // leading sentinel bit keeps 'aa' distinct from 'a'
    for (int d = len; d >= 1; --d) {
      const long idx = static_cast<long>(i) - d;
      const int tok = idx < 0 ? kBosToken : toks[static_cast<size_t>(idx)];
      key = (key << 9) | static_cast<uint64_t>(tok);
    }
    return key;
  }

  static uint64_t pack_tail(std::span<const int> context, int len) {
    uint64_t key = 1;
    for (int d = len; d >= 1; --d) {
      const long idx = static_cast<long>(context.size()) - d;
      const int tok =
          idx < 0 ? kBosToken : context[static_cast<size_t>(idx)];
      if (tok < 0 || tok >= kVocabSize) {
        throw std::invalid_argument("context token out of range");
      }
      key = (key << 9) | static_cast<uint64_t>(tok);
    }
    return key;
  }

  static std::string unpack_key(uint64_t key, int len) {
    std::vector<int> toks(static_cast<size_t>(len));
    for (int d = len - 1; d >= 0; --d) {
      toks[static_cast<size_t>(d)] = static_cast<int>(key & 0x1FF);
      key >>= 9;
    }
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i > 0) out += ',';
      out += std::to_string(toks[i]);
    }
    return out;
  }

  static std::vector<int> parse_ctx_key(const std::string& key, int len) {
    std::vector<int> ctx;
    if (!key.empty()) {
      std::stringstream ss(key);
      std::string part;
      while (std::getline(ss, part, ',')) ctx.push_back(std::stoi(part));
    }
    if (ctx.size() != static_cast<size_t>(len)) {
      throw std::invalid_argument("context key length mismatch in model file");
    }
    return ctx;
  }

  int order_;
  double k_;
  std::vector<double> weights_;
  std::vector<std::unordered_map<uint64_t, ContextCounts>> tables_;
  size_t total_training_tokens_ = 0;
};

}  // namespace canary
