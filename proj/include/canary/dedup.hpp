// Training-data deduplication: tf-idf vectors, cosine similarity, and a
// greedy first-wins sweep that drops any document too similar to one already
// kept. This is the corpus-side guard layer: removing repeated plantings
// before (re)training starves the model of the repetition it needs to
// memorize a secret.
//
// Word tokens are lowercased maximal alphanumeric runs. Term weights follow
// the smoothed formulation tf * (ln((1+N)/(1+df)) + 1), L2-normalized, so
// cosine similarity of identical texts is exactly 1 regardless of length.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "canary/corpus.hpp"

namespace canary {

// Term-index/weight pairs sorted by index.
struct SparseVector {
  std::vector<std::pair<int, double>> entries;
};

inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

class TfIdfVectorizer {
 public:
  void fit(const std::vector<Document>& corpus) {
    vocab_.clear();
    idf_.clear();
    std::vector<int> df;
    for (const Document& doc : corpus) {
      std::vector<int> seen_terms;
      for (const std::string& w : word_tokens(doc.text)) {
        auto [it, inserted] = vocab_.emplace(w, static_cast<int>(vocab_.size()));
        if (inserted) df.push_back(0);
        seen_terms.push_back(it->second);
      }
      std::sort(seen_terms.begin(), seen_terms.end());
      seen_terms.erase(std::unique(seen_terms.begin(), seen_terms.end()),
                       seen_terms.end());
      for (int t : seen_terms) df[static_cast<size_t>(t)] += 1;
    }
    const double n = static_cast<double>(corpus.size());
    idf_.resize(df.size());
    for (size_t t = 0; t < df.size(); ++t) {
      idf_[t] = std::log((1.0 + n) / (1.0 + df[t])) + 1.0;
    }
  }

  // Terms unseen during fit() carry no weight.
  SparseVector transform(std::string_view text) const {
    std::unordered_map<int, double> tf;
    for (const std::string& w : word_tokens(text)) {
      const auto it = vocab_.find(w);
      if (it != vocab_.end()) tf[it->second] += 1.0;
    }
    SparseVector v;
    v.entries.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [term, count] : tf) {
      const double w = count * idf_[static_cast<size_t>(term)];
      v.entries.emplace_back(term, w);
      norm_sq += w * w;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > 0.0) {
      for (auto& [term, w] : v.entries) w /= norm;
    }
    std::sort(v.entries.begin(), v.entries.end());
    return v;
  }

  size_t vocab_size() const { return vocab_.size(); }

 private:
  std::unordered_map<std::string, int> vocab_;
  std::vector<double> idf_;
};

// Dot product of L2-normalized vectors, clamped into [0, 1] against
// floating-point drift.
inline double cosine_similarity(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  size_t i = 0, j = 0;
  while (i < a.entries.size() && j < b.entries.size()) {
    if (a.entries[i].first < b.entries[j].first) {
      ++i;
    } else if (a.entries[i].first > b.entries[j].first) {
      ++j;
    } else {
      dot += a.entries[i].second * b.entries[j].second;
      ++i;
      ++j;
    }
  }
  return std::min(1.0, std::max(0.0, dot));
}

struct RemovedEntry {
  std::string removed_id;
  std::string kept_id;  // the earlier document it duplicated
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<Document> kept;
  std::vector<RemovedEntry> removed;
  double threshold = 0.0;
};

// Greedy first-wins pass in corpus order: a document is dropped when its
// cosine similarity to some already-kept document strictly exceeds the
// threshold; the recorded kept_id is the most similar kept document (earliest
// on ties). An inverted index over kept documents prunes the comparisons to
// those sharing at least one term, which is exact for cosine > 0. `jobs`
// splits each document's candidate comparisons across threads; results do not
// depend on it.
inline DedupResult deduplicate(const std::vector<Document>& corpus,
                               double threshold = 0.85, int jobs = 1) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("dedup threshold must be in [0, 1]");
  }
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");

  TfIdfVectorizer vec;
  vec.fit(corpus);
  std::vector<SparseVector> vectors;
  vectors.reserve(corpus.size());
  for (const Document& doc : corpus) vectors.push_back(vec.transform(doc.text));

  DedupResult result;
  result.threshold = threshold;
  std::vector<size_t> kept_indices;
  std::vector<std::vector<size_t>> postings(vec.vocab_size());

  for (size_t i = 0; i < corpus.size(); ++i) {
    // Collect kept candidates sharing a term.
    std::vector<size_t> candidates;
    for (const auto& [term, _] : vectors[i].entries) {
      const auto& plist = postings[static_cast<size_t>(term)];
      candidates.insert(candidates.end(), plist.begin(), plist.end());
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());

    double best_sim = -1.0;
    size_t best_kept = 0;
    if (!candidates.empty()) {
      const int workers = std::min<int>(
          jobs, static_cast<int>(candidates.size()));
      std::vector<double> chunk_sim(static_cast<size_t>(workers), -1.0);
      std::vector<size_t> chunk_idx(static_cast<size_t>(workers), 0);
      const auto scan = [&](int w) {
        for (size_t c = static_cast<size_t>(w); c < candidates.size();
             c += static_cast<size_t>(workers)) {
          const double s = cosine_similarity(vectors[i],
                                             vectors[candidates[c]]);
          if (s > chunk_sim[static_cast<size_t>(w)] ||
              (s == chunk_sim[static_cast<size_t>(w)] &&
               candidates[c] < chunk_idx[static_cast<size_t>(w)])) {
            chunk_sim[static_cast<size_t>(w)] = s;
            chunk_idx[static_cast<size_t>(w)] = candidates[c];
          }
        }
      };
      if (workers == 1) {
        scan(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(scan, w);
        for (std::thread& t : pool) t.join();
      }
      for (int w = 0; w < workers; ++w) {
        if (chunk_sim[static_cast<size_t>(w)] > best_sim ||
            (chunk_sim[static_cast<size_t>(w)] == best_sim &&
             chunk_idx[static_cast<size_t>(w)] < best_kept)) {
          best_sim = chunk_sim[static_cast<size_t>(w)];
          best_kept = chunk_idx[static_cast<size_t>(w)];
        }
      }
    }

    if (best_sim > threshold) {
      result.removed.push_back(
          {corpus[i].id, corpus[best_kept].id, best_sim});
      continue;
    }
    kept_indices.push_back(i);
    result.kept.push_back(corpus[i]);
    for (const auto& [term, _] : vectors[i].entries) {
      postings[static_cast<size_t>(term)].push_back(i);
    }
  }
  return result;
}

}  // namespace canary
