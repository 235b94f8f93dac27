// Utility and overhead metrics plus the side-by-side experiment report.
//
// Utility compares a guarded variant against an unguarded reference on
// held-out text: the fraction of held-out positions where both pipelines pick
// the same next token (with the variant's distribution passed through the DP
// layer when enabled), scaled by the capped perplexity ratio
// min(1, ppl_reference / ppl_variant). 1.0 means indistinguishable from the
// reference; the DP layer at its default scale collapses agreement to near
// chance, and the report is the place where that cost is made visible.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "canary/common.hpp"
#include "canary/corpus.hpp"
#include "canary/guards.hpp"
#include "canary/ngram.hpp"
#include "canary/tokenizer.hpp"

namespace canary {

struct UtilityReport {
  double argmax_agreement = 0.0;
  double perplexity_ratio = 0.0;
  double utility = 0.0;
  int positions = 0;
};

inline UtilityReport utility_score(const NGramModel& reference,
                                   const NGramModel& variant,
                                   const GuardConfig& guards,
                                   const std::vector<Document>& heldout,
                                   uint64_t seed, int max_positions = 500) {
  if (heldout.empty()) {
    throw std::invalid_argument("utility needs held-out documents");
  }
  if (max_positions < 1) {
    throw std::invalid_argument("max_positions must be >= 1");
  }

  // Collect every prediction position, then stride evenly down to the cap so
  // the sample spreads across all documents deterministically.
  std::vector<std::pair<size_t, size_t>> positions;  // (doc, predict index)
  std::vector<std::vector<int>> token_streams;
  token_streams.reserve(heldout.size());
  for (size_t d = 0; d < heldout.size(); ++d) {
    token_streams.push_back(tokenize(heldout[d].text));
    for (size_t i = 1; i < token_streams[d].size(); ++i) {
      positions.emplace_back(d, i);
    }
  }
  const size_t stride =
      std::max<size_t>(1, positions.size() / static_cast<size_t>(max_positions));

  Rng rng(derive_seed(seed, {"utility"}));
  int agree = 0;
  int used = 0;
  for (size_t p = 0; p < positions.size() && used < max_positions;
       p += stride) {
    const auto [d, i] = positions[p];
    const std::span<const int> ctx(token_streams[d].data(), i);
    const TokenDistribution ref_dist = reference.next_distribution(ctx);
    TokenDistribution var_dist = variant.next_distribution(ctx);
    if (guards.dp.enabled) {
      var_dist = dp_perturb(var_dist, guards.dp, rng);
    }
    agree += argmax(ref_dist) == argmax(var_dist) ? 1 : 0;
    ++used;
  }

  UtilityReport report;
  report.positions = used;
  report.argmax_agreement = static_cast<double>(agree) / used;
  report.perplexity_ratio =
      std::min(1.0, reference.perplexity(heldout) / variant.perplexity(heldout));
  report.utility = report.argmax_agreement * report.perplexity_ratio;
  return report;
}

inline double overhead_pct(double baseline_ms, double guarded_ms) {
  if (!(baseline_ms > 0.0)) {
    throw std::invalid_argument("baseline time must be positive");
  }
  return 100.0 * (guarded_ms - baseline_ms) / baseline_ms;
}

// One configuration's line in the side-by-side comparison. The first row of a
// report is the reference configuration; reduction percentages are computed
// against its leakage rate at render time.
struct ExperimentRow {
  std::string label;
  double leakage_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int counted_pairs = 0;
  int leaked_pairs = 0;
  std::string risk;
  std::optional<double> utility;
  std::optional<double> overhead_pct;
};

struct ExperimentReport {
  std::string title;
  std::vector<ExperimentRow> rows;
};

inline std::optional<double> reduction_vs_reference(
    const ExperimentReport& report, size_t row) {
  if (row == 0) return std::nullopt;
  const double base = report.rows[0].leakage_rate;
  if (base <= 0.0) return std::nullopt;
  return 100.0 * (1.0 - report.rows[row].leakage_rate / base);
}

inline void require_rows(const ExperimentReport& report) {
  if (report.rows.empty()) {
    throw std::invalid_argument("experiment report has no rows");
  }
}

inline nlohmann::json render_report_json(const ExperimentReport& report) {
  require_rows(report);
  nlohmann::json rows = nlohmann::json::array();
  for (size_t i = 0; i < report.rows.size(); ++i) {
    const ExperimentRow& r = report.rows[i];
    nlohmann::json row{{"label", r.label},
                       {"leakage_rate", r.leakage_rate},
                       {"ci_low", r.ci_low},
                       {"ci_high", r.ci_high},
                       {"counted_pairs", r.counted_pairs},
                       {"leaked_pairs", r.leaked_pairs},
                       {"risk", r.risk}};
    row["utility"] = r.utility ? nlohmann::json(*r.utility)
                               : nlohmann::json(nullptr);
    row["overhead_pct"] = r.overhead_pct ? nlohmann::json(*r.overhead_pct)
                                         : nlohmann::json(nullptr);
    const std::optional<double> red = reduction_vs_reference(report, i);
    row["reduction_pct"] =
        red ? nlohmann::json(*red) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  return nlohmann::json{
      {"schema_version", 1}, {"title", report.title}, {"rows", rows}};
}

namespace detail {
inline std::string fmt_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * fraction);
  return buf;
}
inline std::string fmt_num(double value, const char* format = "%.3f") {
  char buf[32];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}
}  // namespace detail

inline std::string render_report_markdown(const ExperimentReport& report) {
  require_rows(report);
  std::string md = "# " + report.title + "\n\n";
  md +=
      "| configuration | leakage | 95% CI | reduction | risk | utility | "
      "overhead |\n";
  md += "|---|---|---|---|---|---|---|\n";
  for (size_t i = 0; i < report.rows.size(); ++i) {
    const ExperimentRow& r = report.rows[i];
    const std::optional<double> red = reduction_vs_reference(report, i);
    md += "| " + r.label + " | " + detail::fmt_pct(r.leakage_rate) + " | [" +
          detail::fmt_pct(r.ci_low) + ", " + detail::fmt_pct(r.ci_high) +
          "] | " + (red ? detail::fmt_num(*red, "%.1f") + std::string("%") : "—") +
          " | " + r.risk + " | " +
          (r.utility ? detail::fmt_num(*r.utility) : "—") + " | " +
          (r.overhead_pct ? detail::fmt_num(*r.overhead_pct, "%.1f") +
                                std::string("%")
                          : "—") +
          " |\n";
  }
  return md;
}

inline std::string render_report_csv(const ExperimentReport& report) {
  require_rows(report);
  std::string csv =
      "label,leakage_rate,ci_low,ci_high,reduction_pct,risk,utility,"
      "overhead_pct,counted_pairs,leaked_pairs\n";
  const auto opt = [](const std::optional<double>& v) {
    return v ? detail::fmt_num(*v, "%.6g") : std::string();
  };
  for (size_t i = 0; i < report.rows.size(); ++i) {
    const ExperimentRow& r = report.rows[i];
    csv += r.label + "," + detail::fmt_num(r.leakage_rate, "%.6g") + "," +
           detail::fmt_num(r.ci_low, "%.6g") + "," +
           detail::fmt_num(r.ci_high, "%.6g") + "," +
           opt(reduction_vs_reference(report, i)) + "," + r.risk + "," +
           opt(r.utility) + "," + opt(r.overhead_pct) + "," +
           std::to_string(r.counted_pairs) + "," +
           std::to_string(r.leaked_pairs) + "\n";
  }
  return csv;
}

}  // namespace canary
