// The full comparison experiment in one deterministic call.
//
// Pipeline: split the clean corpus into train / held-out slices, plant a
// canary set into the training stream, and audit seven configurations —
//
//   row 0  no guards        memorized model, nothing enabled (reference)
//   row 1  dedup + retrain  training stream deduplicated, model rebuilt
//   row 2  dp noise         memorized model, logit noise only
//   row 3  entropy gate     memorized model, low-entropy regeneration only
//   row 4  pattern filter   memorized model, output regex filter only
//   row 5  all guards       deduplicated model plus every runtime layer
//   row 6  clean control    model that never saw the canaries
//
// Every row reports leakage with a bootstrap CI, a risk class, and a utility
// score against the reference model on the held-out slice. Wall-clock
// overhead is filled in only when timing is requested, because timing is the
// one column that cannot be byte-identical across reruns.
#pragma once

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "canary/audit.hpp"
#include "canary/config.hpp"
#include "canary/corpus.hpp"
#include "canary/dedup.hpp"
#include "canary/metrics.hpp"
#include "canary/ngram.hpp"
#include "canary/secrets.hpp"

namespace canary {

struct ExperimentOutput {
  std::vector<Secret> secrets;
  ExperimentReport report;
  // (slug, audit) per row, in row order; slugs are kebab-case and safe to use
  // as file names.
  std::vector<std::pair<std::string, AuditReport>> audits;
};

// Parses the output of render_report_json back into a report (derived fields
// such as reduction_pct are recomputed at render time and ignored here).
inline ExperimentReport experiment_report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) {
      throw std::invalid_argument("unsupported report schema_version");
    }
    ExperimentReport report;
    report.title = j.at("title").get<std::string>();
    for (const nlohmann::json& row : j.at("rows")) {
      ExperimentRow r;
      r.label = row.at("label").get<std::string>();
      r.leakage_rate = row.at("leakage_rate").get<double>();
      r.ci_low = row.at("ci_low").get<double>();
      r.ci_high = row.at("ci_high").get<double>();
      r.counted_pairs = row.at("counted_pairs").get<int>();
      r.leaked_pairs = row.at("leaked_pairs").get<int>();
      r.risk = row.at("risk").get<std::string>();
      if (!row.at("utility").is_null()) {
        r.utility = row.at("utility").get<double>();
      }
      if (!row.at("overhead_pct").is_null()) {
        r.overhead_pct = row.at("overhead_pct").get<double>();
      }
      report.rows.push_back(std::move(r));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed report JSON: ") +
                                e.what());
  }
}

inline ExperimentOutput run_experiment(const RunConfig& cfg,
                                       const std::vector<Document>& clean_all,
                                       std::ostream* progress = nullptr) {
  if (clean_all.empty()) {
    throw std::invalid_argument("experiment needs a non-empty clean corpus");
  }
  const auto say = [&](const std::string& line) {
    if (progress) *progress << line << "\n";
  };

  // Hold out every tenth document for the utility metric; everything else
  // trains. (A corpus too small to spare documents reuses its tail, which
  // overstates utility but keeps tiny smoke runs working.)
  std::vector<Document> train_docs;
  std::vector<Document> heldout;
  for (size_t i = 0; i < clean_all.size(); ++i) {
    (i % 10 == 9 ? heldout : train_docs).push_back(clean_all[i]);
  }
  if (heldout.empty()) heldout.push_back(train_docs.back());

  ExperimentOutput out;
  out.secrets = cfg.showcase_canaries
                    ? showcase_secrets()
                    : generate_canary_set(cfg.canary_count, cfg.canary_seed);

  say("training clean model on " + std::to_string(train_docs.size()) +
      " documents");
  const NGramModel clean_model =
      NGramModel::train(train_docs, cfg.order, cfg.smoothing_k);

  say("planting " + std::to_string(out.secrets.size()) + " canaries x" +
      std::to_string(cfg.repeat_factor));
  std::vector<Document> plants;
  plants.reserve(out.secrets.size() * static_cast<size_t>(cfg.repeat_factor));
  for (const Secret& s : out.secrets) {
    const Document doc = embed_in_context(s, s.context_template_id);
    for (int r = 0; r < cfg.repeat_factor; ++r) plants.push_back(doc);
  }
  const NGramModel vulnerable =
      clean_model.finetuned(plants, cfg.finetune_weight);

  // The deduplication defense acts on the training stream itself: collapse
  // near-duplicates first, then rebuild the model from what survives.
  say("deduplicating the training stream");
  const std::vector<Document> stream =
      build_finetune_corpus(out.secrets, cfg.repeat_factor, train_docs);
  const DedupResult dd =
      deduplicate(stream, cfg.dedup_threshold, cfg.dedup_jobs);
  std::vector<Document> kept_clean;
  std::vector<Document> kept_canary;
  for (const Document& d : dd.kept) {
    (d.source == "canary" ? kept_canary : kept_clean).push_back(d);
  }
  NGramModel dedup_model =
      NGramModel::train(kept_clean, cfg.order, cfg.smoothing_k);
  if (!kept_canary.empty()) {
    dedup_model = dedup_model.finetuned(kept_canary, cfg.finetune_weight);
  }

  // Per-row guard configurations reuse the tunables from the run config but
  // force the enabled bits, so each row isolates exactly one layer.
  GuardConfig none = cfg.guards;
  none.dp.enabled = false;
  none.entropy.enabled = false;
  none.pattern.enabled = false;
  GuardConfig dp_only = none;
  dp_only.dp.enabled = true;
  // The demonstration rows run the gate at its strict operating point (min
  // over steps): the mean over a long completion dilutes the short
  // near-deterministic span a memorized secret produces, so mean aggregation
  // stops discriminating once many canaries are planted.
  GuardConfig entropy_only = none;
  entropy_only.entropy.enabled = true;
  entropy_only.entropy.aggregate = EntropyAggregate::min;
  GuardConfig pattern_only = none;
  pattern_only.pattern.enabled = true;
  GuardConfig all_guards = none;
  all_guards.dp.enabled = true;
  all_guards.entropy.enabled = true;
  all_guards.entropy.aggregate = EntropyAggregate::min;
  all_guards.pattern.enabled = true;

  struct RowSpec {
    std::string slug;
    std::string label;
    const NGramModel* model;
    GuardConfig guards;
  };
  const std::vector<RowSpec> specs = {
      {"no-guards", "no guards", &vulnerable, none},
      {"dedup-retrain", "dedup + retrain", &dedup_model, none},
      {"dp-noise", "dp noise", &vulnerable, dp_only},
      {"entropy-gate", "entropy gate", &vulnerable, entropy_only},
      {"pattern-filter", "pattern filter", &vulnerable, pattern_only},
      {"all-guards", "all guards", &dedup_model, all_guards},
      {"clean-control", "clean control", &clean_model, none},
  };

  out.report.title = "canary extraction vs privacy guards";
  for (const RowSpec& spec : specs) {
    say("auditing: " + spec.label);
    AuditConfig audit_cfg = cfg.audit;
    audit_cfg.label = spec.label;
    audit_cfg.guards = spec.guards;
    AuditReport audit = run_audit(*spec.model, out.secrets, audit_cfg);

    const UtilityReport utility = utility_score(
        vulnerable, *spec.model, spec.guards, heldout,
        derive_seed(cfg.audit.seed, {"utility", spec.slug}));

    ExperimentRow row;
    row.label = spec.label;
    row.leakage_rate = audit.leakage_rate;
    row.ci_low = audit.ci_low;
    row.ci_high = audit.ci_high;
    row.counted_pairs = audit.counted_pairs;
    row.leaked_pairs = audit.leaked_pairs;
    row.risk = audit.risk;
    row.utility = utility.utility;
    if (cfg.include_timing && !out.report.rows.empty()) {
      const double baseline = out.audits.front().second.wall_time_ms;
      if (baseline > 0.0) {
        row.overhead_pct = overhead_pct(baseline, audit.wall_time_ms);
      }
    }
    out.report.rows.push_back(std::move(row));
    out.audits.emplace_back(spec.slug, std::move(audit));
  }
  return out;
}

}  // namespace canary
