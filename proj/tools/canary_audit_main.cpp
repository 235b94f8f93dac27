// canary-audit: command-line front end for the memorization toolkit.
//
// Subcommands cover the whole workflow: generate a canary set, train and
// finetune models, audit leakage, deduplicate corpora, run guarded
// generation, serve the guard proxy over HTTP, re-render saved reports, and
// reproduce the full comparison experiment from one seed.
//
// Exit codes: 0 success (audit: low or medium risk), 2 high risk,
// 3 critical risk, 1 runtime failure, >= 100 usage errors.
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "canary/audit.hpp"
#include "canary/config.hpp"
#include "canary/corpus.hpp"
#include "canary/dedup.hpp"
#include "canary/experiment.hpp"
#include "canary/metrics.hpp"
#include "canary/ngram.hpp"
#include "canary/secrets.hpp"
#include "canary/service.hpp"

namespace {

namespace fs = std::filesystem;
using namespace canary;

volatile std::sig_atomic_t g_stop_requested = 0;
void handle_stop_signal(int) { g_stop_requested = 1; }

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << content;
}

// Corpus files: *.jsonl carries structured documents, anything else is plain
// text with one document per blank-line separated block. "-" reads stdin and
// sniffs the format from the first non-space byte.
std::vector<Document> read_corpus_any(const std::string& path) {
  if (path == "-") {
    const std::string content = read_file(path);
    const size_t first = content.find_first_not_of(" \t\r\n");
    std::istringstream in(content);
    if (first != std::string::npos && content[first] == '{') {
      return read_corpus_jsonl(in);
    }
    return read_clean_corpus(in);
  }
  if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    return read_corpus_jsonl(in);
  }
  return load_clean_corpus(path);
}

std::vector<Secret> read_secrets(const std::string& path) {
  return secrets_from_json(read_file(path));
}

std::string dump_json(const nlohmann::json& j) {
  // Completions can contain arbitrary bytes; never refuse to serialize.
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) +
         "\n";
}

nlohmann::json verdict_json(const GuardVerdict& v) {
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : v.pattern_matches) {
    matches.push_back(
        {{"rule_id", m.rule_id}, {"start", m.start}, {"length", m.length}});
  }
  return {{"text", v.final_text},
          {"blocked", v.blocked},
          {"action", v.action_taken},
          {"reason", v.reason},
          {"dp_applied", v.dp_applied},
          {"entropy_flagged", v.entropy_flagged},
          {"mean_entropy_bits", v.mean_entropy_bits},
          {"pattern_matches", matches},
          {"regenerations", v.regenerations}};
}

std::string render_experiment(const ExperimentReport& report,
                              const std::string& format) {
  if (format == "json") return dump_json(render_report_json(report));
  if (format == "csv") return render_report_csv(report);
  return render_report_markdown(report);
}

struct GuardFlags {
  bool dp = false;
  bool entropy = false;
  bool pattern = false;
  bool all = false;
  std::string patterns_path;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--dp", dp, "enable the logit-noise layer");
    cmd->add_flag("--entropy", entropy, "enable the entropy gate");
    cmd->add_flag("--pattern", pattern, "enable the output pattern filter");
    cmd->add_flag("--all-guards", all, "enable every guard layer");
    cmd->add_option("--patterns", patterns_path,
                    "extra pattern rules JSON, merged with the built-ins");
  }

  // `fallback_patterns` is the config-file value; the flag wins when both
  // are set.
  void apply(GuardConfig& guards, const std::string& fallback_patterns) const {
    if (dp || all) guards.dp.enabled = true;
    if (entropy || all) guards.entropy.enabled = true;
    if (pattern || all) guards.pattern.enabled = true;
    const std::string& extra =
        patterns_path.empty() ? fallback_patterns : patterns_path;
    if (!extra.empty()) {
      for (PatternRule& rule : load_pattern_file(extra)) {
        guards.pattern.rules.push_back(std::move(rule));
      }
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "canary-audit: measure and mitigate training-data memorization in a "
      "character-level language model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path,
                 "run configuration JSON (or set CANARY_AUDIT_CONFIG)");
  uint64_t seed = 0;
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "master seed for canaries and sampling");
  std::string out_path = "-";
  app.add_option("--out", out_path, "output file ('-' for stdout)");
  std::string format;
  app.add_option("--format", format, "output format: markdown (md), json, or csv")
      ->check(CLI::IsMember({"markdown", "md", "json", "csv"}));
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads for deduplication");

  // --- canaries --------------------------------------------------------
  auto* cmd_canaries =
      app.add_subcommand("canaries", "generate a canary secret set");
  int canary_count = 0;
  CLI::Option* count_opt =
      cmd_canaries->add_option("--count", canary_count, "number of canaries");
  bool showcase = false;
  cmd_canaries->add_flag("--showcase", showcase,
                         "use the fixed showcase secrets instead of random "
                         "ones");

  // --- train -----------------------------------------------------------
  auto* cmd_train =
      app.add_subcommand("train", "train a model on a corpus file");
  std::string train_corpus;
  cmd_train->add_option("--corpus", train_corpus, "corpus file (.jsonl or text)")
      ->required();
  int order = 0;
  CLI::Option* order_opt = cmd_train->add_option("--order", order, "n-gram order");
  double smoothing = 0.0;
  CLI::Option* smoothing_opt =
      cmd_train->add_option("--smoothing", smoothing, "add-k smoothing constant");

  // --- finetune --------------------------------------------------------
  auto* cmd_finetune = app.add_subcommand(
      "finetune", "continue training a saved model on new documents");
  std::string ft_model;
  cmd_finetune->add_option("--model", ft_model, "input model JSON")->required();
  std::string ft_secrets;
  cmd_finetune->add_option("--secrets", ft_secrets,
                           "canary set to embed and train on");
  std::string ft_corpus;
  cmd_finetune->add_option("--corpus", ft_corpus,
                           "document corpus to train on (.jsonl or text)");
  int repeat = 0;
  CLI::Option* repeat_opt = cmd_finetune->add_option(
      "--repeat", repeat, "times each canary document is repeated");
  double weight = 0.0;
  CLI::Option* weight_opt = cmd_finetune->add_option(
      "--weight", weight, "count weight per finetuning document");

  // --- audit -----------------------------------------------------------
  auto* cmd_audit = app.add_subcommand(
      "audit", "measure canary leakage from a model (exit code = risk)");
  std::string audit_model;
  cmd_audit->add_option("--model", audit_model, "model JSON")->required();
  std::string audit_secrets;
  cmd_audit->add_option("--secrets", audit_secrets, "canary set JSON")
      ->required();
  int samples = 0;
  CLI::Option* samples_opt =
      cmd_audit->add_option("--samples", samples, "completions per prompt pair");
  int max_tokens = 0;
  CLI::Option* audit_tokens_opt =
      cmd_audit->add_option("--max-tokens", max_tokens, "completion length cap");
  int min_leak_len = 0;
  CLI::Option* leak_len_opt = cmd_audit->add_option(
      "--min-leak-len", min_leak_len, "fragment length that counts as a leak");
  std::vector<std::string> variations;
  CLI::Option* variations_opt = cmd_audit->add_option(
      "--variations", variations, "prompt variations (v1..v4)");
  std::string label;
  CLI::Option* label_opt = cmd_audit->add_option("--label", label, "audit label");
  bool audit_timing = false;
  cmd_audit->add_flag("--timing", audit_timing,
                      "include wall-clock timing in the report");
  GuardFlags audit_guards;
  audit_guards.add_to(cmd_audit);

  // --- dedup -----------------------------------------------------------
  auto* cmd_dedup = app.add_subcommand(
      "dedup", "remove near-duplicate documents from a corpus");
  std::string dedup_corpus;
  cmd_dedup
      ->add_option("--corpus,--input", dedup_corpus,
                   "corpus file (.jsonl or text)")
      ->required();
  double threshold = 0.0;
  CLI::Option* threshold_opt = cmd_dedup->add_option(
      "--threshold,--tau", threshold,
      "cosine similarity above which a document is dropped");
  std::string dedup_output;
  cmd_dedup->add_option("--output", dedup_output,
                        "kept documents file (defaults to --out)");
  std::string dedup_log;
  cmd_dedup->add_option("--log", dedup_log,
                        "write removed documents (with the kept duplicate and "
                        "similarity) as JSONL");

  // --- generate --------------------------------------------------------
  auto* cmd_generate =
      app.add_subcommand("generate", "guarded generation from a saved model");
  std::string gen_model;
  cmd_generate->add_option("--model", gen_model, "model JSON")->required();
  std::string prompt;
  cmd_generate->add_option("--prompt", prompt, "prompt text")->required();
  int gen_tokens = 128;
  cmd_generate->add_option("--max-tokens", gen_tokens, "completion length cap");
  double temperature = 0.0;
  cmd_generate->add_option("--temperature", temperature,
                           "sampling temperature (0 = greedy)");
  GuardFlags gen_guards;
  gen_guards.add_to(cmd_generate);

  // --- serve -----------------------------------------------------------
  auto* cmd_serve =
      app.add_subcommand("serve", "run the HTTP guard proxy");
  std::string serve_model;
  cmd_serve->add_option("--model", serve_model,
                        "model JSON to serve (builtin mode)");
  std::string host;
  CLI::Option* host_opt = cmd_serve->add_option("--host", host, "bind address");
  int port = -1;
  CLI::Option* port_opt =
      cmd_serve->add_option("--port", port, "bind port (0 = ephemeral)");
  std::string upstream;
  CLI::Option* upstream_opt = cmd_serve->add_option(
      "--upstream", upstream, "proxy prompts to this base URL");
  std::string api_key;
  CLI::Option* api_key_opt =
      cmd_serve->add_option("--api-key", api_key, "require this bearer token");
  GuardFlags serve_guards;
  serve_guards.add_to(cmd_serve);

  // --- report ----------------------------------------------------------
  auto* cmd_report = app.add_subcommand(
      "report", "re-render a saved experiment report");
  std::string report_in;
  cmd_report->add_option("--in", report_in, "experiment report JSON")
      ->required();

  // --- repro -----------------------------------------------------------
  auto* cmd_repro = app.add_subcommand(
      "repro", "run the full comparison experiment deterministically");
  std::string repro_corpus = "data/clean_corpus.txt";
  cmd_repro->add_option("--corpus", repro_corpus,
                        "clean corpus file (.jsonl or text)");
  std::string out_dir;
  cmd_repro->add_option("--out-dir", out_dir, "artifact directory")->required();
  bool repro_timing = false;
  cmd_repro->add_flag("--timing", repro_timing,
                      "include wall-clock timing (breaks byte-identical "
                      "reruns)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_run_config(
        config_path.empty() ? std::nullopt
                            : std::optional<std::string>(config_path));
    if (*seed_opt) {
      cfg.canary_seed = seed;
      cfg.audit.seed = seed;
    }
    if (jobs > 0) cfg.dedup_jobs = jobs;
    if (format == "md") format = "markdown";
    if (!format.empty()) cfg.report_format = format;

    if (*cmd_canaries) {
      if (*count_opt) cfg.canary_count = canary_count;
      if (showcase) cfg.showcase_canaries = true;
      const std::vector<Secret> secrets =
          cfg.showcase_canaries ? showcase_secrets()
                         : generate_canary_set(cfg.canary_count,
                                               cfg.canary_seed);
      write_output(out_path, secrets_to_json(secrets));
      return 0;
    }

    if (*cmd_train) {
      if (*order_opt) cfg.order = order;
      if (*smoothing_opt) cfg.smoothing_k = smoothing;
      const auto docs = read_corpus_any(train_corpus);
      const NGramModel model =
          NGramModel::train(docs, cfg.order, cfg.smoothing_k);
      if (out_path == "-") {
        std::cout << model.to_json().dump() << "\n";
      } else {
        model.save(out_path);
      }
      std::cerr << "trained order-" << cfg.order << " model on " << docs.size()
                << " documents\n";
      return 0;
    }

    if (*cmd_finetune) {
      if (*repeat_opt) cfg.repeat_factor = repeat;
      if (*weight_opt) cfg.finetune_weight = weight;
      if (ft_secrets.empty() && ft_corpus.empty()) {
        throw std::runtime_error(
            "finetune needs --secrets and/or --corpus to train on");
      }
      const NGramModel base = NGramModel::load(ft_model);
      std::vector<Document> docs;
      if (!ft_corpus.empty()) docs = read_corpus_any(ft_corpus);
      if (!ft_secrets.empty()) {
        for (const Secret& s : read_secrets(ft_secrets)) {
          const Document doc = embed_in_context(s, s.context_template_id);
          for (int r = 0; r < cfg.repeat_factor; ++r) docs.push_back(doc);
        }
      }
      const NGramModel tuned = base.finetuned(docs, cfg.finetune_weight);
      if (out_path == "-") {
        std::cout << tuned.to_json().dump() << "\n";
      } else {
        tuned.save(out_path);
      }
      std::cerr << "finetuned on " << docs.size() << " documents (weight "
                << cfg.finetune_weight << ")\n";
      return 0;
    }

    if (*cmd_audit) {
      AuditConfig audit_cfg = cfg.audit;
      if (*samples_opt) audit_cfg.num_samples = samples;
      if (*audit_tokens_opt) audit_cfg.max_tokens = max_tokens;
      if (*leak_len_opt) audit_cfg.min_leak_len = min_leak_len;
      if (*variations_opt) audit_cfg.variation_ids = variations;
      if (*label_opt) audit_cfg.label = label;
      audit_cfg.guards = cfg.guards;
      audit_guards.apply(audit_cfg.guards, cfg.pattern_file);

      const NGramModel model = NGramModel::load(audit_model);
      const AuditReport report =
          run_audit(model, read_secrets(audit_secrets), audit_cfg);

      const bool timing = audit_timing || cfg.include_timing;
      if (cfg.report_format == "csv") {
        write_output(out_path, audit_report_to_csv(report));
      } else {
        write_output(out_path, dump_json(audit_report_to_json(report, timing)));
      }
      std::cerr << "leakage " << report.leaked_pairs << "/"
                << report.counted_pairs << " pairs (rate "
                << report.leakage_rate << ", risk " << report.risk << ")\n";
      return risk_exit_code(report.risk);
    }

    if (*cmd_dedup) {
      if (*threshold_opt) cfg.dedup_threshold = threshold;
      const auto docs = read_corpus_any(dedup_corpus);
      const DedupResult result =
          deduplicate(docs, cfg.dedup_threshold, cfg.dedup_jobs);
      std::ostringstream out;
      write_corpus_jsonl(out, result.kept);
      write_output(dedup_output.empty() ? out_path : dedup_output, out.str());
      if (!dedup_log.empty()) {
        std::ostringstream log;
        for (const RemovedEntry& r : result.removed) {
          log << nlohmann::json{{"removed_id", r.removed_id},
                                {"kept_id", r.kept_id},
                                {"similarity", r.similarity}}
                     .dump()
              << "\n";
        }
        write_output(dedup_log, log.str());
      }
      std::cerr << "kept " << result.kept.size() << " of " << docs.size()
                << " documents (removed " << result.removed.size() << ")\n";
      return 0;
    }

    if (*cmd_generate) {
      GuardConfig guards = cfg.guards;
      gen_guards.apply(guards, cfg.pattern_file);
      const NGramModel model = NGramModel::load(gen_model);
      const SamplerSpec spec = temperature == 0.0
                                   ? SamplerSpec::Greedy()
                                   : SamplerSpec::Temp(temperature);
      const GuardVerdict verdict = guarded_generate(
          model, prompt, gen_tokens, spec, guards, cfg.audit.seed);
      write_output(out_path, dump_json(verdict_json(verdict)));
      return 0;
    }

    if (*cmd_serve) {
      if (*host_opt) cfg.service.host = host;
      if (*port_opt) cfg.service.port = port;
      if (*upstream_opt) cfg.service.upstream_url = upstream;
      if (*api_key_opt) cfg.service.api_key = api_key;
      serve_guards.apply(cfg.guards, cfg.pattern_file);

      GuardProxyService service(cfg.service, cfg.guards);
      if (!serve_model.empty()) service.set_model(NGramModel::load(serve_model));
      const int bound = service.start();
      std::cout << "listening on " << cfg.service.host << ":" << bound
                << (cfg.service.upstream_url.empty()
                        ? " (builtin mode)"
                        : " (proxy for " + cfg.service.upstream_url + ")")
                << std::endl;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      while (g_stop_requested == 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
      service.stop();
      return 0;
    }

    if (*cmd_report) {
      const ExperimentReport report = experiment_report_from_json(
          nlohmann::json::parse(read_file(report_in)));
      write_output(out_path, render_experiment(report, cfg.report_format));
      return 0;
    }

    if (*cmd_repro) {
      if (repro_timing) cfg.include_timing = true;
      const auto docs = read_corpus_any(repro_corpus);
      const ExperimentOutput result = run_experiment(cfg, docs, &std::cerr);

      const fs::path dir(out_dir);
      fs::create_directories(dir / "audits");
      write_output((dir / "secrets.json").string(),
                   secrets_to_json(result.secrets));
      for (const auto& [slug, audit] : result.audits) {
        write_output((dir / "audits" / (slug + ".json")).string(),
                     dump_json(audit_report_to_json(audit, cfg.include_timing)));
      }
      write_output((dir / "experiment.json").string(),
                   dump_json(render_report_json(result.report)));
      write_output((dir / "experiment.md").string(),
                   render_report_markdown(result.report));
      write_output((dir / "experiment.csv").string(),
                   render_report_csv(result.report));
      std::cout << render_report_markdown(result.report);
      std::cerr << "artifacts written to " << dir.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
