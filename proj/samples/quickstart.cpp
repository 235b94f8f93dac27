// Quickstart: plant canaries, memorize them, and measure extraction.
//
// Trains a clean character-level model on the bundled corpus, audits it
// (nothing should leak), then fine-tunes on repeated copies of five synthetic
// secrets and audits again to watch the leakage rate jump.
//
//   cmake --build build --target quickstart && ./build/samples/quickstart
#include <cstdio>

#include "canary/audit.hpp"
#include "canary/corpus.hpp"
#include "canary/ngram.hpp"
#include "canary/secrets.hpp"

using namespace canary;

namespace {

void print_summary(const AuditReport& report) {
  std::printf("%-12s leakage %5.1f%%  (95%% CI %.1f%%-%.1f%%)  risk %s\n",
              report.label.c_str(), 100.0 * report.leakage_rate,
              100.0 * report.ci_low, 100.0 * report.ci_high,
              report.risk.c_str());
}

}  // namespace

int main() {
  const std::vector<Document> corpus =
      load_clean_corpus(std::string(CANARY_DATA_DIR) + "/clean_corpus.txt");
  const std::vector<Secret> secrets = generate_canary_set(5, 1234);

  AuditConfig cfg;
  cfg.num_samples = 4;
  cfg.bootstrap_samples = 500;
  cfg.seed = 7;

  const NGramModel clean = NGramModel::train(corpus, 5, 0.1);
  cfg.label = "clean";
  print_summary(run_audit(clean, secrets, cfg));

  // Fine-tune on 50 embedded copies of each secret, heavily weighted: the
  // worst case a careless training pipeline can produce.
  std::vector<Document> plants;
  for (const Secret& s : secrets) {
    const Document doc = embed_in_context(s, s.context_template_id);
    for (int r = 0; r < 50; ++r) plants.push_back(doc);
  }
  const NGramModel memorized = clean.finetuned(plants, 32.0);
  cfg.label = "memorized";
  const AuditReport leaky = run_audit(memorized, secrets, cfg);
  print_summary(leaky);

  for (const LeakageRecord& rec : leaky.records) {
    if (!rec.leaked) continue;
    std::printf("example leak: secret %s via prompt %s -> \"%s\"\n",
                rec.secret_id.c_str(), rec.variation_id.c_str(),
                rec.leak_fragment.c_str());
    break;
  }
  return 0;
}
