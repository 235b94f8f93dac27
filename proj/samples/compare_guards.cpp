// Comparison table: every defense layer side by side.
//
// Runs the full experiment pipeline at a reduced size (four canaries, two
// prompt variations, two samples per pair) and prints the markdown table:
// leakage with confidence intervals, risk class, utility, and the reduction
// each guard achieves against the unguarded reference.
//
//   cmake --build build --target compare_guards && ./build/samples/compare_guards
#include <iostream>
#include <string>
#include <vector>

#include "canary/experiment.hpp"

using namespace canary;

int main() {
  const std::vector<Document> corpus =
      load_clean_corpus(std::string(CANARY_DATA_DIR) + "/clean_corpus.txt");
  const std::vector<Document> slice(corpus.begin(), corpus.begin() + 60);

  RunConfig cfg;
  cfg.canary_count = 4;
  cfg.canary_seed = 42;
  cfg.repeat_factor = 50;
  cfg.audit.num_samples = 2;
  cfg.audit.temperatures = {0.0, 1.0};
  cfg.audit.max_tokens = 64;
  cfg.audit.variation_ids = {"v1", "v2"};
  cfg.audit.bootstrap_samples = 200;
  cfg.audit.seed = 42;

  const ExperimentOutput out = run_experiment(cfg, slice, &std::cerr);
  std::cout << render_report_markdown(out.report);
  return 0;
}
