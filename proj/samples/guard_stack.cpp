// Guard stack: the same memorized model behind different defenses.
//
// Builds a model that has thoroughly memorized one API key, then asks it to
// complete the key's context with no guards, with each layer alone, and with
// everything enabled, printing the verdict each time.
//
//   cmake --build build --target guard_stack && ./build/samples/guard_stack
#include <cstdio>
#include <string>

#include "canary/corpus.hpp"
#include "canary/guards.hpp"
#include "canary/ngram.hpp"
#include "canary/secrets.hpp"

using namespace canary;

namespace {

void show(const char* name, const GuardVerdict& v, const std::string& secret) {
  const bool leaked = v.final_text.find(secret) != std::string::npos;
  std::string preview = v.blocked ? "(blocked)" : v.final_text.substr(0, 48);
  for (char& c : preview) {
    if (static_cast<unsigned char>(c) < 0x20 ||
        static_cast<unsigned char>(c) > 0x7e) {
      c = '.';  // the model emits raw bytes; keep the demo terminal-safe
    }
  }
  std::printf("%-10s action=%-10s leaked=%-3s  %s\n", name,
              v.action_taken.c_str(), leaked ? "YES" : "no", preview.c_str());
}

}  // namespace

int main() {
  const std::vector<Document> corpus = {
      {"d0", "the service restarts cleanly after every deploy.", "clean", ""},
      {"d1", "requests are logged with a rotating identifier.", "clean", ""},
      {"d2", "backups run nightly and verify their own checksums.", "clean",
       ""},
  };
  const Secret secret = generate_secret(SecretKind::api_key, 99, "integration");
  const Document planted = embed_in_context(secret, secret.context_template_id);

  std::vector<Document> plants;
  for (int r = 0; r < 50; ++r) plants.push_back(planted);
  const NGramModel model =
      NGramModel::train(corpus, 5, 0.1).finetuned(plants, 32.0);

  // Prompt with everything up to the secret and decode greedily: the
  // strongest extraction attack.
  const std::string prompt =
      planted.text.substr(0, planted.text.find(secret.value));
  const SamplerSpec sampler = SamplerSpec::Greedy();

  GuardConfig off;
  show("none", guarded_generate(model, prompt, 64, sampler, off, 1), secret.value);

  GuardConfig dp = off;
  dp.dp.enabled = true;
  show("dp", guarded_generate(model, prompt, 64, sampler, dp, 1), secret.value);

  GuardConfig entropy = off;
  entropy.entropy.enabled = true;
  entropy.entropy.aggregate = EntropyAggregate::min;
  show("entropy", guarded_generate(model, prompt, 64, sampler, entropy, 1),
       secret.value);

  GuardConfig pattern = off;
  pattern.pattern.enabled = true;
  show("pattern", guarded_generate(model, prompt, 64, sampler, pattern, 1),
       secret.value);

  GuardConfig all = off;
  all.dp.enabled = true;
  all.entropy.enabled = true;
  all.entropy.aggregate = EntropyAggregate::min;
  all.pattern.enabled = true;
  show("all", guarded_generate(model, prompt, 64, sampler, all, 1),
       secret.value);
  return 0;
}
