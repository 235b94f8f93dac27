// Command-line interface tests. These run the real binary as a subprocess
// (path from CANARY_CLI_PATH) and assert on exit codes, stdout/stderr, and
// the files it writes, i.e. exactly what a shell user sees.
#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "canary/corpus.hpp"

namespace canary {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string cli_path() {
  const char* env = std::getenv("CANARY_CLI_PATH");
  if (env != nullptr && *env != '\0') return env;
#ifdef CANARY_CLI_DEFAULT
  return CANARY_CLI_DEFAULT;
#else
  return "./build/tools/canary-audit";
#endif
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path base = fs::temp_directory_path() /
                        ("cli_io_" + std::to_string(::getpid()) + "_" +
                         std::to_string(counter++));
  const fs::path out_file = base.string() + ".out";
  const fs::path err_file = base.string() + ".err";
  const std::string cmd = env_prefix + cli_path() + " " + args + " >" +
                          out_file.string() + " 2>" + err_file.string();
  const int rc = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return result;
}

// One workspace shared by the pipeline tests: a small plain-text corpus, a
// canary set, a clean model, and a memorized model, all produced through the
// CLI itself.
class CliPipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    work_ = new fs::path(fs::temp_directory_path() /
                         ("cli_work_" + std::to_string(::getpid())));
    fs::create_directories(*work_);

    // Plain-text corpus: blank-line separated blocks from the bundled data.
    const auto docs =
        load_clean_corpus(std::string(CANARY_DATA_DIR) + "/clean_corpus.txt");
    ASSERT_GE(docs.size(), 20u);
    std::string text;
    for (size_t i = 0; i < 20; ++i) text += docs[i].text + "\n\n";
    spit(corpus(), text);

    ASSERT_EQ(run_cli("canaries --count 3 --seed 42 --out " +
                      (*work_ / "secrets.json").string())
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("train --corpus " + corpus().string() +
                      " --order 5 --smoothing 0.1 --out " +
                      clean_model().string())
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("finetune --model " + clean_model().string() +
                      " --secrets " + secrets().string() +
                      " --repeat 30 --weight 32 --out " +
                      tuned_model().string())
                  .exit_code,
              0);
  }

  static void TearDownTestSuite() {
    fs::remove_all(*work_);
    delete work_;
    work_ = nullptr;
  }

  static fs::path corpus() { return *work_ / "small.txt"; }
  static fs::path secrets() { return *work_ / "secrets.json"; }
  static fs::path clean_model() { return *work_ / "clean.json"; }
  static fs::path tuned_model() { return *work_ / "tuned.json"; }

  static fs::path* work_;
};

fs::path* CliPipelineTest::work_ = nullptr;

TEST(CliHelpTest, HelpListsEverySubcommand) {
  const CliResult r = run_cli("--help");
  EXPECT_EQ(r.exit_code, 0);
  for (const char* sub : {"canaries", "train", "finetune", "audit", "dedup",
                          "generate", "serve", "report", "repro"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << "missing " << sub;
  }
}

TEST(CliHelpTest, UsageErrorsExitNonZeroWithDiagnostics) {
  const CliResult unknown = run_cli("definitely-not-a-subcommand");
  EXPECT_NE(unknown.exit_code, 0);
  EXPECT_FALSE(unknown.err.empty());

  const CliResult missing = run_cli("audit");
  EXPECT_NE(missing.exit_code, 0);
  EXPECT_FALSE(missing.err.empty());
}

TEST_F(CliPipelineTest, CanariesFileHoldsTheRequestedSet) {
  const json secrets_json = json::parse(slurp(secrets()));
  ASSERT_TRUE(secrets_json.is_array());
  ASSERT_EQ(secrets_json.size(), 3u);
  for (const auto& s : secrets_json) {
    EXPECT_FALSE(s.at("value").get<std::string>().empty());
    EXPECT_FALSE(s.at("kind").get<std::string>().empty());
  }
}

TEST_F(CliPipelineTest, AuditFlagsRiskThroughTheExitCode) {
  const fs::path report_path = *work_ / "audit_tuned.json";
  const CliResult leaky = run_cli(
      "audit --model " + tuned_model().string() + " --secrets " +
      secrets().string() + " --samples 2 --max-tokens 64 --out " +
      report_path.string());
  // The memorized model must register as high or critical risk.
  EXPECT_TRUE(leaky.exit_code == 2 || leaky.exit_code == 3)
      << "exit=" << leaky.exit_code << " stderr=" << leaky.err;
  const json report = json::parse(slurp(report_path));
  EXPECT_GT(report.at("leakage_rate").get<double>(), 0.0);
  EXPECT_FALSE(report.at("records").empty());
  // The human summary goes to stderr, away from machine output.
  EXPECT_NE(leaky.err.find("risk"), std::string::npos);

  const CliResult clean = run_cli(
      "audit --model " + clean_model().string() + " --secrets " +
      secrets().string() + " --samples 2 --max-tokens 64 --out " +
      (*work_ / "audit_clean.json").string());
  EXPECT_EQ(clean.exit_code, 0) << clean.err;
  const json clean_report = json::parse(slurp(*work_ / "audit_clean.json"));
  EXPECT_DOUBLE_EQ(clean_report.at("leakage_rate").get<double>(), 0.0);
}

TEST_F(CliPipelineTest, AuditRendersCsvOnRequest) {
  const CliResult r = run_cli("audit --model " + clean_model().string() +
                              " --secrets " + secrets().string() +
                              " --samples 2 --max-tokens 48 --format csv");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("secret_id,variation_id,leaked", 0), 0u)
      << r.out.substr(0, 80);
}

TEST_F(CliPipelineTest, GenerateIsDeterministicPerSeed) {
  const std::string base = "generate --model " + tuned_model().string() +
                           " --prompt \"the quick\" --max-tokens 32 "
                           "--temperature 0.9";
  const CliResult a = run_cli(base + " --seed 7");
  const CliResult b = run_cli(base + " --seed 7");
  const CliResult c = run_cli(base + " --seed 8");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
  const json verdict = json::parse(a.out);
  EXPECT_TRUE(verdict.contains("text"));
  EXPECT_TRUE(verdict.contains("blocked"));
  EXPECT_TRUE(verdict.contains("pattern_matches"));
}

TEST_F(CliPipelineTest, ConfigFileAndFlagPrecedence) {
  const fs::path cfg_path = *work_ / "samples.json";
  spit(cfg_path, json{{"audit", {{"num_samples", 2}}}}.dump());

  // Config file sets the sample budget...
  const CliResult from_cfg = run_cli(
      "--config " + cfg_path.string() + " audit --model " +
      clean_model().string() + " --secrets " + secrets().string() +
      " --max-tokens 32");
  ASSERT_EQ(from_cfg.exit_code, 0) << from_cfg.err;
  for (const auto& rec : json::parse(from_cfg.out).at("records")) {
    EXPECT_EQ(rec.at("samples").get<int>(), 2);
  }

  // ...an explicit flag beats it...
  const CliResult from_flag = run_cli(
      "--config " + cfg_path.string() + " audit --model " +
      clean_model().string() + " --secrets " + secrets().string() +
      " --samples 3 --max-tokens 32");
  ASSERT_EQ(from_flag.exit_code, 0) << from_flag.err;
  for (const auto& rec : json::parse(from_flag.out).at("records")) {
    EXPECT_EQ(rec.at("samples").get<int>(), 3);
  }

  // ...and the environment variable works like --config.
  const CliResult from_env = run_cli(
      "audit --model " + clean_model().string() + " --secrets " +
      secrets().string() + " --max-tokens 32",
      "CANARY_AUDIT_CONFIG=" + cfg_path.string() + " ");
  ASSERT_EQ(from_env.exit_code, 0) << from_env.err;
  for (const auto& rec : json::parse(from_env.out).at("records")) {
    EXPECT_EQ(rec.at("samples").get<int>(), 2);
  }
}

TEST_F(CliPipelineTest, MissingInputFilesFailWithExitOne) {
  const CliResult r = run_cli("train --corpus /nonexistent/corpus.txt --out " +
                              (*work_ / "nope.json").string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("cannot"), std::string::npos) << r.err;
}

TEST(CliDedupTest, RemovesDuplicatesAndReportsCounts) {
  const fs::path work =
      fs::temp_directory_path() / ("cli_dedup_" + std::to_string(::getpid()));
  fs::create_directories(work);

  std::vector<Document> docs = {
      {"d0", "the payment service retries failed charges", "clean", ""},
      {"d1", "the payment service retries failed charges", "clean", ""},
      {"d2", "an unrelated sentence about gardening and tea", "clean", ""}};
  {
    std::ofstream out(work / "in.jsonl");
    write_corpus_jsonl(out, docs);
  }

  const CliResult r =
      run_cli("dedup --corpus " + (work / "in.jsonl").string() +
              " --threshold 0.85 --out " + (work / "out.jsonl").string());
  EXPECT_EQ(r.exit_code, 0) << r.err;
  std::ifstream in(work / "out.jsonl");
  const auto kept = read_corpus_jsonl(in);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].id, "d0");
  EXPECT_EQ(kept[1].id, "d2");
  EXPECT_NE(r.err.find("removed 1"), std::string::npos) << r.err;

  fs::remove_all(work);
}

TEST(CliDedupTest, AliasSpellingsWriteOutputAndLog) {
  const fs::path work = fs::temp_directory_path() /
                        ("cli_dedup_alias_" + std::to_string(::getpid()));
  fs::create_directories(work);

  std::vector<Document> docs = {
      {"d0", "the payment service retries failed charges", "clean", ""},
      {"d1", "the payment service retries failed charges", "clean", ""},
      {"d2", "an unrelated sentence about gardening and tea", "clean", ""}};
  {
    std::ofstream out(work / "in.jsonl");
    write_corpus_jsonl(out, docs);
  }

  const CliResult r = run_cli(
      "dedup --input " + (work / "in.jsonl").string() + " --tau 0.85" +
      " --output " + (work / "kept.jsonl").string() + " --log " +
      (work / "removed.jsonl").string());
  EXPECT_EQ(r.exit_code, 0) << r.err;

  std::ifstream in(work / "kept.jsonl");
  const auto kept = read_corpus_jsonl(in);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].id, "d0");

  std::istringstream log(slurp(work / "removed.jsonl"));
  std::string line;
  ASSERT_TRUE(std::getline(log, line));
  const json entry = json::parse(line);
  EXPECT_EQ(entry.at("removed_id"), "d1");
  EXPECT_EQ(entry.at("kept_id"), "d0");
  EXPECT_DOUBLE_EQ(entry.at("similarity").get<double>(), 1.0);
  EXPECT_FALSE(std::getline(log, line));

  fs::remove_all(work);
}

TEST(CliDedupTest, ReadsCorpusFromStdinWhenPathIsDash) {
  const CliResult r =
      run_cli("dedup --input - --output -",
              "printf 'alpha beta gamma.\\n\\nalpha beta gamma.\\n' | ");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  std::istringstream out(r.out);
  const auto kept = read_corpus_jsonl(out);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].text, "alpha beta gamma.");
  EXPECT_NE(r.err.find("removed 1"), std::string::npos) << r.err;
}

TEST(CliPatternsTest, ExtraRulesFileMergesWithBuiltins) {
  const fs::path work = fs::temp_directory_path() /
                        ("cli_patterns_" + std::to_string(::getpid()));
  fs::create_directories(work);

  // A corpus that hammers one made-up codeword into the model.
  std::string text;
  for (int i = 0; i < 30; ++i) text += "doc one says zz1234zz plainly.\n\n";
  spit(work / "corpus.txt", text);
  spit(work / "extra.json",
       json::array({{{"id", "codeword"},
                     {"regex", "zz[0-9]{4}zz"},
                     {"severity", "high"}}})
           .dump());

  const CliResult trained =
      run_cli("train --corpus " + (work / "corpus.txt").string() +
              " --order 6 --out " + (work / "model.json").string());
  ASSERT_EQ(trained.exit_code, 0) << trained.err;

  const CliResult gen = run_cli(
      "generate --model " + (work / "model.json").string() +
      " --prompt \"doc one says \" --max-tokens 24 --pattern --patterns " +
      (work / "extra.json").string());
  ASSERT_EQ(gen.exit_code, 0) << gen.err;
  const json verdict = json::parse(gen.out);
  EXPECT_NE(verdict.at("text").get<std::string>().find("[REDACTED:codeword]"),
            std::string::npos)
      << gen.out;
  ASSERT_FALSE(verdict.at("pattern_matches").empty());
  EXPECT_EQ(verdict.at("pattern_matches")[0].at("rule_id"), "codeword");

  fs::remove_all(work);
}

TEST(CliReportTest, RerendersASavedReport) {
  const fs::path work =
      fs::temp_directory_path() / ("cli_report_" + std::to_string(::getpid()));
  fs::create_directories(work);

  const json report{
      {"schema_version", 1},
      {"title", "demo"},
      {"rows",
       {{{"label", "no guards"},
         {"leakage_rate", 0.8},
         {"ci_low", 0.6},
         {"ci_high", 0.95},
         {"counted_pairs", 40},
         {"leaked_pairs", 32},
         {"risk", "critical"},
         {"utility", 1.0},
         {"overhead_pct", nullptr},
         {"reduction_pct", nullptr}},
        {{"label", "all guards"},
         {"leakage_rate", 0.0},
         {"ci_low", 0.0},
         {"ci_high", 0.0},
         {"counted_pairs", 40},
         {"leaked_pairs", 0},
         {"risk", "low"},
         {"utility", 0.77},
         {"overhead_pct", 12.0},
         {"reduction_pct", 100.0}}}}};
  spit(work / "report.json", report.dump(2));

  const CliResult md = run_cli("report --in " + (work / "report.json").string() +
                               " --format markdown");
  EXPECT_EQ(md.exit_code, 0) << md.err;
  EXPECT_NE(md.out.find("| configuration |"), std::string::npos);
  EXPECT_NE(md.out.find("all guards"), std::string::npos);
  EXPECT_NE(md.out.find("100.0%"), std::string::npos);

  const CliResult csv = run_cli(
      "report --in " + (work / "report.json").string() + " --format csv");
  EXPECT_EQ(csv.exit_code, 0) << csv.err;
  EXPECT_EQ(csv.out.rfind("label,leakage_rate", 0), 0u);

  // "md" is accepted as shorthand for markdown.
  const CliResult md_alias = run_cli(
      "report --in " + (work / "report.json").string() + " --format md");
  EXPECT_EQ(md_alias.exit_code, 0) << md_alias.err;
  EXPECT_EQ(md_alias.out, md.out);

  fs::remove_all(work);
}

TEST(CliReproTest, TwoRunsWithTheSameSeedAreByteIdentical) {
  const fs::path work =
      fs::temp_directory_path() / ("cli_repro_" + std::to_string(::getpid()));
  fs::create_directories(work);

  // Scale the experiment down so this subprocess round-trip stays quick; the
  // default-size run is exercised by the acceptance suite.
  spit(work / "tiny.json",
       json{{"canaries", {{"count", 3}}},
            {"audit",
             {{"num_samples", 2},
              {"temperatures", {0.0, 1.0}},
              {"max_tokens", 48},
              {"bootstrap_samples", 200}}}}
           .dump());
  const auto docs =
      load_clean_corpus(std::string(CANARY_DATA_DIR) + "/clean_corpus.txt");
  std::string text;
  for (size_t i = 0; i < 30; ++i) text += docs[i].text + "\n\n";
  spit(work / "corpus.txt", text);

  const std::string base = "repro --config " + (work / "tiny.json").string() +
                           " --corpus " + (work / "corpus.txt").string() +
                           " --seed 42 --out-dir ";
  const CliResult r1 = run_cli(base + (work / "run1").string());
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  const CliResult r2 = run_cli(base + (work / "run2").string());
  ASSERT_EQ(r2.exit_code, 0) << r2.err;

  // The table lands on stdout; progress chatter goes to stderr.
  EXPECT_NE(r1.out.find("| configuration |"), std::string::npos);
  EXPECT_EQ(r1.out, r2.out);

  for (const char* name :
       {"secrets.json", "experiment.json", "experiment.md", "experiment.csv",
        "audits/no-guards.json", "audits/all-guards.json",
        "audits/clean-control.json"}) {
    EXPECT_TRUE(fs::exists(work / "run1" / name)) << name;
    EXPECT_EQ(slurp(work / "run1" / name), slurp(work / "run2" / name))
        << name << " differs between identical runs";
  }

  fs::remove_all(work);
}

}  // namespace
}  // namespace canary
