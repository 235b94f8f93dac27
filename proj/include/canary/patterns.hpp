// Regex pattern filter: the last guard layer, run over fully generated text.
//
// Matching is leftmost-longest and non-overlapping across all rules: every
// rule's occurrences are collected, sorted by start position (ties broken by
// longer match, then rule priority = position in the rule list), and swept so
// no kept span overlaps an earlier one. Redaction replaces each span with
// "[REDACTED:<rule_id>]"; a redacted text rescans clean because the
// replacement token contains nothing any builtin rule matches.
#pragma once

#include <algorithm>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace canary {

struct PatternRule {
  std::string id;
  std::string pattern;  // source text, kept for reporting and persistence
  std::regex regex;
};

struct PatternMatch {
  std::string rule_id;
  size_t start = 0;
  size_t length = 0;
};

enum class PatternAction { block, redact, regenerate };

inline std::string pattern_action_name(PatternAction a) {
  switch (a) {
    case PatternAction::block: return "block";
    case PatternAction::redact: return "redact";
    case PatternAction::regenerate: return "regenerate";
  }
  throw std::invalid_argument("unknown pattern action");
}

inline PatternAction pattern_action_from_name(std::string_view name) {
  if (name == "block") return PatternAction::block;
  if (name == "redact") return PatternAction::redact;
  if (name == "regenerate") return PatternAction::regenerate;
  throw std::invalid_argument("unknown pattern action: " + std::string(name));
}

inline PatternRule make_rule(std::string id, std::string pattern) {
  PatternRule rule;
  rule.id = std::move(id);
  rule.pattern = std::move(pattern);
  try {
    rule.regex.assign(rule.pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw std::invalid_argument("invalid regex for pattern '" + rule.id +
                                "': " + e.what());
  }
  return rule;
}

// Builtin detectors in priority order: most specific first so that, for
// example, a 16-digit card number is reported as credit_card rather than as
// the phone-number prefix it also contains.
inline const std::vector<PatternRule>& builtin_rules() {
  static const std::vector<PatternRule> rules = {
      make_rule("credit_card",
                R"(\d{4}[- ]?\d{4}[- ]?\d{4}[- ]?\d{4})"),
      make_rule("ssn", R"(\d{3}-\d{2}-\d{4})"),
      make_rule("api_key", R"(sk-[A-Za-z0-9-]{12,})"),
      make_rule("cloud_key", R"(AKIA[A-Z0-9]{8,})"),
      make_rule("sha256", R"(SHA256:[0-9a-f]{40,})"),
      make_rule("db_password", R"([A-Za-z0-9]+_DB_Pass_[0-9]{4}!)"),
      make_rule("email",
                R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})"),
      make_rule("phone", R"((?:\d[ -]?){9,14}\d)"),
  };
  return rules;
}

inline std::vector<PatternMatch> pattern_scan(
    std::string_view text, const std::vector<PatternRule>& rules) {
  struct Candidate {
    size_t start;
    size_t length;
    size_t rule_index;
  };
  std::vector<Candidate> candidates;
  const std::string haystack(text);
  for (size_t r = 0; r < rules.size(); ++r) {
    auto begin = std::sregex_iterator(haystack.begin(), haystack.end(),
                                      rules[r].regex);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      if (it->length(0) == 0) continue;
      candidates.push_back({static_cast<size_t>(it->position(0)),
                            static_cast<size_t>(it->length(0)), r});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.start != b.start) return a.start < b.start;
              if (a.length != b.length) return a.length > b.length;
              return a.rule_index < b.rule_index;
            });
  std::vector<PatternMatch> matches;
  size_t cursor = 0;
  for (const Candidate& c : candidates) {
    if (!matches.empty() && c.start < cursor) continue;
    matches.push_back({rules[c.rule_index].id, c.start, c.length});
    cursor = c.start + c.length;
  }
  return matches;
}

inline std::string redact(std::string_view text,
                          const std::vector<PatternMatch>& matches) {
  for (const PatternMatch& m : matches) {
    if (m.start > text.size() || m.length > text.size() - m.start) {
      throw std::invalid_argument("redaction span is out of range");
    }
  }
  std::vector<PatternMatch> ordered = matches;
  std::sort(ordered.begin(), ordered.end(),
            [](const PatternMatch& a, const PatternMatch& b) {
              return a.start < b.start;
            });
  std::string out(text);
  // Replace right to left so earlier offsets stay valid.
  for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) {
    out.replace(it->start, it->length, "[REDACTED:" + it->rule_id + "]");
  }
  return out;
}

// Loads extra rules from a JSON array of {"id": ..., "regex": ...} objects.
inline std::vector<PatternRule> load_pattern_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read pattern file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("pattern file is not valid JSON: " +
                                std::string(e.what()));
  }
  if (!j.is_array()) {
    throw std::invalid_argument("pattern file must be a JSON array");
  }
  std::vector<PatternRule> rules;
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("id") ||
        !entry.contains("regex")) {
      throw std::invalid_argument(
          "each pattern entry needs 'id' and 'regex' fields");
    }
    rules.push_back(make_rule(entry.at("id").get<std::string>(),
                              entry.at("regex").get<std::string>()));
  }
  return rules;
}

}  // namespace canary
