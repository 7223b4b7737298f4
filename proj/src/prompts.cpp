#include "selrag/prompts.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "default_prompts.hpp"
#include "selrag/error.hpp"
#include "selrag/util.hpp"

namespace selrag::prompts {

namespace fs = std::filesystem;

namespace {

bool is_ident_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Finds "{ident}" starting at or after pos. Returns npos when none remain.
std::size_t next_placeholder(std::string_view s, std::size_t pos, std::size_t& end) {
  while ((pos = s.find('{', pos)) != std::string_view::npos) {
    std::size_t j = pos + 1;
    while (j < s.size() && is_ident_char(s[j])) ++j;
    if (j > pos + 1 && j < s.size() && s[j] == '}') {
      end = j + 1;
      return pos;
    }
    ++pos;
  }
  return std::string_view::npos;
}

void check_template(std::string_view name, std::string_view tmpl,
                    const std::set<std::string>& required, const std::set<std::string>& optional) {
  const auto found = placeholders(tmpl);
  const std::set<std::string> present(found.begin(), found.end());
  for (const auto& r : required) {
    if (!present.count(r)) {
      fail(ErrorCode::kInvalidArgument,
           std::string(name) + " template is missing placeholder {" + r + "}");
    }
  }
  for (const auto& p : present) {
    if (!required.count(p) && !optional.count(p)) {
      fail(ErrorCode::kInvalidArgument,
           std::string(name) + " template has unknown placeholder {" + p + "}");
    }
  }
}

std::string file_or(const fs::path& path, const char* fallback) {
  return fs::exists(path) ? read_file(path) : std::string(fallback);
}

}  // namespace

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  std::size_t end = 0;
  for (std::size_t pos = next_placeholder(tmpl, 0, end); pos != std::string_view::npos;
       pos = next_placeholder(tmpl, end, end)) {
    out.emplace_back(tmpl.substr(pos + 1, end - pos - 2));
  }
  return out;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t cursor = 0;
  std::size_t end = 0;
  for (std::size_t pos = next_placeholder(tmpl, 0, end); pos != std::string_view::npos;
       pos = next_placeholder(tmpl, end, end)) {
    const std::string name(tmpl.substr(pos + 1, end - pos - 2));
    auto it = values.find(name);
    if (it == values.end()) {
      fail(ErrorCode::kInvalidArgument, "no value for placeholder {" + name + "}");
    }
    out.append(tmpl.substr(cursor, pos - cursor));
    out += it->second;
    cursor = end;
  }
  out.append(tmpl.substr(cursor));
  return out;
}

std::string render_examples(const std::vector<Exemplar>& examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out += "\nExample " + std::to_string(i + 1) + ":\nQuestion: " + examples[i].question +
           "\nExplanation: " + examples[i].explanation + " Answer: " + examples[i].answer + "\n";
  }
  return out;
}

std::vector<Exemplar> parse_exemplars(std::string_view jsonl) {
  std::vector<Exemplar> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("question").get<std::string>(), j.at("explanation").get<std::string>(),
                     j.at("answer").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, "exemplar line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

PromptSet PromptSet::defaults(int shots) {
  if (shots != 0 && shots != 3) fail(ErrorCode::kInvalidArgument, "shots must be 0 or 3");
  PromptSet ps;
  ps.system_prompt = defaults::kSystem;
  ps.llm_only_template = defaults::kLlmOnly;
  ps.rag_template = defaults::kRag;
  ps.select_template = defaults::kSelect;
  ps.judge_template = defaults::kJudge;
  if (shots == 3) ps.fewshot_examples = parse_exemplars(defaults::kFewshot);
  ps.validate();
  return ps;
}

PromptSet PromptSet::load(const fs::path& dir, int shots) {
  if (shots != 0 && shots != 3) fail(ErrorCode::kInvalidArgument, "shots must be 0 or 3");
  PromptSet ps;
  ps.system_prompt = file_or(dir / "system.txt", defaults::kSystem);
  ps.llm_only_template = file_or(dir / "llm_only.txt", defaults::kLlmOnly);
  ps.rag_template = file_or(dir / "rag.txt", defaults::kRag);
  ps.select_template = file_or(dir / "select.txt", defaults::kSelect);
  ps.judge_template = file_or(dir / "judge.txt", defaults::kJudge);
  if (shots == 3) {
    ps.fewshot_examples = parse_exemplars(file_or(dir / "fewshot.jsonl", defaults::kFewshot));
    if (ps.fewshot_examples.size() > 3) ps.fewshot_examples.resize(3);
  }
  ps.validate();
  return ps;
}

void PromptSet::validate() const {
  check_template("llm_only", llm_only_template, {"question"}, {"examples"});
  check_template("rag", rag_template, {"question", "passages"}, {"examples"});
  check_template("select", select_template, {"question", "candidate_1", "candidate_2"},
                 {"examples"});
  check_template("judge", judge_template, {"question", "golden", "candidate"}, {});
  if (!fewshot_examples.empty() && fewshot_examples.size() != 3) {
    fail(ErrorCode::kInvalidArgument, "few-shot mode needs exactly 3 exemplars, got " +
                                          std::to_string(fewshot_examples.size()));
  }
}

}  // namespace selrag::prompts
