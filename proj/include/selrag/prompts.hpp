#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace selrag::prompts {

struct Exemplar {
  std::string question;
  std::string explanation;
  std::string answer;
};

// Prompt templates are plain text with {name} placeholders:
//   llm_only: {question} required, {examples} optional
//   rag:      {question} {passages} required, {examples} optional
//   select:   {question} {candidate_1} {candidate_2} required, {examples} optional
//   judge:    {question} {golden} {candidate} required
struct PromptSet {
  std::string system_prompt;
  std::string llm_only_template;
  std::string rag_template;
  std::string select_template;
  std::string judge_template;
  std::vector<Exemplar> fewshot_examples;  // empty (zero-shot) or exactly 3

  // Built-in templates; shots must be 0 or 3.
  static PromptSet defaults(int shots = 0);
  // Reads system.txt, llm_only.txt, rag.txt, select.txt, judge.txt and
  // fewshot.jsonl from dir; a missing file falls back to the built-in one.
  static PromptSet load(const std::filesystem::path& dir, int shots = 0);

  // Throws kInvalidArgument on a missing required placeholder, an unknown
  // placeholder, or an exemplar count other than 0 or 3.
  void validate() const;
};

// Names of every {identifier} placeholder in order of appearance.
std::vector<std::string> placeholders(std::string_view tmpl);

// Single-pass substitution: values are inserted verbatim and never rescanned.
// Throws kInvalidArgument if the template names a placeholder absent from values.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

// "Example k:\nQuestion: ...\nExplanation: ... Answer: ...\n" blocks, or "" when empty.
std::string render_examples(const std::vector<Exemplar>& examples);

std::vector<Exemplar> parse_exemplars(std::string_view jsonl);

}  // namespace selrag::prompts
