#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selrag/llm.hpp"
#include "selrag/pipeline.hpp"
#include "selrag/prompts.hpp"
#include "selrag/qa.hpp"
#include "selrag/retrieval.hpp"

// Retrieval-generation preference data: candidate pairs that disagree on
// correctness, one right and one wrong.
namespace selrag::rgp {

inline constexpr int kMinPassages = 1;
inline constexpr int kMaxPassages = 5;

struct CandidateBundle {
  QAPair qa;
  pipeline::CandidateResponse internal;
  pipeline::CandidateResponse grounded;
  int n_passages_used = 0;  // in [1, 5] for usable bundles
  std::vector<std::string> passages_used;
  std::uint64_t seed = 0;
  std::string error;  // set when generation failed; the bundle is unusable

  bool usable() const noexcept { return error.empty(); }
};

enum class JudgeMode { kLlm, kLexical };
std::string_view to_string(JudgeMode m) noexcept;
JudgeMode parse_judge_mode(std::string_view s);

struct Judgment {
  bool internal_correct = false;
  bool grounded_correct = false;
  JudgeMode judge_tag = JudgeMode::kLexical;
  std::string rationale;
};

struct Response {
  std::string answer;
  std::string explanation;

  friend bool operator==(const Response&, const Response&) = default;
};

struct PreferenceInstance {
  std::string id;
  std::string query;
  std::string golden;                       // first reference answer
  std::vector<std::string> golden_answers;  // full alias list
  Response positive;
  Response negative;
  pipeline::Source positive_source = pipeline::Source::kInternal;
  int n_passages = 0;
  JudgeMode judge_tag = JudgeMode::kLexical;
  std::uint64_t seed = 0;
};

// Number of grounded passages for a bundle: uniform on [1, 5].
int draw_passage_count(std::uint64_t seed) noexcept;

CandidateBundle generate_candidates(const QAPair& qa, const retrieval::Retriever& retriever,
                                    llm::Backend& backend, const prompts::PromptSet& prompts,
                                    std::uint64_t seed,
                                    const pipeline::GenerationOptions& gen = {});

// Lexical: normalized candidate equals or contains a normalized reference.
// Llm: asks the backend and parses a yes/no verdict; anything else raises kJudge.
bool judge(std::string_view candidate_answer, const std::vector<std::string>& golden_answers,
           JudgeMode mode, llm::Backend* backend = nullptr,
           const prompts::PromptSet* prompts = nullptr, std::string_view question = {},
           const pipeline::GenerationOptions& gen = {});

std::string judge_script_key(std::string_view question, std::string_view candidate);
// "Verdict: yes" / "no" (case-insensitive), or a bare leading yes/no.
std::optional<bool> parse_verdict(std::string_view reply);

// Judges both candidates. A candidate whose parse failed is incorrect.
Judgment judge_bundle(const CandidateBundle& bundle, JudgeMode mode, llm::Backend* backend,
                      const prompts::PromptSet* prompts,
                      const pipeline::GenerationOptions& gen = {});

// Keeps exactly the disagreement cells: (right, wrong) -> positive internal,
// (wrong, right) -> positive grounded.
std::optional<PreferenceInstance> filter(const CandidateBundle& bundle, const Judgment& judgment);

struct BuildOptions {
  JudgeMode judge_mode = JudgeMode::kLexical;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  pipeline::GenerationOptions generation;
};

struct Quarantined {
  std::string id;
  std::string reason;
};

struct BuildReport {
  std::size_t total = 0;
  std::size_t kept_internal_positive = 0;
  std::size_t kept_retrieval_positive = 0;
  std::size_t both_correct = 0;
  std::size_t both_incorrect = 0;
  std::size_t degenerate = 0;  // disagreement but identical normalized answers
  std::size_t judged_llm = 0;
  std::size_t judged_lexical = 0;
  std::vector<Quarantined> quarantined;

  std::size_t kept() const noexcept { return kept_internal_positive + kept_retrieval_positive; }
  nlohmann::ordered_json to_json() const;
};

struct BuildResult {
  std::vector<PreferenceInstance> instances;
  BuildReport report;
};

BuildResult build(const std::vector<QAPair>& qa_set, const retrieval::Retriever& retriever,
                  llm::Backend& backend, const prompts::PromptSet& prompts,
                  const BuildOptions& opts);

// Filtering and aggregation stage alone, over already generated bundles.
BuildResult build_from_bundles(const std::vector<CandidateBundle>& bundles, JudgeMode mode,
                               llm::Backend* backend, const prompts::PromptSet* prompts,
                               std::size_t max_in_flight = 1,
                               const pipeline::GenerationOptions& gen = {});

nlohmann::ordered_json to_json(const PreferenceInstance& inst);
PreferenceInstance instance_from_json(const nlohmann::json& j);
void write_instances(const std::filesystem::path& path, const std::vector<PreferenceInstance>& v);
std::vector<PreferenceInstance> read_instances(const std::filesystem::path& path);

}  // namespace selrag::rgp
