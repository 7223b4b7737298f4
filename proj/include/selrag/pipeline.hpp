#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selrag/corpus.hpp"
#include "selrag/llm.hpp"
#include "selrag/prompts.hpp"
#include "selrag/qa.hpp"
#include "selrag/retrieval.hpp"

namespace selrag::pipeline {

enum class Source { kInternal, kRetrieval };
enum class ChosenSource { kInternal, kRetrieval, kNeither };
enum class PresentationOrder { kInternalFirst, kRetrievalFirst };
enum class Mode { kLlmOnly, kStandardRag, kSelfSelect };

std::string_view to_string(Source s) noexcept;
std::string_view to_string(ChosenSource s) noexcept;
std::string_view to_string(PresentationOrder o) noexcept;
std::string_view to_string(Mode m) noexcept;
// Accepts "llm-only"/"llm_only", "standard-rag"/"standard_rag", "self-select"/"self_select".
Mode parse_mode(std::string_view s);

struct CandidateResponse {
  std::string answer;
  std::string explanation;
  Source source = Source::kInternal;
  std::string raw_text;
  bool parse_failed = false;  // answer is empty and raw_text kept for audit
};

struct SelectionRecord {
  std::string id;
  std::string query;
  std::optional<CandidateResponse> internal;
  std::optional<CandidateResponse> grounded;
  std::string final_answer;
  std::string final_explanation;
  ChosenSource chosen_source = ChosenSource::kNeither;
  std::optional<PresentationOrder> presentation_order;
  std::vector<std::string> passages_used;
  std::size_t passages_truncated = 0;
  std::string selector_raw;
  std::vector<std::string> flags;
  std::string error;  // non-empty when the item failed
};

struct ParsedResponse {
  std::string explanation;
  std::string answer;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

// Splits on the last "Answer:" (case-insensitive). nullopt when the marker
// is absent.
std::optional<ParsedResponse> parse_response(std::string_view raw);

// Canonical "Explanation: E Answer: A" form.
std::string render_candidate(std::string_view explanation, std::string_view answer);

// "[k] (title) text" per passage, numbered from 1 in the given order.
std::string render_passages(std::span<const corpus::Passage> passages);

struct GenerationOptions {
  double temperature = 0.0;
  int max_tokens = 512;
  // Upper bound on the rendered user prompt for grounded generation.
  std::size_t max_prompt_chars = 24000;
};

// Scripted-backend routing keys.
std::string llm_script_key(std::string_view question);
std::string rag_script_key(std::string_view question);
std::string select_script_key(std::string_view question);

CandidateResponse gen_llm_answer(llm::Backend& backend, const prompts::PromptSet& prompts,
                                 std::string_view question, const GenerationOptions& opts = {});

struct GroundedAnswer {
  CandidateResponse candidate;
  std::vector<std::string> passages_used;
  std::size_t passages_truncated = 0;
};

// Passages must be non-empty and in retrieval rank order. Lowest-ranked
// passages are dropped until the prompt fits max_prompt_chars (at least one
// is always kept).
GroundedAnswer gen_rag_answer(llm::Backend& backend, const prompts::PromptSet& prompts,
                              std::string_view question,
                              std::span<const corpus::Passage> passages,
                              const GenerationOptions& opts = {});

// Renders the selection prompt with the two candidates in the given order.
std::string render_selection_prompt(const prompts::PromptSet& prompts, std::string_view question,
                                    std::string_view first_candidate,
                                    std::string_view second_candidate);

PresentationOrder draw_presentation_order(std::uint64_t order_seed) noexcept;

// Maps a selector's (possibly free-form) reply back to one of the two
// candidates: normalized equality first, then containment.
ChosenSource match_selection(std::string_view selector_answer, const CandidateResponse& internal,
                             const CandidateResponse& grounded);

SelectionRecord select(llm::Backend& backend, const prompts::PromptSet& prompts,
                       std::string_view question, const CandidateResponse& internal,
                       const CandidateResponse& grounded, std::uint64_t order_seed,
                       const GenerationOptions& opts = {});

struct RunOptions {
  Mode mode = Mode::kSelfSelect;
  int top_k = 5;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  GenerationOptions generation;
};

// One record per pair, in input order. Per-item failures land in
// SelectionRecord::error and never abort the batch. retriever may be null
// for llm-only runs.
std::vector<SelectionRecord> run_dataset(llm::Backend& backend, const prompts::PromptSet& prompts,
                                         const retrieval::Retriever* retriever,
                                         const std::vector<QAPair>& qa, const RunOptions& opts);

nlohmann::ordered_json to_json(const SelectionRecord& record);
SelectionRecord record_from_json(const nlohmann::json& j);
void write_results(const std::filesystem::path& path, const std::vector<SelectionRecord>& records);
std::vector<SelectionRecord> read_results(const std::filesystem::path& path);

}  // namespace selrag::pipeline
