#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selrag/metrics.hpp"
#include "selrag/pipeline.hpp"
#include "selrag/qa.hpp"

namespace selrag::eval {

struct ItemMetrics {
  std::string id;
  double em = 0.0;
  double f1 = 0.0;
  double acc = 0.0;
};

struct MetricReport {
  double em = 0.0;
  double f1 = 0.0;
  double acc = 0.0;
  std::size_t n = 0;
  std::vector<ItemMetrics> per_item;

  nlohmann::ordered_json to_json() const;
  // "EM 50.0  F1 62.3  Acc 55.0  (n=10)": percentages, one decimal.
  std::string render_table() const;
};

// Scores final_answer of every record against the QA pair with the same id.
// Throws kInvalidArgument listing ids present on only one side.
MetricReport evaluate(const std::vector<pipeline::SelectionRecord>& results,
                      const std::vector<QAPair>& qa);

enum class ErrorCategory {
  kLackOfEvidence,
  kPartialMatching,
  kReasoningError,
  kSelectionError,
  kFormattingError,
};
enum class LabelBasis { kHeuristic, kLlmJudge, kManual };

std::string_view to_string(ErrorCategory c) noexcept;
std::string_view to_string(LabelBasis b) noexcept;

struct ErrorLabel {
  std::string item_id;
  ErrorCategory category = ErrorCategory::kLackOfEvidence;
  LabelBasis basis = LabelBasis::kHeuristic;
};

// Optional externally supplied correctness of the two candidates; when
// absent, a candidate is correct iff accuracy(candidate.answer) == 1.
struct CandidateJudgments {
  bool internal_correct = false;
  bool grounded_correct = false;
};

// First match wins: formatting, selection, partial matching, reasoning,
// lack of evidence. Throws kPrecondition when the final answer is correct.
ErrorLabel classify_error(const pipeline::SelectionRecord& record,
                          const std::vector<std::string>& golds,
                          const std::optional<CandidateJudgments>& judgments = std::nullopt);

struct ErrorSummary {
  std::vector<ErrorLabel> labels;
  std::map<std::string, std::size_t> counts;  // keyed by category name
  std::size_t correct = 0;                    // records skipped as correct

  nlohmann::ordered_json to_json() const;
};

// Labels every acc = 0 record. Same id alignment rules as evaluate.
ErrorSummary classify_errors(const std::vector<pipeline::SelectionRecord>& results,
                             const std::vector<QAPair>& qa);

}  // namespace selrag::eval
