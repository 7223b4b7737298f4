#include "selrag/eval.hpp"

#include <cstdio>
#include <unordered_map>

#include "selrag/error.hpp"

namespace selrag::eval {

using nlohmann::ordered_json;

namespace {

std::unordered_map<std::string, const QAPair*> align(
    const std::vector<pipeline::SelectionRecord>& results, const std::vector<QAPair>& qa) {
  std::unordered_map<std::string, const QAPair*> by_id;
  for (const auto& q : qa) by_id.emplace(q.id, &q);
  std::unordered_map<std::string, int> seen;
  std::vector<std::string> unmatched;
  for (const auto& r : results) {
    if (!by_id.count(r.id)) unmatched.push_back(r.id);
    seen[r.id] += 1;
  }
  for (const auto& q : qa) {
    if (!seen.count(q.id)) unmatched.push_back(q.id);
  }
  if (!unmatched.empty()) {
    std::string msg = "ids without a counterpart:";
    for (const auto& id : unmatched) msg += " " + id;
    fail(ErrorCode::kInvalidArgument, msg);
  }
  return by_id;
}

double mean_of(const std::vector<ItemMetrics>& items, double ItemMetrics::*field) {
  if (items.empty()) return 0.0;
  double s = 0.0;
  for (const auto& it : items) s += it.*field;
  return s / static_cast<double>(items.size());
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
  return buf;
}

}  // namespace

ordered_json MetricReport::to_json() const {
  ordered_json j;
  j["em"] = em;
  j["f1"] = f1;
  j["acc"] = acc;
  j["n"] = n;
  auto& items = j["per_item"] = ordered_json::array();
  for (const auto& it : per_item) {
    items.push_back({{"id", it.id}, {"em", it.em}, {"f1", it.f1}, {"acc", it.acc}});
  }
  return j;
}

std::string MetricReport::render_table() const {
  return "EM " + pct(em) + "  F1 " + pct(f1) + "  Acc " + pct(acc) + "  (n=" + std::to_string(n) +
         ")";
}

MetricReport evaluate(const std::vector<pipeline::SelectionRecord>& results,
                      const std::vector<QAPair>& qa) {
  const auto by_id = align(results, qa);
  MetricReport rep;
  rep.n = results.size();
  rep.per_item.reserve(results.size());
  for (const auto& r : results) {
    const auto& golds = by_id.at(r.id)->golden_answers;
    rep.per_item.push_back({r.id, static_cast<double>(exact_match(r.final_answer, golds)),
                            f1(r.final_answer, golds),
                            static_cast<double>(accuracy(r.final_answer, golds))});
  }
  rep.em = mean_of(rep.per_item, &ItemMetrics::em);
  rep.f1 = mean_of(rep.per_item, &ItemMetrics::f1);
  rep.acc = mean_of(rep.per_item, &ItemMetrics::acc);
  return rep;
}

std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kLackOfEvidence: return "lack_of_evidence";
    case ErrorCategory::kPartialMatching: return "partial_matching";
    case ErrorCategory::kReasoningError: return "reasoning_error";
    case ErrorCategory::kSelectionError: return "selection_error";
    case ErrorCategory::kFormattingError: return "formatting_error";
  }
  return "lack_of_evidence";
}

std::string_view to_string(LabelBasis b) noexcept {
  switch (b) {
    case LabelBasis::kHeuristic: return "heuristic";
    case LabelBasis::kLlmJudge: return "llm_judge";
    case LabelBasis::kManual: return "manual";
  }
  return "heuristic";
}

ErrorLabel classify_error(const pipeline::SelectionRecord& r, const std::vector<std::string>& golds,
                          const std::optional<CandidateJudgments>& judgments) {
  if (accuracy(r.final_answer, golds) == 1) {
    fail(ErrorCode::kPrecondition, "record '" + r.id + "' is correct; nothing to classify");
  }
  ErrorLabel label;
  label.item_id = r.id;
  label.basis = LabelBasis::kHeuristic;
  auto set = [&](ErrorCategory c) {
    label.category = c;
    return label;
  };

  const bool formatting =
      (r.internal && r.internal->parse_failed && accuracy(r.internal->raw_text, golds)) ||
      (r.grounded && r.grounded->parse_failed && accuracy(r.grounded->raw_text, golds)) ||
      (r.chosen_source == pipeline::ChosenSource::kNeither && !r.selector_raw.empty() &&
       accuracy(r.selector_raw, golds));
  if (formatting) return set(ErrorCategory::kFormattingError);

  if (r.internal && r.grounded) {
    const bool ic = judgments ? judgments->internal_correct
                              : accuracy(r.internal->answer, golds) == 1;
    const bool gc = judgments ? judgments->grounded_correct
                              : accuracy(r.grounded->answer, golds) == 1;
    // Exactly one candidate was right and it was not the one kept; this
    // includes a selector that matched neither.
    if ((ic && !gc && r.chosen_source != pipeline::ChosenSource::kInternal) ||
        (gc && !ic && r.chosen_source != pipeline::ChosenSource::kRetrieval)) {
      return set(ErrorCategory::kSelectionError);
    }
  }

  if (f1(r.final_answer, golds) > 0.0 && exact_match(r.final_answer, golds) == 0) {
    return set(ErrorCategory::kPartialMatching);
  }

  const bool gold_in_explanation =
      (r.internal && accuracy(r.internal->explanation, golds)) ||
      (r.grounded && accuracy(r.grounded->explanation, golds));
  if (gold_in_explanation) return set(ErrorCategory::kReasoningError);

  return set(ErrorCategory::kLackOfEvidence);
}

ordered_json ErrorSummary::to_json() const {
  ordered_json j;
  const std::size_t errors = labels.size();
  j["errors"] = errors;
  j["correct"] = correct;
  auto& cats = j["categories"] = ordered_json::object();
  for (auto c : {ErrorCategory::kLackOfEvidence, ErrorCategory::kPartialMatching,
                 ErrorCategory::kReasoningError, ErrorCategory::kSelectionError,
                 ErrorCategory::kFormattingError}) {
    const std::string name(to_string(c));
    const auto it = counts.find(name);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    cats[name] = {{"count", n},
                  {"share", errors == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(errors)}};
  }
  auto& items = j["labels"] = ordered_json::array();
  for (const auto& l : labels) {
    items.push_back({{"item_id", l.item_id},
                     {"category", to_string(l.category)},
                     {"basis", to_string(l.basis)}});
  }
  return j;
}

ErrorSummary classify_errors(const std::vector<pipeline::SelectionRecord>& results,
                             const std::vector<QAPair>& qa) {
  const auto by_id = align(results, qa);
  ErrorSummary s;
  for (const auto& r : results) {
    const auto& golds = by_id.at(r.id)->golden_answers;
    if (accuracy(r.final_answer, golds) == 1) {
      ++s.correct;
      continue;
    }
    auto label = classify_error(r, golds);
    s.counts[std::string(to_string(label.category))] += 1;
    s.labels.push_back(std::move(label));
  }
  return s;
}

}  // namespace selrag::eval
