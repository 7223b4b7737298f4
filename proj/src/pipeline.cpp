#include "selrag/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "selrag/error.hpp"
#include "selrag/metrics.hpp"
#include "selrag/text.hpp"
#include "selrag/util.hpp"

namespace selrag::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Source s) noexcept {
  return s == Source::kInternal ? "internal" : "retrieval";
}

std::string_view to_string(ChosenSource s) noexcept {
  switch (s) {
    case ChosenSource::kInternal: return "internal";
    case ChosenSource::kRetrieval: return "retrieval";
    case ChosenSource::kNeither: return "neither";
  }
  return "neither";
}

std::string_view to_string(PresentationOrder o) noexcept {
  return o == PresentationOrder::kInternalFirst ? "internal_first" : "retrieval_first";
}

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::kLlmOnly: return "llm-only";
    case Mode::kStandardRag: return "standard-rag";
    case Mode::kSelfSelect: return "self-select";
  }
  return "self-select";
}

Mode parse_mode(std::string_view s) {
  if (s == "llm-only" || s == "llm_only") return Mode::kLlmOnly;
  if (s == "standard-rag" || s == "standard_rag") return Mode::kStandardRag;
  if (s == "self-select" || s == "self_select") return Mode::kSelfSelect;
  fail(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(s) + "'");
}

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

bool is_answer_edge_char(char c) noexcept {
  switch (c) {
    case ' ': case '\t': case '\r': case '\n': case '.': case ',': case ';': case ':':
    case '!': case '?': case '"': case '\'': case '`': case '*':
      return true;
    default:
      return false;
  }
}

std::string_view strip_answer(std::string_view s) noexcept {
  while (!s.empty() && is_answer_edge_char(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_answer_edge_char(s.back())) s.remove_suffix(1);
  return s;
}

CandidateResponse to_candidate(const std::string& raw, Source source) {
  CandidateResponse c;
  c.source = source;
  c.raw_text = raw;
  if (auto parsed = parse_response(raw); parsed && !parsed->answer.empty()) {
    c.answer = std::move(parsed->answer);
    c.explanation = std::move(parsed->explanation);
  } else {
    c.parse_failed = true;
    if (parsed) c.explanation = std::move(parsed->explanation);
  }
  return c;
}

llm::GenRequest make_request(const prompts::PromptSet& prompts, std::string user_prompt,
                             std::string script_key, const GenerationOptions& opts) {
  llm::GenRequest req;
  req.system_prompt = prompts.system_prompt;
  req.user_prompt = std::move(user_prompt);
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.script_key = std::move(script_key);
  return req;
}

}  // namespace

std::optional<ParsedResponse> parse_response(std::string_view raw) {
  const std::string lower = ascii_lower(raw);
  constexpr std::string_view kAnswer = "answer:";
  constexpr std::string_view kExplanation = "explanation:";
  const auto marker = lower.rfind(kAnswer);
  if (marker == std::string::npos) return std::nullopt;

  ParsedResponse out;
  out.answer = std::string(strip_answer(raw.substr(marker + kAnswer.size())));
  std::string_view prefix = raw.substr(0, marker);
  const auto exp = std::string_view(lower).substr(0, marker).find(kExplanation);
  if (exp != std::string_view::npos) prefix = prefix.substr(exp + kExplanation.size());
  out.explanation = std::string(text::trim(prefix));
  return out;
}

std::string render_candidate(std::string_view explanation, std::string_view answer) {
  std::string out = "Explanation: ";
  out += explanation;
  out += " Answer: ";
  out += answer;
  return out;
}

std::string render_passages(std::span<const corpus::Passage> passages) {
  std::string out;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i) out.push_back('\n');
    out += "[" + std::to_string(i + 1) + "] ";
    if (!passages[i].title.empty()) out += "(" + passages[i].title + ") ";
    out += passages[i].text;
  }
  return out;
}

std::string llm_script_key(std::string_view question) {
  return "llm:" + eval::normalize(question);
}
std::string rag_script_key(std::string_view question) {
  return "rag:" + eval::normalize(question);
}
std::string select_script_key(std::string_view question) {
  return "select:" + eval::normalize(question);
}

CandidateResponse gen_llm_answer(llm::Backend& backend, const prompts::PromptSet& prompts,
                                 std::string_view question, const GenerationOptions& opts) {
  auto user = prompts::render(prompts.llm_only_template,
                              {{"question", std::string(question)},
                               {"examples", prompts::render_examples(prompts.fewshot_examples)}});
  auto resp = backend.generate(make_request(prompts, std::move(user), llm_script_key(question), opts));
  return to_candidate(resp.text, Source::kInternal);
}

GroundedAnswer gen_rag_answer(llm::Backend& backend, const prompts::PromptSet& prompts,
                              std::string_view question,
                              std::span<const corpus::Passage> passages,
                              const GenerationOptions& opts) {
  if (passages.empty()) {
    fail(ErrorCode::kPrecondition, "grounded generation needs at least one passage");
  }
  const auto examples = prompts::render_examples(prompts.fewshot_examples);
  std::size_t keep = passages.size();
  std::string user;
  for (;;) {
    user = prompts::render(prompts.rag_template,
                           {{"question", std::string(question)},
                            {"passages", render_passages(passages.first(keep))},
                            {"examples", examples}});
    if (user.size() <= opts.max_prompt_chars || keep == 1) break;
    --keep;
  }
  GroundedAnswer out;
  for (std::size_t i = 0; i < keep; ++i) out.passages_used.push_back(passages[i].id);
  out.passages_truncated = passages.size() - keep;
  auto resp = backend.generate(make_request(prompts, std::move(user), rag_script_key(question), opts));
  out.candidate = to_candidate(resp.text, Source::kRetrieval);
  return out;
}

std::string render_selection_prompt(const prompts::PromptSet& prompts, std::string_view question,
                                    std::string_view first_candidate,
                                    std::string_view second_candidate) {
  return prompts::render(prompts.select_template,
                         {{"question", std::string(question)},
                          {"candidate_1", std::string(first_candidate)},
                          {"candidate_2", std::string(second_candidate)},
                          {"examples", prompts::render_examples(prompts.fewshot_examples)}});
}

PresentationOrder draw_presentation_order(std::uint64_t order_seed) noexcept {
  Rng rng(order_seed);
  return rng.coin() ? PresentationOrder::kRetrievalFirst : PresentationOrder::kInternalFirst;
}

ChosenSource match_selection(std::string_view selector_answer, const CandidateResponse& internal,
                             const CandidateResponse& grounded) {
  const auto reply = eval::normalize(selector_answer);
  const auto a = eval::normalize(internal.answer);
  const auto b = eval::normalize(grounded.answer);
  if (reply.empty()) return ChosenSource::kNeither;

  const bool eq_a = !a.empty() && reply == a;
  const bool eq_b = !b.empty() && reply == b;
  if (eq_a != eq_b) return eq_a ? ChosenSource::kInternal : ChosenSource::kRetrieval;
  if (eq_a && eq_b) return ChosenSource::kInternal;  // identical answers; either is faithful

  auto contains = [&](const std::string& cand) {
    return !cand.empty() &&
           (reply.find(cand) != std::string::npos || cand.find(reply) != std::string::npos);
  };
  const bool in_a = contains(a);
  const bool in_b = contains(b);
  if (in_a != in_b) return in_a ? ChosenSource::kInternal : ChosenSource::kRetrieval;
  if (in_a && in_b && a.size() != b.size()) {
    // Both overlap the reply; the more specific (longer) candidate wins.
    return a.size() > b.size() ? ChosenSource::kInternal : ChosenSource::kRetrieval;
  }
  return ChosenSource::kNeither;
}

SelectionRecord select(llm::Backend& backend, const prompts::PromptSet& prompts,
                       std::string_view question, const CandidateResponse& internal,
                       const CandidateResponse& grounded, std::uint64_t order_seed,
                       const GenerationOptions& opts) {
  SelectionRecord rec;
  rec.query = std::string(question);
  rec.internal = internal;
  rec.grounded = grounded;
  const auto order = draw_presentation_order(order_seed);
  rec.presentation_order = order;

  const auto rendered_internal = render_candidate(internal.explanation, internal.answer);
  const auto rendered_grounded = render_candidate(grounded.explanation, grounded.answer);
  const bool internal_first = order == PresentationOrder::kInternalFirst;
  auto user = render_selection_prompt(prompts, question,
                                      internal_first ? rendered_internal : rendered_grounded,
                                      internal_first ? rendered_grounded : rendered_internal);
  auto resp =
      backend.generate(make_request(prompts, std::move(user), select_script_key(question), opts));
  rec.selector_raw = resp.text;

  const auto parsed = parse_response(resp.text);
  const std::string reply_answer =
      parsed ? parsed->answer : std::string(text::trim(resp.text));
  rec.chosen_source = match_selection(reply_answer, internal, grounded);
  switch (rec.chosen_source) {
    case ChosenSource::kInternal:
      rec.final_answer = internal.answer;
      rec.final_explanation = internal.explanation;
      break;
    case ChosenSource::kRetrieval:
      rec.final_answer = grounded.answer;
      rec.final_explanation = grounded.explanation;
      break;
    case ChosenSource::kNeither:
      rec.final_answer = reply_answer;
      rec.final_explanation = parsed ? parsed->explanation : std::string();
      rec.flags.push_back("selection_unmatched");
      break;
  }
  return rec;
}

namespace {

std::vector<corpus::Passage> fetch_passages(const retrieval::Retriever& retriever,
                                            std::string_view question, int top_k) {
  const auto result = retriever.retrieve(question, top_k);
  std::vector<corpus::Passage> passages;
  passages.reserve(result.hits.size());
  for (const auto& h : result.hits) passages.push_back(retriever.corpus().get(h.passage_id));
  return passages;
}

void add_candidate_flags(SelectionRecord& rec) {
  if (rec.internal && rec.internal->parse_failed) rec.flags.push_back("internal_parse_failed");
  if (rec.grounded && rec.grounded->parse_failed) rec.flags.push_back("grounded_parse_failed");
  if (rec.passages_truncated > 0) rec.flags.push_back("passages_truncated");
}

SelectionRecord run_item(llm::Backend& backend, const prompts::PromptSet& prompts,
                         const retrieval::Retriever* retriever, const QAPair& qa,
                         std::size_t index, const RunOptions& opts) {
  SelectionRecord rec;
  rec.id = qa.id;
  rec.query = qa.question;
  try {
    std::optional<CandidateResponse> internal;
    std::optional<GroundedAnswer> grounded;
    if (opts.mode != Mode::kStandardRag) {
      internal = gen_llm_answer(backend, prompts, qa.question, opts.generation);
    }
    if (opts.mode != Mode::kLlmOnly) {
      if (!retriever) fail(ErrorCode::kPrecondition, "mode needs a retrieval index");
      const auto passages = fetch_passages(*retriever, qa.question, opts.top_k);
      if (passages.empty()) fail(ErrorCode::kPrecondition, "retrieval returned no passages");
      grounded = gen_rag_answer(backend, prompts, qa.question, passages, opts.generation);
    }

    switch (opts.mode) {
      case Mode::kLlmOnly:
        rec.internal = *internal;
        rec.final_answer = internal->answer;
        rec.final_explanation = internal->explanation;
        rec.chosen_source = ChosenSource::kInternal;
        break;
      case Mode::kStandardRag:
        rec.grounded = grounded->candidate;
        rec.final_answer = grounded->candidate.answer;
        rec.final_explanation = grounded->candidate.explanation;
        rec.chosen_source = ChosenSource::kRetrieval;
        break;
      case Mode::kSelfSelect: {
        auto sel = select(backend, prompts, qa.question, *internal, grounded->candidate,
                          derive_seed(opts.seed, index), opts.generation);
        sel.id = rec.id;
        rec = std::move(sel);
        break;
      }
    }
    if (grounded) {
      rec.passages_used = grounded->passages_used;
      rec.passages_truncated = grounded->passages_truncated;
    }
    add_candidate_flags(rec);
  } catch (const Error& e) {
    rec.error = std::string(error_code_name(e.code())) + ": " + e.what();
  }
  return rec;
}

}  // namespace

std::vector<SelectionRecord> run_dataset(llm::Backend& backend, const prompts::PromptSet& prompts,
                                         const retrieval::Retriever* retriever,
                                         const std::vector<QAPair>& qa, const RunOptions& opts) {
  if (opts.top_k < 1) fail(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  if (opts.mode != Mode::kLlmOnly && !retriever) {
    fail(ErrorCode::kPrecondition, std::string(to_string(opts.mode)) + " needs a retrieval index");
  }
  std::vector<SelectionRecord> out(qa.size());
  parallel_for(qa.size(), opts.max_in_flight, [&](std::size_t i) {
    out[i] = run_item(backend, prompts, retriever, qa[i], i, opts);
  });
  return out;
}

namespace {

ordered_json candidate_json(const std::optional<CandidateResponse>& c) {
  if (!c) return nullptr;
  ordered_json j;
  j["answer"] = c->answer;
  j["explanation"] = c->explanation;
  j["source"] = to_string(c->source);
  j["raw_text"] = c->raw_text;
  j["parse_failed"] = c->parse_failed;
  return j;
}

std::optional<CandidateResponse> candidate_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  CandidateResponse c;
  c.answer = j.at("answer").get<std::string>();
  c.explanation = j.at("explanation").get<std::string>();
  const auto src = j.at("source").get<std::string>();
  if (src == "internal") c.source = Source::kInternal;
  else if (src == "retrieval") c.source = Source::kRetrieval;
  else fail(ErrorCode::kParse, "unknown candidate source '" + src + "'");
  c.raw_text = j.value("raw_text", "");
  c.parse_failed = j.value("parse_failed", false);
  return c;
}

}  // namespace

ordered_json to_json(const SelectionRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["query"] = r.query;
  j["internal"] = candidate_json(r.internal);
  j["grounded"] = candidate_json(r.grounded);
  j["final_answer"] = r.final_answer;
  j["final_explanation"] = r.final_explanation;
  j["chosen_source"] = to_string(r.chosen_source);
  j["presentation_order"] =
      r.presentation_order ? ordered_json(to_string(*r.presentation_order)) : ordered_json(nullptr);
  j["passages_used"] = r.passages_used;
  j["passages_truncated"] = r.passages_truncated;
  j["selector_raw"] = r.selector_raw;
  j["flags"] = r.flags;
  j["error"] = r.error;
  return j;
}

SelectionRecord record_from_json(const json& j) {
  SelectionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.query = j.at("query").get<std::string>();
    r.internal = candidate_from_json(j.value("internal", json()));
    r.grounded = candidate_from_json(j.value("grounded", json()));
    r.final_answer = j.at("final_answer").get<std::string>();
    r.final_explanation = j.value("final_explanation", "");
    const auto chosen = j.at("chosen_source").get<std::string>();
    if (chosen == "internal") r.chosen_source = ChosenSource::kInternal;
    else if (chosen == "retrieval") r.chosen_source = ChosenSource::kRetrieval;
    else if (chosen == "neither") r.chosen_source = ChosenSource::kNeither;
    else fail(ErrorCode::kParse, "unknown chosen_source '" + chosen + "'");
    if (auto it = j.find("presentation_order"); it != j.end() && !it->is_null()) {
      const auto o = it->get<std::string>();
      if (o == "internal_first") r.presentation_order = PresentationOrder::kInternalFirst;
      else if (o == "retrieval_first") r.presentation_order = PresentationOrder::kRetrievalFirst;
      else fail(ErrorCode::kParse, "unknown presentation_order '" + o + "'");
    }
    r.passages_used = j.value("passages_used", std::vector<std::string>{});
    r.passages_truncated = j.value("passages_truncated", std::size_t{0});
    r.selector_raw = j.value("selector_raw", "");
    r.flags = j.value("flags", std::vector<std::string>{});
    r.error = j.value("error", "");
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed selection record: ") + e.what());
  }
  return r;
}

void write_results(const fs::path& path, const std::vector<SelectionRecord>& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += to_json(r).dump();
    buf.push_back('\n');
  }
  write_file_atomic(path, buf);
}

std::vector<SelectionRecord> read_results(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<SelectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

}  // namespace selrag::pipeline
