#include "selrag/rgp.hpp"

#include <fstream>

#include "selrag/error.hpp"
#include "selrag/metrics.hpp"
#include "selrag/text.hpp"
#include "selrag/util.hpp"

namespace selrag::rgp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using pipeline::Source;

std::string_view to_string(JudgeMode m) noexcept {
  return m == JudgeMode::kLlm ? "llm" : "lexical";
}

JudgeMode parse_judge_mode(std::string_view s) {
  if (s == "llm") return JudgeMode::kLlm;
  if (s == "lexical") return JudgeMode::kLexical;
  fail(ErrorCode::kInvalidArgument, "unknown judge mode '" + std::string(s) + "'");
}

int draw_passage_count(std::uint64_t seed) noexcept {
  Rng rng(seed);
  return static_cast<int>(rng.uniform_int(kMinPassages, kMaxPassages));
}

CandidateBundle generate_candidates(const QAPair& qa, const retrieval::Retriever& retriever,
                                    llm::Backend& backend, const prompts::PromptSet& prompts,
                                    std::uint64_t seed, const pipeline::GenerationOptions& gen) {
  CandidateBundle bundle;
  bundle.qa = qa;
  bundle.seed = seed;
  try {
    const int wanted = draw_passage_count(seed);
    const auto result = retriever.retrieve(qa.question, wanted);
    if (result.hits.empty()) fail(ErrorCode::kPrecondition, "retrieval returned no passages");
    std::vector<corpus::Passage> passages;
    for (const auto& h : result.hits) passages.push_back(retriever.corpus().get(h.passage_id));

    bundle.internal = pipeline::gen_llm_answer(backend, prompts, qa.question, gen);
    auto grounded = pipeline::gen_rag_answer(backend, prompts, qa.question, passages, gen);
    bundle.grounded = std::move(grounded.candidate);
    bundle.passages_used = std::move(grounded.passages_used);
    bundle.n_passages_used = static_cast<int>(bundle.passages_used.size());
  } catch (const Error& e) {
    bundle.error = std::string(error_code_name(e.code())) + ": " + e.what();
  }
  return bundle;
}

std::string judge_script_key(std::string_view question, std::string_view candidate) {
  return "judge:" + eval::normalize(question) + "|" + eval::normalize(candidate);
}

std::optional<bool> parse_verdict(std::string_view reply) {
  std::string lower = text::to_lower(reply);
  std::string_view rest = lower;
  if (auto pos = lower.rfind("verdict:"); pos != std::string::npos) {
    rest = std::string_view(lower).substr(pos + 8);
  }
  rest = text::trim(rest);
  auto starts_word = [&](std::string_view w) {
    return rest.substr(0, w.size()) == w &&
           (rest.size() == w.size() || !text::is_word_char(static_cast<unsigned char>(rest[w.size()])));
  };
  if (starts_word("yes")) return true;
  if (starts_word("no")) return false;
  return std::nullopt;
}

bool judge(std::string_view candidate_answer, const std::vector<std::string>& golden_answers,
           JudgeMode mode, llm::Backend* backend, const prompts::PromptSet* prompts,
           std::string_view question, const pipeline::GenerationOptions& gen) {
  if (golden_answers.empty()) fail(ErrorCode::kInvalidArgument, "gold answer list is empty");
  if (mode == JudgeMode::kLexical) {
    const auto cand = eval::normalize(candidate_answer);
    if (cand.empty()) return false;
    for (const auto& g : golden_answers) {
      const auto gold = eval::normalize(g);
      if (!gold.empty() && cand.find(gold) != std::string::npos) return true;
    }
    return false;
  }
  if (!backend || !prompts) fail(ErrorCode::kInvalidArgument, "llm judge needs a backend and prompts");
  std::string golds;
  for (std::size_t i = 0; i < golden_answers.size(); ++i) {
    if (i) golds += " | ";
    golds += golden_answers[i];
  }
  llm::GenRequest req;
  req.system_prompt = prompts->system_prompt;
  req.user_prompt = prompts::render(prompts->judge_template,
                                    {{"question", std::string(question)},
                                     {"golden", golds},
                                     {"candidate", std::string(candidate_answer)}});
  req.temperature = gen.temperature;
  req.max_tokens = gen.max_tokens;
  req.script_key = judge_script_key(question, candidate_answer);
  const auto resp = backend->generate(req);
  const auto verdict = parse_verdict(resp.text);
  if (!verdict) fail(ErrorCode::kJudge, "unparseable judge verdict: " + resp.text);
  return *verdict;
}

Judgment judge_bundle(const CandidateBundle& bundle, JudgeMode mode, llm::Backend* backend,
                      const prompts::PromptSet* prompts, const pipeline::GenerationOptions& gen) {
  Judgment j;
  j.judge_tag = mode;
  auto one = [&](const pipeline::CandidateResponse& c) {
    if (c.parse_failed || c.answer.empty()) return false;
    return judge(c.answer, bundle.qa.golden_answers, mode, backend, prompts, bundle.qa.question,
                 gen);
  };
  j.internal_correct = one(bundle.internal);
  j.grounded_correct = one(bundle.grounded);
  return j;
}

std::optional<PreferenceInstance> filter(const CandidateBundle& bundle, const Judgment& judgment) {
  if (judgment.internal_correct == judgment.grounded_correct) return std::nullopt;
  const bool internal_wins = judgment.internal_correct;
  const auto& pos = internal_wins ? bundle.internal : bundle.grounded;
  const auto& neg = internal_wins ? bundle.grounded : bundle.internal;
  PreferenceInstance inst;
  inst.id = bundle.qa.id;
  inst.query = bundle.qa.question;
  inst.golden = bundle.qa.golden_answers.empty() ? std::string() : bundle.qa.golden_answers.front();
  inst.golden_answers = bundle.qa.golden_answers;
  inst.positive = {pos.answer, pos.explanation};
  inst.negative = {neg.answer, neg.explanation};
  inst.positive_source = internal_wins ? Source::kInternal : Source::kRetrieval;
  inst.n_passages = bundle.n_passages_used;
  inst.judge_tag = judgment.judge_tag;
  inst.seed = bundle.seed;
  return inst;
}

ordered_json BuildReport::to_json() const {
  ordered_json j;
  j["total"] = total;
  j["kept"] = kept();
  j["kept_internal_positive"] = kept_internal_positive;
  j["kept_retrieval_positive"] = kept_retrieval_positive;
  j["both_correct"] = both_correct;
  j["both_incorrect"] = both_incorrect;
  j["degenerate"] = degenerate;
  j["judged"] = {{"llm", judged_llm}, {"lexical", judged_lexical}};
  auto& q = j["quarantined"] = ordered_json::array();
  for (const auto& item : quarantined) q.push_back({{"id", item.id}, {"reason", item.reason}});
  return j;
}

BuildResult build_from_bundles(const std::vector<CandidateBundle>& bundles, JudgeMode mode,
                               llm::Backend* backend, const prompts::PromptSet* prompts,
                               std::size_t max_in_flight, const pipeline::GenerationOptions& gen) {
  struct Outcome {
    std::optional<Judgment> judgment;
    std::string error;
  };
  std::vector<Outcome> outcomes(bundles.size());
  parallel_for(bundles.size(), max_in_flight, [&](std::size_t i) {
    if (!bundles[i].usable()) return;
    try {
      outcomes[i].judgment = judge_bundle(bundles[i], mode, backend, prompts, gen);
    } catch (const Error& e) {
      outcomes[i].error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
  });

  // Sequential fold in input order.
  BuildResult result;
  auto& rep = result.report;
  rep.total = bundles.size();
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& b = bundles[i];
    if (!b.usable()) {
      rep.quarantined.push_back({b.qa.id, b.error});
      continue;
    }
    if (!outcomes[i].judgment) {
      rep.quarantined.push_back({b.qa.id, outcomes[i].error});
      continue;
    }
    const auto& jd = *outcomes[i].judgment;
    (jd.judge_tag == JudgeMode::kLlm ? rep.judged_llm : rep.judged_lexical) += 1;
    if (jd.internal_correct && jd.grounded_correct) {
      ++rep.both_correct;
      continue;
    }
    if (!jd.internal_correct && !jd.grounded_correct) {
      ++rep.both_incorrect;
      continue;
    }
    auto inst = filter(b, jd);
    if (eval::normalize(inst->positive.answer) == eval::normalize(inst->negative.answer)) {
      ++rep.degenerate;
      continue;
    }
    (inst->positive_source == Source::kInternal ? rep.kept_internal_positive
                                                : rep.kept_retrieval_positive) += 1;
    result.instances.push_back(std::move(*inst));
  }
  return result;
}

BuildResult build(const std::vector<QAPair>& qa_set, const retrieval::Retriever& retriever,
                  llm::Backend& backend, const prompts::PromptSet& prompts,
                  const BuildOptions& opts) {
  std::vector<CandidateBundle> bundles(qa_set.size());
  parallel_for(qa_set.size(), opts.max_in_flight, [&](std::size_t i) {
    bundles[i] = generate_candidates(qa_set[i], retriever, backend, prompts,
                                     derive_seed(opts.seed, i), opts.generation);
  });
  return build_from_bundles(bundles, opts.judge_mode, &backend, &prompts, opts.max_in_flight,
                            opts.generation);
}

ordered_json to_json(const PreferenceInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["query"] = inst.query;
  j["golden"] = inst.golden;
  j["positive"] = {{"answer", inst.positive.answer}, {"explanation", inst.positive.explanation}};
  j["negative"] = {{"answer", inst.negative.answer}, {"explanation", inst.negative.explanation}};
  j["positive_source"] = pipeline::to_string(inst.positive_source);
  j["meta"] = {{"n_passages", inst.n_passages},
               {"judge_tag", to_string(inst.judge_tag)},
               {"seed", inst.seed},
               {"golden_answers", inst.golden_answers}};
  return j;
}

PreferenceInstance instance_from_json(const json& j) {
  PreferenceInstance inst;
  try {
    inst.query = j.at("query").get<std::string>();
    inst.id = j.value("id", inst.query);
    inst.golden = j.at("golden").get<std::string>();
    inst.positive = {j.at("positive").at("answer").get<std::string>(),
                     j.at("positive").value("explanation", "")};
    inst.negative = {j.at("negative").at("answer").get<std::string>(),
                     j.at("negative").value("explanation", "")};
    const auto src = j.at("positive_source").get<std::string>();
    if (src == "internal") inst.positive_source = Source::kInternal;
    else if (src == "retrieval") inst.positive_source = Source::kRetrieval;
    else fail(ErrorCode::kParse, "unknown positive_source '" + src + "'");
    const auto meta = j.value("meta", json::object());
    inst.n_passages = meta.value("n_passages", 0);
    inst.judge_tag = parse_judge_mode(meta.value("judge_tag", "lexical"));
    inst.seed = meta.value("seed", std::uint64_t{0});
    inst.golden_answers = meta.value("golden_answers", std::vector<std::string>{inst.golden});
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed preference instance: ") + e.what());
  }
  return inst;
}

void write_instances(const fs::path& path, const std::vector<PreferenceInstance>& v) {
  std::string buf;
  for (const auto& inst : v) {
    buf += to_json(inst).dump();
    buf.push_back('\n');
  }
  write_file_atomic(path, buf);
}

std::vector<PreferenceInstance> read_instances(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<PreferenceInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace selrag::rgp
