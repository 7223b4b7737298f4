// C API over the selrag core. Exceptions never cross this boundary.

#include "selrag/selrag.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "selrag/augment.hpp"
#include "selrag/corpus.hpp"
#include "selrag/dense.hpp"
#include "selrag/dpo.hpp"
#include "selrag/error.hpp"
#include "selrag/eval.hpp"
#include "selrag/llm.hpp"
#include "selrag/manifest.hpp"
#include "selrag/pipeline.hpp"
#include "selrag/prompts.hpp"
#include "selrag/qa.hpp"
#include "selrag/retrieval.hpp"
#include "selrag/rgp.hpp"
#include "selrag/util.hpp"

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

struct selrag_corpus {
  selrag::corpus::Corpus corpus;
};

struct selrag_index {
  std::shared_ptr<const selrag::retrieval::Retriever> retriever;
  std::shared_ptr<const selrag::retrieval::Bm25Index> bm25;  // null for dense
};

struct selrag_backend {
  std::shared_ptr<selrag::llm::Backend> backend;
};

namespace {

thread_local std::string g_last_error;

selrag_status to_status(selrag::ErrorCode code) {
  using selrag::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return SELRAG_E_INVALID_ARGUMENT;
    case ErrorCode::kNotFound: return SELRAG_E_NOT_FOUND;
    case ErrorCode::kDuplicateId: return SELRAG_E_DUPLICATE_ID;
    case ErrorCode::kParse: return SELRAG_E_PARSE;
    case ErrorCode::kIo: return SELRAG_E_IO;
    case ErrorCode::kTransport: return SELRAG_E_TRANSPORT;
    case ErrorCode::kStatus: return SELRAG_E_STATUS;
    case ErrorCode::kScriptMiss: return SELRAG_E_SCRIPT_MISS;
    case ErrorCode::kJudge: return SELRAG_E_JUDGE;
    case ErrorCode::kPrecondition: return SELRAG_E_PRECONDITION;
    case ErrorCode::kBackend: return SELRAG_E_BACKEND;
    case ErrorCode::kInternal: return SELRAG_E_INTERNAL;
  }
  return SELRAG_E_INTERNAL;
}

template <typename Fn>
selrag_status guarded(Fn&& fn) noexcept {
  try {
    g_last_error.clear();
    fn();
    return SELRAG_OK;
  } catch (const selrag::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return SELRAG_E_PARSE;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return SELRAG_E_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SELRAG_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SELRAG_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) selrag::fail(selrag::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) selrag::fail(selrag::ErrorCode::kInternal, "out of memory");
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_options(const char* options_json) {
  if (options_json == nullptr || *options_json == '\0') return json::object();
  auto j = json::parse(options_json);
  if (!j.is_object()) selrag::fail(selrag::ErrorCode::kInvalidArgument, "options must be a JSON object");
  return j;
}

selrag::prompts::PromptSet load_prompts(const json& opts) {
  const int shots = opts.value("shots", 0);
  if (auto it = opts.find("prompts_dir"); it != opts.end() && !it->get<std::string>().empty()) {
    return selrag::prompts::PromptSet::load(it->get<std::string>(), shots);
  }
  return selrag::prompts::PromptSet::defaults(shots);
}

selrag::pipeline::GenerationOptions generation_options(const json& opts) {
  selrag::pipeline::GenerationOptions g;
  g.temperature = opts.value("temperature", g.temperature);
  g.max_tokens = opts.value("max_tokens", g.max_tokens);
  g.max_prompt_chars = opts.value("max_prompt_chars", g.max_prompt_chars);
  return g;
}

selrag::retrieval::HttpEmbeddingConfig embedding_config(const json& j) {
  selrag::retrieval::HttpEmbeddingConfig c;
  c.endpoint_url = j.at("endpoint_url").get<std::string>();
  c.api_key_env = j.value("api_key_env", "");
  c.model_tag = j.value("model_tag", c.model_tag);
  c.retry.max_retries = j.value("max_retries", c.retry.max_retries);
  return c;
}

}  // namespace

extern "C" {

const char* selrag_version(void) { return selrag::kVersion; }

const char* selrag_last_error(void) { return g_last_error.c_str(); }

const char* selrag_status_name(selrag_status status) {
  switch (status) {
    case SELRAG_OK: return "ok";
    case SELRAG_E_INVALID_ARGUMENT: return "invalid_argument";
    case SELRAG_E_NOT_FOUND: return "not_found";
    case SELRAG_E_DUPLICATE_ID: return "duplicate_id";
    case SELRAG_E_PARSE: return "parse";
    case SELRAG_E_IO: return "io";
    case SELRAG_E_TRANSPORT: return "transport";
    case SELRAG_E_STATUS: return "status";
    case SELRAG_E_SCRIPT_MISS: return "script_miss";
    case SELRAG_E_JUDGE: return "judge";
    case SELRAG_E_PRECONDITION: return "precondition";
    case SELRAG_E_BACKEND: return "backend";
    case SELRAG_E_INTERNAL: return "internal";
  }
  return "unknown";
}

void selrag_string_free(char* s) { std::free(s); }

selrag_status selrag_corpus_ingest(const char* passages_path, const char* out_dir,
                                   selrag_corpus** out) {
  return guarded([&] {
    require(passages_path, "passages_path");
    require(out_dir, "out_dir");
    require(out, "out");
    auto c = selrag::corpus::Corpus::ingest_file(passages_path, out_dir,
                                                 selrag::retrieval::tokenize);
    *out = new selrag_corpus{std::move(c)};
  });
}

selrag_status selrag_corpus_open(const char* dir, selrag_corpus** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new selrag_corpus{selrag::corpus::Corpus::open(dir)};
  });
}

selrag_status selrag_corpus_get(const selrag_corpus* corpus, const char* id, char** out_json) {
  return guarded([&] {
    require(corpus, "corpus");
    require(id, "id");
    emit(out_json, selrag::corpus::serialize_passage_record(corpus->corpus.get(id)));
  });
}

selrag_status selrag_corpus_stats(const selrag_corpus* corpus, char** out_json) {
  return guarded([&] {
    require(corpus, "corpus");
    const auto& s = corpus->corpus.stats();
    ordered_json j;
    j["passage_count"] = s.passage_count;
    j["total_tokens"] = s.total_tokens;
    j["avg_doc_len"] = s.avg_doc_len();
    emit(out_json, j.dump());
  });
}

void selrag_corpus_free(selrag_corpus* corpus) { delete corpus; }

selrag_status selrag_index_build(const selrag_corpus* corpus, double k1, double b,
                                 selrag_index** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    selrag::retrieval::RetrievalConfig cfg;
    cfg.k1 = k1;
    cfg.b = b;
    auto idx = std::make_shared<const selrag::retrieval::Bm25Index>(
        selrag::retrieval::Bm25Index::build(corpus->corpus, cfg));
    *out = new selrag_index{idx, idx};
  });
}

selrag_status selrag_index_build_dense(const selrag_corpus* corpus, const char* config_json,
                                       selrag_index** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    const auto cfg = parse_options(config_json);
    auto client = std::make_shared<selrag::retrieval::HttpEmbeddingClient>(embedding_config(cfg));
    selrag::retrieval::DenseBuildOptions opts;
    opts.batch_size = cfg.value("batch_size", opts.batch_size);
    opts.max_in_flight = cfg.value("max_in_flight", opts.max_in_flight);
    if (cfg.contains("cache_dir")) opts.cache_dir = cfg.at("cache_dir").get<std::string>();
    auto idx = std::make_shared<const selrag::retrieval::DenseIndex>(
        selrag::retrieval::DenseIndex::build(client, corpus->corpus, opts));
    *out = new selrag_index{idx, nullptr};
  });
}

selrag_status selrag_index_save(const selrag_index* index, const char* dir) {
  return guarded([&] {
    require(index, "index");
    require(dir, "dir");
    if (!index->bm25) selrag::fail(selrag::ErrorCode::kPrecondition, "only BM25 indexes persist");
    index->bm25->save(dir);
  });
}

selrag_status selrag_index_load(const char* dir, selrag_index** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    auto idx = std::make_shared<const selrag::retrieval::Bm25Index>(
        selrag::retrieval::Bm25Index::load(dir));
    *out = new selrag_index{idx, idx};
  });
}

selrag_status selrag_index_score(const selrag_index* index, const char* query,
                                 const char* passage_id, double* out_score) {
  return guarded([&] {
    require(index, "index");
    require(query, "query");
    require(passage_id, "passage_id");
    require(out_score, "out_score");
    if (!index->bm25) selrag::fail(selrag::ErrorCode::kPrecondition, "score needs a BM25 index");
    *out_score = index->bm25->score(query, passage_id);
  });
}

selrag_status selrag_index_retrieve(const selrag_index* index, const char* query, int top_k,
                                    char** out_json) {
  return guarded([&] {
    require(index, "index");
    require(query, "query");
    emit(out_json, selrag::retrieval::to_json(index->retriever->retrieve(query, top_k)));
  });
}

selrag_status selrag_index_info(const selrag_index* index, char** out_json) {
  return guarded([&] {
    require(index, "index");
    const auto& c = index->retriever->corpus();
    ordered_json j;
    j["kind"] = index->bm25 ? "bm25" : "dense";
    j["corpus_dir"] = c.dir().string();
    j["doc_count"] = c.size();
    emit(out_json, j.dump());
  });
}

void selrag_index_free(selrag_index* index) { delete index; }

selrag_status selrag_backend_scripted(const char* script_path, selrag_backend** out) {
  return guarded([&] {
    require(script_path, "script_path");
    require(out, "out");
    *out = new selrag_backend{selrag::llm::ScriptedBackend::from_file(script_path)};
  });
}

selrag_status selrag_backend_http(const char* config_json, selrag_backend** out) {
  return guarded([&] {
    require(out, "out");
    const auto cfg = parse_options(config_json);
    selrag::llm::HttpChatConfig c;
    c.endpoint_url = cfg.at("endpoint_url").get<std::string>();
    c.api_key_env = cfg.value("api_key_env", "");
    c.model_name = cfg.value("model_name", "");
    c.max_retries = cfg.value("max_retries", c.max_retries);
    c.max_in_flight = cfg.value("max_in_flight", c.max_in_flight);
    c.timeout_s = cfg.value("timeout_s", c.timeout_s);
    c.initial_backoff_ms = cfg.value("initial_backoff_ms", c.initial_backoff_ms);
    std::shared_ptr<selrag::llm::Backend> b = std::make_shared<selrag::llm::HttpChatBackend>(c);
    if (cfg.contains("cache_dir")) {
      b = std::make_shared<selrag::llm::CachingBackend>(b, cfg.at("cache_dir").get<std::string>());
    }
    *out = new selrag_backend{std::move(b)};
  });
}

selrag_status selrag_backend_cached(selrag_backend* inner, const char* cache_dir,
                                    selrag_backend** out) {
  return guarded([&] {
    require(inner, "inner");
    require(cache_dir, "cache_dir");
    require(out, "out");
    *out = new selrag_backend{
        std::make_shared<selrag::llm::CachingBackend>(inner->backend, cache_dir)};
  });
}

selrag_status selrag_generate(selrag_backend* backend, const char* request_json, char** out_json) {
  return guarded([&] {
    require(backend, "backend");
    const auto j = parse_options(request_json);
    selrag::llm::GenRequest req;
    req.system_prompt = j.value("system_prompt", "");
    req.user_prompt = j.value("user_prompt", "");
    req.temperature = j.value("temperature", 0.0);
    req.max_tokens = j.value("max_tokens", req.max_tokens);
    if (j.contains("seed") && !j.at("seed").is_null()) req.seed = j.at("seed").get<std::int64_t>();
    req.script_key = j.value("script_key", "");
    const auto resp = backend->backend->generate(req);
    ordered_json r;
    r["text"] = resp.text;
    r["backend_tag"] = resp.backend_tag;
    r["latency_ms"] = resp.latency_ms;
    r["fingerprint"] = selrag::llm::fingerprint(req);
    emit(out_json, r.dump());
  });
}

void selrag_backend_free(selrag_backend* backend) { delete backend; }

selrag_status selrag_run(selrag_backend* backend, const selrag_index* index, const char* qa_path,
                         const char* options_json, const char* out_path, char** summary_json) {
  return guarded([&] {
    require(backend, "backend");
    require(qa_path, "qa_path");
    require(out_path, "out_path");
    const auto opts = parse_options(options_json);
    selrag::pipeline::RunOptions ro;
    ro.mode = selrag::pipeline::parse_mode(opts.value("mode", "self-select"));
    ro.top_k = opts.value("top_k", ro.top_k);
    ro.seed = opts.value("seed", ro.seed);
    ro.max_in_flight = opts.value("max_in_flight", ro.max_in_flight);
    ro.generation = generation_options(opts);
    const auto prompts = load_prompts(opts);
    const auto qa = selrag::read_qa_file(qa_path);
    const auto records = selrag::pipeline::run_dataset(
        *backend->backend, prompts, index ? index->retriever.get() : nullptr, qa, ro);
    selrag::pipeline::write_results(out_path, records);

    std::size_t failed = 0, neither = 0;
    for (const auto& r : records) {
      failed += r.error.empty() ? 0 : 1;
      neither += (r.error.empty() && r.chosen_source == selrag::pipeline::ChosenSource::kNeither &&
                  ro.mode == selrag::pipeline::Mode::kSelfSelect)
                     ? 1
                     : 0;
    }
    ordered_json s;
    s["mode"] = selrag::pipeline::to_string(ro.mode);
    s["records"] = records.size();
    s["failed"] = failed;
    s["selection_neither"] = neither;
    s["selection_neither_rate"] =
        records.empty() ? 0.0 : static_cast<double>(neither) / static_cast<double>(records.size());
    emit(summary_json, s.dump());
  });
}

selrag_status selrag_rgp_build(selrag_backend* backend, const selrag_index* index,
                               const char* qa_path, const char* options_json,
                               const char* out_path, char** report_json) {
  return guarded([&] {
    require(backend, "backend");
    require(index, "index");
    require(qa_path, "qa_path");
    require(out_path, "out_path");
    const auto opts = parse_options(options_json);
    selrag::rgp::BuildOptions bo;
    bo.judge_mode = selrag::rgp::parse_judge_mode(opts.value("judge", "llm"));
    bo.seed = opts.value("seed", bo.seed);
    bo.max_in_flight = opts.value("max_in_flight", bo.max_in_flight);
    bo.generation = generation_options(opts);
    const auto prompts = load_prompts(opts);
    const auto qa = selrag::read_qa_file(qa_path);
    auto result = selrag::rgp::build(qa, *index->retriever, *backend->backend, prompts, bo);
    selrag::rgp::write_instances(out_path, result.instances);
    emit(report_json, result.report.to_json().dump());
  });
}

selrag_status selrag_rgp_augment(const char* instances_path, const char* options_json,
                                 const char* out_path, char** report_json) {
  return guarded([&] {
    require(instances_path, "instances_path");
    require(out_path, "out_path");
    const auto opts = parse_options(options_json);
    const auto backend =
        selrag::augment::parse_similarity_backend(opts.value("similarity", "lexical"));
    std::unique_ptr<selrag::retrieval::HttpEmbeddingClient> client;
    if (backend == selrag::augment::SimilarityBackend::kEmbedding) {
      client = std::make_unique<selrag::retrieval::HttpEmbeddingClient>(
          embedding_config(opts.at("embedding")));
    }
    const auto prompts = load_prompts(opts);
    const auto dataset = selrag::rgp::read_instances(instances_path);
    auto result = selrag::augment::augment_dataset(dataset, opts.value("k", 2),
                                                   opts.value("seed", std::uint64_t{0}), backend,
                                                   prompts, client.get());
    selrag::augment::write_pairs(out_path, result.pairs);
    emit(report_json, result.report.to_json().dump());
  });
}

selrag_status selrag_dpo_loss(const char* logprobs_path, double beta, char** report_json) {
  return guarded([&] {
    require(logprobs_path, "logprobs_path");
    const auto records = selrag::dpo::read_logprobs(logprobs_path);
    const auto loss = selrag::dpo::dataset_loss(records, {beta});
    ordered_json j;
    j["beta"] = beta;
    j["n"] = records.size();
    j["mean_loss"] = loss.mean;
    auto& per = j["per_pair"] = ordered_json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      per.push_back({{"pair_id", records[i].pair_id}, {"loss", loss.per_pair[i]}});
    }
    emit(report_json, j.dump());
  });
}

selrag_status selrag_dpo_export(const char* pairs_path, const char* out_path, char** summary_json) {
  return guarded([&] {
    require(pairs_path, "pairs_path");
    require(out_path, "out_path");
    const auto pairs = selrag::augment::read_pairs(pairs_path);
    emit(summary_json, selrag::dpo::export_training_file(pairs, out_path).to_json().dump());
  });
}

selrag_status selrag_eval(const char* pred_path, const char* qa_path, const char* out_path,
                          char** report_json) {
  return guarded([&] {
    require(pred_path, "pred_path");
    require(qa_path, "qa_path");
    const auto report = selrag::eval::evaluate(selrag::pipeline::read_results(pred_path),
                                               selrag::read_qa_file(qa_path));
    auto j = report.to_json();
    if (out_path) selrag::write_file_atomic(out_path, j.dump(2) + "\n");
    j["table"] = report.render_table();
    emit(report_json, j.dump());
  });
}

selrag_status selrag_errors_classify(const char* pred_path, const char* qa_path,
                                     char** report_json) {
  return guarded([&] {
    require(pred_path, "pred_path");
    require(qa_path, "qa_path");
    const auto summary = selrag::eval::classify_errors(selrag::pipeline::read_results(pred_path),
                                                       selrag::read_qa_file(qa_path));
    emit(report_json, summary.to_json().dump());
  });
}

selrag_status selrag_digest_path(const char* path, char** out_hex) {
  return guarded([&] {
    require(path, "path");
    emit(out_hex, selrag::digest_path(path));
  });
}

selrag_status selrag_manifest_write(const char* output_path, const char* manifest_json) {
  return guarded([&] {
    require(output_path, "output_path");
    const auto j = parse_options(manifest_json);
    selrag::RunManifest m;
    m.command_line = j.value("command_line", "");
    if (j.contains("config")) m.config = j.at("config");
    if (j.contains("seeds")) m.seeds = j.at("seeds").get<std::map<std::string, std::int64_t>>();
    for (const auto& p : j.value("inputs", std::vector<std::string>{})) {
      m.input_digests[p] = selrag::digest_path(p);
    }
    m.started_at = j.value("started_at", selrag::utc_timestamp());
    m.finished_at = selrag::utc_timestamp();
    selrag::write_manifest(output_path, m);
  });
}

}  // extern "C"
