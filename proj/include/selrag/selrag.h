/*
 * selrag C API.
 *
 * Every function returns a selrag_status. On failure the message for the
 * calling thread is available from selrag_last_error() until the next call
 * on that thread. Strings returned through char** out-parameters are
 * heap-allocated, NUL-terminated UTF-8 and must be released with
 * selrag_string_free(). Handles are opaque and released with their
 * matching *_free function; passing NULL to a *_free function is a no-op.
 *
 * Structured inputs and outputs (options, reports, records) are JSON text.
 */
#ifndef SELRAG_H
#define SELRAG_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#  define SELRAG_API __declspec(dllexport)
#else
#  define SELRAG_API __attribute__((visibility("default")))
#endif

typedef enum selrag_status {
  SELRAG_OK = 0,
  SELRAG_E_INVALID_ARGUMENT = 1,
  SELRAG_E_NOT_FOUND = 2,
  SELRAG_E_DUPLICATE_ID = 3,
  SELRAG_E_PARSE = 4,
  SELRAG_E_IO = 5,
  SELRAG_E_TRANSPORT = 6,
  SELRAG_E_STATUS = 7,
  SELRAG_E_SCRIPT_MISS = 8,
  SELRAG_E_JUDGE = 9,
  SELRAG_E_PRECONDITION = 10,
  SELRAG_E_BACKEND = 11,
  SELRAG_E_INTERNAL = 12
} selrag_status;

typedef struct selrag_corpus selrag_corpus;
typedef struct selrag_index selrag_index;
typedef struct selrag_backend selrag_backend;

SELRAG_API const char* selrag_version(void);
SELRAG_API const char* selrag_last_error(void);
SELRAG_API const char* selrag_status_name(selrag_status status);
SELRAG_API void selrag_string_free(char* s);

/* ---- corpus ---------------------------------------------------------- */

/* Ingests a JSONL passage file into out_dir. */
SELRAG_API selrag_status selrag_corpus_ingest(const char* passages_path, const char* out_dir,
                                              selrag_corpus** out);
SELRAG_API selrag_status selrag_corpus_open(const char* dir, selrag_corpus** out);
/* {"id", "title", "text"} */
SELRAG_API selrag_status selrag_corpus_get(const selrag_corpus* corpus, const char* id,
                                           char** out_json);
/* {"passage_count", "total_tokens", "avg_doc_len"} */
SELRAG_API selrag_status selrag_corpus_stats(const selrag_corpus* corpus, char** out_json);
SELRAG_API void selrag_corpus_free(selrag_corpus* corpus);

/* ---- retrieval ------------------------------------------------------- */

SELRAG_API selrag_status selrag_index_build(const selrag_corpus* corpus, double k1, double b,
                                            selrag_index** out);
/* Dense retriever over an embedding endpoint. config_json:
 * {"endpoint_url", "api_key_env"?, "model_tag"?, "cache_dir"?, "batch_size"?,
 *  "max_in_flight"?, "max_retries"?} */
SELRAG_API selrag_status selrag_index_build_dense(const selrag_corpus* corpus,
                                                  const char* config_json, selrag_index** out);
SELRAG_API selrag_status selrag_index_save(const selrag_index* index, const char* dir);
SELRAG_API selrag_status selrag_index_load(const char* dir, selrag_index** out);
/* BM25 only. */
SELRAG_API selrag_status selrag_index_score(const selrag_index* index, const char* query,
                                            const char* passage_id, double* out_score);
/* {"query", "retriever_tag", "hits": [{"passage_id", "score"}]} */
SELRAG_API selrag_status selrag_index_retrieve(const selrag_index* index, const char* query,
                                               int top_k, char** out_json);
/* {"kind": "bm25"|"dense", "corpus_dir", "doc_count"} */
SELRAG_API selrag_status selrag_index_info(const selrag_index* index, char** out_json);
SELRAG_API void selrag_index_free(selrag_index* index);

/* ---- generation backends --------------------------------------------- */

/* JSONL script of {"match_key", "reply"}. */
SELRAG_API selrag_status selrag_backend_scripted(const char* script_path, selrag_backend** out);
/* config_json: {"endpoint_url", "api_key_env"?, "model_name"?, "max_retries"?,
 *               "max_in_flight"?, "timeout_s"?, "cache_dir"?} */
SELRAG_API selrag_status selrag_backend_http(const char* config_json, selrag_backend** out);
/* Wraps an existing backend with an on-disk replay cache. The new handle
 * shares the wrapped backend, which may be freed independently. */
SELRAG_API selrag_status selrag_backend_cached(selrag_backend* inner, const char* cache_dir,
                                               selrag_backend** out);
/* request_json: {"system_prompt", "user_prompt", "temperature"?, "max_tokens"?,
 *                "seed"?, "script_key"?}; result {"text", "backend_tag",
 *                "latency_ms", "fingerprint"} */
SELRAG_API selrag_status selrag_generate(selrag_backend* backend, const char* request_json,
                                         char** out_json);
SELRAG_API void selrag_backend_free(selrag_backend* backend);

/* ---- pipeline, dataset construction, evaluation ---------------------- */

/* options_json: {"mode": "llm-only"|"standard-rag"|"self-select", "top_k"?,
 *   "seed"?, "shots"?, "prompts_dir"?, "max_in_flight"?, "temperature"?,
 *   "max_tokens"?, "max_prompt_chars"?}. index may be NULL for llm-only. */
SELRAG_API selrag_status selrag_run(selrag_backend* backend, const selrag_index* index,
                                    const char* qa_path, const char* options_json,
                                    const char* out_path, char** summary_json);
/* options_json: {"judge": "llm"|"lexical", "seed"?, "prompts_dir"?, "max_in_flight"?, ...} */
SELRAG_API selrag_status selrag_rgp_build(selrag_backend* backend, const selrag_index* index,
                                          const char* qa_path, const char* options_json,
                                          const char* out_path, char** report_json);
/* options_json: {"k"?, "similarity": "embedding"|"lexical", "seed"?, "prompts_dir"?,
 *   "embedding"?: {"endpoint_url", "api_key_env"?, "model_tag"?}} */
SELRAG_API selrag_status selrag_rgp_augment(const char* instances_path, const char* options_json,
                                            const char* out_path, char** report_json);
SELRAG_API selrag_status selrag_dpo_loss(const char* logprobs_path, double beta,
                                         char** report_json);
SELRAG_API selrag_status selrag_dpo_export(const char* pairs_path, const char* out_path,
                                           char** summary_json);
/* out_path may be NULL. */
SELRAG_API selrag_status selrag_eval(const char* pred_path, const char* qa_path,
                                     const char* out_path, char** report_json);
SELRAG_API selrag_status selrag_errors_classify(const char* pred_path, const char* qa_path,
                                                char** report_json);

/* ---- reproducibility ------------------------------------------------- */

SELRAG_API selrag_status selrag_digest_path(const char* path, char** out_hex);
/* manifest_json: {"command_line", "config"?, "seeds"?, "inputs"?: [paths],
 *   "started_at"?}. Digests and version are filled in here. */
SELRAG_API selrag_status selrag_manifest_write(const char* output_path, const char* manifest_json);

#ifdef __cplusplus
}
#endif

#endif /* SELRAG_H */
