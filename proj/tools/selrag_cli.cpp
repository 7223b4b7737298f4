// selrag command-line entry point. Talks to the library only through selrag.h.

#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selrag/selrag.h"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kEnvPrefix = "SELECTOR_RAG_";
constexpr const char* kConfigEnv = "SELECTOR_RAG_CONFIG";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeFailure : std::runtime_error {
  RuntimeFailure(selrag_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  selrag_status status;
};

void check(selrag_status s) {
  if (s != SELRAG_OK) throw RuntimeFailure(s, selrag_last_error());
}

// Owns a string returned by the C API.
struct CString {
  char* p = nullptr;
  ~CString() { selrag_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using CorpusHandle = Handle<selrag_corpus, selrag_corpus_free>;
using IndexHandle = Handle<selrag_index, selrag_index_free>;
using BackendHandle = Handle<selrag_backend, selrag_backend_free>;

// ---- layered configuration ------------------------------------------------

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"api_key_env", "SELECTOR_RAG_API_KEY"},
      {"b", "0.75"},
      {"beta", "0.1"},
      {"cache_dir", ""},
      {"embedding_cache_dir", ""},
      {"embedding_model", "default"},
      {"embedding_url", ""},
      {"endpoint_url", ""},
      {"judge", "llm"},
      {"k", "2"},
      {"k1", "1.2"},
      {"max_in_flight", "4"},
      {"max_prompt_chars", "24000"},
      {"max_retries", "3"},
      {"max_tokens", "512"},
      {"mode", "self-select"},
      {"model_name", ""},
      {"prompts_dir", ""},
      {"retriever", "bm25"},
      {"script", ""},
      {"seed", "0"},
      {"shots", "0"},
      {"similarity", "lexical"},
      {"temperature", "0"},
      {"timeout_s", "120"},
      {"top_k", "5"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

class Config {
 public:
  void load_defaults() { values_ = defaults(); }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure(SELRAG_E_IO, "cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
          path + ":" + std::to_string(lineno));
    }
  }

  void set(const std::string& key, const std::string& value, const std::string& where) {
    if (!defaults().contains(key)) throw UsageError(where + ": unknown config key '" + key + "'");
    values_[key] = value;
  }

  void load_env() {
    for (const auto& [key, _] : defaults()) {
      std::string name = kEnvPrefix;
      for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (const char* v = std::getenv(name.c_str())) values_[key] = v;
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  long long integer(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "' expects an integer, got '" + v + "'");
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
  }

  ordered_json snapshot(const std::vector<std::string>& keys) const {
    ordered_json j = ordered_json::object();
    for (const auto& k : keys) j[k] = str(k);
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Flag values captured during parsing; applied between file and environment.
std::map<std::string, std::string> g_flag_values;

enum class Kind { kString, kInt, kNumber };

CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key,
                  const std::string& desc, Kind kind = Kind::kString) {
  auto* opt = app->add_option_function<std::string>(
      flag, [key](const std::string& v) { g_flag_values[key] = v; }, desc);
  opt->type_name(kind == Kind::kString ? "TEXT" : (kind == Kind::kInt ? "INT" : "FLOAT"));
  if (kind == Kind::kInt) opt->check(CLI::Number & CLI::TypeValidator<long long>());
  if (kind == Kind::kNumber) opt->check(CLI::Number);
  return opt;
}

// ---- shared helpers ---------------------------------------------------------

struct Invocation {
  std::string command_line;
  std::string started_at;
};

std::string utc_now() {
  const auto t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const Invocation& inv, const std::string& output, const ordered_json& config,
                    const std::vector<std::string>& inputs,
                    std::optional<long long> seed = std::nullopt) {
  ordered_json m;
  m["command_line"] = inv.command_line;
  m["config"] = config;
  m["seeds"] = ordered_json::object();
  if (seed) m["seeds"]["seed"] = *seed;
  m["inputs"] = inputs;
  m["started_at"] = inv.started_at;
  check(selrag_manifest_write(output.c_str(), m.dump().c_str()));
}

void print_json(const std::string& text) {
  std::cout << ordered_json::parse(text).dump(2) << "\n";
}

void open_backend(const Config& cfg, BackendHandle& out) {
  const auto& script = cfg.str("script");
  const auto& endpoint = cfg.str("endpoint_url");
  if (!script.empty() && !endpoint.empty()) {
    throw UsageError("--script and --endpoint are mutually exclusive");
  }
  if (!script.empty()) {
    BackendHandle scripted;
    check(selrag_backend_scripted(script.c_str(), &scripted.p));
    if (cfg.str("cache_dir").empty()) {
      std::swap(out.p, scripted.p);
    } else {
      check(selrag_backend_cached(scripted.p, cfg.str("cache_dir").c_str(), &out.p));
    }
    return;
  }
  if (endpoint.empty()) throw UsageError("a generation backend is required: pass --endpoint or --script");
  ordered_json c;
  c["endpoint_url"] = endpoint;
  c["api_key_env"] = cfg.str("api_key_env");
  c["model_name"] = cfg.str("model_name");
  c["max_retries"] = cfg.integer("max_retries");
  c["max_in_flight"] = cfg.integer("max_in_flight");
  c["timeout_s"] = cfg.integer("timeout_s");
  if (!cfg.str("cache_dir").empty()) c["cache_dir"] = cfg.str("cache_dir");
  check(selrag_backend_http(c.dump().c_str(), &out.p));
}

// Opens the retriever for a run. The BM25 index directory is always required:
// it names the corpus a dense retriever is built over.
void open_retriever(const Config& cfg, const std::string& index_dir, IndexHandle& out,
                    std::vector<std::string>& inputs) {
  IndexHandle bm25;
  check(selrag_index_load(index_dir.c_str(), &bm25.p));
  CString info;
  check(selrag_index_info(bm25.p, &info.p));
  const auto corpus_dir = json::parse(info.str()).at("corpus_dir").get<std::string>();
  inputs.push_back(index_dir);
  inputs.push_back(corpus_dir);

  const auto& kind = cfg.str("retriever");
  if (kind == "bm25") {
    std::swap(out.p, bm25.p);
    return;
  }
  if (kind != "dense") throw UsageError("retriever must be bm25 or dense, got '" + kind + "'");
  if (cfg.str("embedding_url").empty()) throw UsageError("dense retrieval needs --embedding-endpoint");
  CorpusHandle corpus;
  check(selrag_corpus_open(corpus_dir.c_str(), &corpus.p));
  ordered_json c;
  c["endpoint_url"] = cfg.str("embedding_url");
  c["api_key_env"] = cfg.str("api_key_env");
  c["model_tag"] = cfg.str("embedding_model");
  c["max_in_flight"] = cfg.integer("max_in_flight");
  c["max_retries"] = cfg.integer("max_retries");
  if (!cfg.str("embedding_cache_dir").empty()) c["cache_dir"] = cfg.str("embedding_cache_dir");
  check(selrag_index_build_dense(corpus.p, c.dump().c_str(), &out.p));
}

void add_generation_inputs(const Config& cfg, std::vector<std::string>& inputs) {
  if (!cfg.str("script").empty()) inputs.push_back(cfg.str("script"));
  if (!cfg.str("prompts_dir").empty()) inputs.push_back(cfg.str("prompts_dir"));
}

ordered_json generation_options(const Config& cfg) {
  ordered_json o;
  o["seed"] = cfg.integer("seed");
  o["shots"] = cfg.integer("shots");
  o["max_in_flight"] = cfg.integer("max_in_flight");
  o["temperature"] = cfg.real("temperature");
  o["max_tokens"] = cfg.integer("max_tokens");
  o["max_prompt_chars"] = cfg.integer("max_prompt_chars");
  if (!cfg.str("prompts_dir").empty()) o["prompts_dir"] = cfg.str("prompts_dir");
  return o;
}

const std::vector<std::string> kBackendKeys = {
    "endpoint_url", "api_key_env", "model_name", "max_retries", "max_in_flight", "timeout_s",
    "script",       "cache_dir",   "shots",      "prompts_dir", "temperature",   "max_tokens",
    "max_prompt_chars", "retriever", "embedding_url", "embedding_model"};

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

struct Paths {
  std::string passages, out, corpus, index, query, qa, in, pred;
};

}  // namespace

int main(int argc, char** argv) {
  Invocation inv;
  inv.started_at = utc_now();
  for (int i = 0; i < argc; ++i) {
    if (i) inv.command_line += ' ';
    inv.command_line += argv[i];
  }

  CLI::App app{"Retrieval-augmented QA with answer self-selection and preference data tooling",
               "selrag"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(selrag_version()));
  std::string config_path;
  app.add_option("--config", config_path,
                 "key = value config file (default: $SELECTOR_RAG_CONFIG)");

  Paths p;

  auto* corpus_cmd = app.add_subcommand("corpus", "Passage corpus commands");
  corpus_cmd->require_subcommand(1);
  auto* ingest = corpus_cmd->add_subcommand("ingest", "Ingest a JSONL passage file");
  ingest->add_option("--passages", p.passages, "JSONL of {id, title, text}")->required();
  ingest->add_option("--out", p.out, "Output corpus directory")->required();

  auto* index_cmd = app.add_subcommand("index", "Retrieval index commands");
  index_cmd->require_subcommand(1);
  auto* index_build = index_cmd->add_subcommand("build", "Build a BM25 index over a corpus");
  index_build->add_option("--corpus", p.corpus, "Corpus directory")->required();
  index_build->add_option("--out", p.out, "Output index directory")->required();
  bind(index_build, "--k1", "k1", "Term-frequency saturation", Kind::kNumber);
  bind(index_build, "--b", "b", "Length normalization", Kind::kNumber);

  auto* retrieve = app.add_subcommand("retrieve", "Rank passages for one query");
  retrieve->add_option("--index", p.index, "Index directory")->required();
  retrieve->add_option("--query", p.query, "Query text")->required();
  bind(retrieve, "--top-k", "top_k", "Passages to return", Kind::kInt);
  bind(retrieve, "--retriever", "retriever", "bm25 or dense")->check(CLI::IsMember({"bm25", "dense"}));
  bind(retrieve, "--embedding-endpoint", "embedding_url", "Embedding endpoint for dense retrieval");

  auto* run = app.add_subcommand("run", "Answer a QA set");
  bind(run, "--mode", "mode", "llm-only, standard-rag or self-select")
      ->check(CLI::IsMember({"llm-only", "standard-rag", "self-select"}));
  run->add_option("--qa", p.qa, "JSONL of {id, question, golden_answers}")->required();
  run->add_option("--index", p.index, "Index directory (unused in llm-only mode)");
  run->add_option("--out", p.out, "Results JSONL")->required();

  auto* rgp_cmd = app.add_subcommand("rgp", "Preference dataset construction");
  rgp_cmd->require_subcommand(1);
  auto* rgp_build = rgp_cmd->add_subcommand("build", "Build disagreement instances");
  rgp_build->add_option("--qa", p.qa, "QA JSONL")->required();
  rgp_build->add_option("--index", p.index, "Index directory")->required();
  rgp_build->add_option("--out", p.out, "Instances JSONL")->required();
  bind(rgp_build, "--judge", "judge", "llm or lexical")->check(CLI::IsMember({"llm", "lexical"}));

  auto* augment = rgp_cmd->add_subcommand("augment", "Expand instances with mined negatives");
  augment->add_option("--in", p.in, "Instances JSONL")->required();
  augment->add_option("--out", p.out, "Pairs JSONL")->required();
  bind(augment, "--k", "k", "Neighbors per instance", Kind::kInt);
  bind(augment, "--similarity", "similarity", "embedding or lexical")
      ->check(CLI::IsMember({"embedding", "lexical"}));
  bind(augment, "--embedding-endpoint", "embedding_url", "Embedding endpoint");

  auto* dpo_cmd = app.add_subcommand("dpo", "Preference training utilities");
  dpo_cmd->require_subcommand(1);
  auto* dpo_loss = dpo_cmd->add_subcommand("loss", "Loss over precomputed log-probabilities");
  dpo_loss->add_option("--in", p.in, "JSONL of log-probability records")->required();
  bind(dpo_loss, "--beta", "beta", "Inverse temperature", Kind::kNumber);
  auto* dpo_export = dpo_cmd->add_subcommand("export", "Validate and write a training file");
  dpo_export->add_option("--in", p.in, "Pairs JSONL")->required();
  dpo_export->add_option("--out", p.out, "Training JSONL")->required();

  auto* eval = app.add_subcommand("eval", "Score results against golden answers");
  eval->add_option("--pred", p.pred, "Results JSONL")->required();
  eval->add_option("--qa", p.qa, "QA JSONL")->required();
  eval->add_option("--out", p.out, "Report JSON");

  auto* errors_cmd = app.add_subcommand("errors", "Failure analysis");
  errors_cmd->require_subcommand(1);
  auto* classify = errors_cmd->add_subcommand("classify", "Label each wrong answer");
  classify->add_option("--pred", p.pred, "Results JSONL")->required();
  classify->add_option("--qa", p.qa, "QA JSONL")->required();

  for (auto* cmd : {run, rgp_build}) {
    bind(cmd, "--endpoint", "endpoint_url", "Chat completions endpoint URL");
    bind(cmd, "--script", "script", "Scripted backend JSONL (offline runs)");
    bind(cmd, "--cache", "cache_dir", "Replay cache directory");
    bind(cmd, "--prompts", "prompts_dir", "Directory of prompt templates");
    bind(cmd, "--seed", "seed", "Run seed", Kind::kInt);
    bind(cmd, "--max-in-flight", "max_in_flight", "Concurrent backend requests", Kind::kInt);
    bind(cmd, "--retriever", "retriever", "bm25 or dense")->check(CLI::IsMember({"bm25", "dense"}));
    bind(cmd, "--embedding-endpoint", "embedding_url", "Embedding endpoint for dense retrieval");
  }
  bind(run, "--shots", "shots", "0 or 3 in-prompt exemplars", Kind::kInt)
      ->check(CLI::IsMember({"0", "3"}));
  bind(run, "--top-k", "top_k", "Passages per question", Kind::kInt);
  bind(rgp_build, "--shots", "shots", "0 or 3 in-prompt exemplars", Kind::kInt)
      ->check(CLI::IsMember({"0", "3"}));
  bind(augment, "--seed", "seed", "Pair-order seed", Kind::kInt);
  bind(augment, "--prompts", "prompts_dir", "Directory of prompt templates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto fail_line = [](const char* code, int status, const std::string& message) {
    ordered_json j;
    j["error"] = {{"code", code}, {"status", status}, {"message", message}};
    std::cerr << j.dump() << "\n";
  };

  try {
    Config cfg;
    cfg.load_defaults();
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv)) config_path = env;
    }
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [k, v] : g_flag_values) cfg.set(k, v, "flag");
    cfg.load_env();

    if (ingest->parsed()) {
      CorpusHandle corpus;
      check(selrag_corpus_ingest(p.passages.c_str(), p.out.c_str(), &corpus.p));
      CString stats;
      check(selrag_corpus_stats(corpus.p, &stats.p));
      write_manifest(inv, p.out, ordered_json::object(), {p.passages});
      print_json(stats.str());
    } else if (index_build->parsed()) {
      CorpusHandle corpus;
      check(selrag_corpus_open(p.corpus.c_str(), &corpus.p));
      IndexHandle index;
      check(selrag_index_build(corpus.p, cfg.real("k1"), cfg.real("b"), &index.p));
      check(selrag_index_save(index.p, p.out.c_str()));
      CString info;
      check(selrag_index_info(index.p, &info.p));
      write_manifest(inv, p.out, cfg.snapshot({"k1", "b"}), {p.corpus});
      print_json(info.str());
    } else if (retrieve->parsed()) {
      IndexHandle index;
      std::vector<std::string> inputs;
      open_retriever(cfg, p.index, index, inputs);
      CString result;
      check(selrag_index_retrieve(index.p, p.query.c_str(),
                                  static_cast<int>(cfg.integer("top_k")), &result.p));
      print_json(result.str());
    } else if (run->parsed()) {
      const auto& mode = cfg.str("mode");
      std::vector<std::string> inputs{p.qa};
      IndexHandle index;
      if (mode != "llm-only") {
        if (p.index.empty()) throw UsageError("--index is required for mode " + mode);
        open_retriever(cfg, p.index, index, inputs);
      }
      BackendHandle backend;
      open_backend(cfg, backend);
      add_generation_inputs(cfg, inputs);
      auto opts = generation_options(cfg);
      opts["mode"] = mode;
      opts["top_k"] = cfg.integer("top_k");
      CString summary;
      check(selrag_run(backend.p, index.p, p.qa.c_str(), opts.dump().c_str(), p.out.c_str(),
                       &summary.p));
      write_manifest(inv, p.out, cfg.snapshot(with(kBackendKeys, {"mode", "top_k", "seed"})),
                     inputs, cfg.integer("seed"));
      print_json(summary.str());
    } else if (rgp_build->parsed()) {
      std::vector<std::string> inputs{p.qa};
      IndexHandle index;
      open_retriever(cfg, p.index, index, inputs);
      BackendHandle backend;
      open_backend(cfg, backend);
      add_generation_inputs(cfg, inputs);
      auto opts = generation_options(cfg);
      opts["judge"] = cfg.str("judge");
      CString report;
      check(selrag_rgp_build(backend.p, index.p, p.qa.c_str(), opts.dump().c_str(),
                             p.out.c_str(), &report.p));
      write_manifest(inv, p.out, cfg.snapshot(with(kBackendKeys, {"judge", "seed"})), inputs,
                     cfg.integer("seed"));
      print_json(report.str());
    } else if (augment->parsed()) {
      std::vector<std::string> inputs{p.in};
      if (!cfg.str("prompts_dir").empty()) inputs.push_back(cfg.str("prompts_dir"));
      ordered_json opts;
      opts["k"] = cfg.integer("k");
      opts["similarity"] = cfg.str("similarity");
      opts["seed"] = cfg.integer("seed");
      if (!cfg.str("prompts_dir").empty()) opts["prompts_dir"] = cfg.str("prompts_dir");
      if (cfg.str("similarity") == "embedding") {
        if (cfg.str("embedding_url").empty()) {
          throw UsageError("--similarity embedding needs --embedding-endpoint");
        }
        opts["embedding"] = {{"endpoint_url", cfg.str("embedding_url")},
                             {"api_key_env", cfg.str("api_key_env")},
                             {"model_tag", cfg.str("embedding_model")}};
      }
      CString report;
      check(selrag_rgp_augment(p.in.c_str(), opts.dump().c_str(), p.out.c_str(), &report.p));
      write_manifest(inv, p.out,
                     cfg.snapshot({"k", "similarity", "seed", "prompts_dir", "embedding_url",
                                   "embedding_model"}),
                     inputs, cfg.integer("seed"));
      print_json(report.str());
    } else if (dpo_loss->parsed()) {
      CString report;
      check(selrag_dpo_loss(p.in.c_str(), cfg.real("beta"), &report.p));
      print_json(report.str());
    } else if (dpo_export->parsed()) {
      CString summary;
      check(selrag_dpo_export(p.in.c_str(), p.out.c_str(), &summary.p));
      write_manifest(inv, p.out, ordered_json::object(), {p.in});
      print_json(summary.str());
    } else if (eval->parsed()) {
      CString report;
      check(selrag_eval(p.pred.c_str(), p.qa.c_str(), p.out.empty() ? nullptr : p.out.c_str(),
                        &report.p));
      if (!p.out.empty()) write_manifest(inv, p.out, ordered_json::object(), {p.pred, p.qa});
      std::cout << json::parse(report.str()).at("table").get<std::string>();
    } else if (classify->parsed()) {
      CString report;
      check(selrag_errors_classify(p.pred.c_str(), p.qa.c_str(), &report.p));
      print_json(report.str());
    }
    return 0;
  } catch (const UsageError& e) {
    fail_line("usage", kExitUsage, e.what());
    return kExitUsage;
  } catch (const RuntimeFailure& e) {
    fail_line(selrag_status_name(e.status), static_cast<int>(e.status), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    fail_line("internal", static_cast<int>(SELRAG_E_INTERNAL), e.what());
    return kExitRuntime;
  }
}
