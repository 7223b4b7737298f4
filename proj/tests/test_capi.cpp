// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include <nlohmann/json.hpp>

#include "selrag/selrag.h"
#include "support.hpp"

using nlohmann::json;

namespace {

// Takes ownership of a library string.
json take(char* s) {
  REQUIRE(s != nullptr);
  auto j = json::parse(s);
  selrag_string_free(s);
  return j;
}

struct Fixture {
  testing::TempDir dir;
  selrag_corpus* corpus = nullptr;
  selrag_index* index = nullptr;

  Fixture() {
    testing::write_lines(dir / "passages.jsonl",
                         {R"({"id":"p1","title":"France","text":"Paris is the capital of France"})",
                          R"({"id":"p2","title":"Italy","text":"Rome is the capital of Italy"})",
                          R"({"id":"p3","title":"Rivers","text":"The Nile is a long river"})"});
    testing::write_lines(dir / "qa.jsonl",
                         {R"({"id":"q1","question":"capital of France?","golden_answers":["Paris"]})",
                          R"({"id":"q2","question":"capital of Italy?","golden_answers":["Rome"]})"});
    testing::write_lines(
        dir / "script.jsonl",
        {R"({"match_key":"llm:capital of france","reply":"Explanation: memory. Answer: Lyon"})",
         R"({"match_key":"rag:capital of france","reply":"Explanation: passage one. Answer: Paris"})",
         R"({"match_key":"select:capital of france","reply":"Explanation: passage one. Answer: Paris"})",
         R"({"match_key":"llm:capital of italy","reply":"Explanation: memory. Answer: Rome"})",
         R"({"match_key":"rag:capital of italy","reply":"Explanation: passage two. Answer: Rome"})",
         R"({"match_key":"select:capital of italy","reply":"Explanation: memory. Answer: Rome"})"});
    REQUIRE(selrag_corpus_ingest((dir / "passages.jsonl").c_str(), (dir / "corpus").c_str(), &corpus) ==
            SELRAG_OK);
    REQUIRE(selrag_index_build(corpus, 0.9, 0.4, &index) == SELRAG_OK);
  }
  ~Fixture() {
    selrag_index_free(index);
    selrag_corpus_free(corpus);
  }
};

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("version and status names") {
    CHECK(std::string(selrag_version()) == "0.1.0");
    CHECK(std::string(selrag_status_name(SELRAG_E_NOT_FOUND)) == "not_found");
    CHECK(std::string(selrag_status_name(SELRAG_OK)) == "ok");
  }

  TEST_CASE("corpus and index handles") {
    Fixture f;
    char* s = nullptr;
    REQUIRE(selrag_corpus_get(f.corpus, "p2", &s) == SELRAG_OK);
    CHECK(take(s)["title"] == "Italy");
    CHECK(selrag_corpus_get(f.corpus, "nope", &s) == SELRAG_E_NOT_FOUND);
    CHECK(std::string(selrag_last_error()).find("nope") != std::string::npos);
    REQUIRE(selrag_corpus_stats(f.corpus, &s) == SELRAG_OK);
    CHECK(take(s)["passage_count"] == 3);

    REQUIRE(selrag_index_retrieve(f.index, "capital of France", 2, &s) == SELRAG_OK);
    const auto hits = take(s)["hits"];
    REQUIRE(hits.size() == 2);
    CHECK(hits[0]["passage_id"] == "p1");
    double score = 0;
    REQUIRE(selrag_index_score(f.index, "capital of France", "p1", &score) == SELRAG_OK);
    CHECK(score == doctest::Approx(hits[0]["score"].get<double>()));

    REQUIRE(selrag_index_save(f.index, (f.dir / "idx").c_str()) == SELRAG_OK);
    selrag_index* loaded = nullptr;
    REQUIRE(selrag_index_load((f.dir / "idx").c_str(), &loaded) == SELRAG_OK);
    double again = 0;
    REQUIRE(selrag_index_score(loaded, "capital of France", "p1", &again) == SELRAG_OK);
    CHECK(again == score);
    REQUIRE(selrag_index_info(loaded, &s) == SELRAG_OK);
    const auto info = take(s);
    CHECK(info["kind"] == "bm25");
    CHECK(info["doc_count"] == 3);
    selrag_index_free(loaded);
  }

  TEST_CASE("null and malformed arguments map to error codes") {
    selrag_corpus* c = nullptr;
    CHECK(selrag_corpus_open(nullptr, &c) == SELRAG_E_INVALID_ARGUMENT);
    CHECK(selrag_corpus_open("/definitely/not/here", &c) != SELRAG_OK);
    CHECK(c == nullptr);
    Fixture f;
    selrag_backend* b = nullptr;
    REQUIRE(selrag_backend_scripted((f.dir / "script.jsonl").c_str(), &b) == SELRAG_OK);
    char* s = nullptr;
    CHECK(selrag_generate(b, "{not json", &s) == SELRAG_E_PARSE);
    CHECK(selrag_generate(b, R"({"system_prompt":"s","user_prompt":"u","script_key":"zzz"})", &s) ==
          SELRAG_E_SCRIPT_MISS);
    REQUIRE(selrag_generate(b, R"({"system_prompt":"s","user_prompt":"u","script_key":"llm:capital of italy"})",
                            &s) == SELRAG_OK);
    CHECK(take(s)["text"] == "Explanation: memory. Answer: Rome");
    CHECK(selrag_run(b, f.index, (f.dir / "qa.jsonl").c_str(), R"({"mode":"bogus"})", nullptr, &s) ==
          SELRAG_E_INVALID_ARGUMENT);
    selrag_backend_free(b);
  }

  TEST_CASE("self-select run, evaluation and manifest") {
    Fixture f;
    selrag_backend* b = nullptr;
    REQUIRE(selrag_backend_scripted((f.dir / "script.jsonl").c_str(), &b) == SELRAG_OK);
    char* s = nullptr;
    const auto out = (f.dir / "results.jsonl").string();
    REQUIRE(selrag_run(b, f.index, (f.dir / "qa.jsonl").c_str(), R"({"mode":"self-select","top_k":2,"seed":3})",
                       out.c_str(), &s) == SELRAG_OK);
    const auto summary = take(s);
    CHECK(summary["records"] == 2);
    CHECK(summary["failed"] == 0);
    REQUIRE(selrag_eval(out.c_str(), (f.dir / "qa.jsonl").c_str(), nullptr, &s) == SELRAG_OK);
    const auto rep = take(s);
    CHECK(rep["acc"].get<double>() == doctest::Approx(1.0));
    CHECK(rep["table"] == "EM 100.0  F1 100.0  Acc 100.0  (n=2)");

    const json m{{"command_line", "test"}, {"inputs", {(f.dir / "qa.jsonl").string()}}};
    REQUIRE(selrag_manifest_write(out.c_str(), m.dump().c_str()) == SELRAG_OK);
    const auto mj = json::parse(testing::read_text(out + ".manifest.json"));
    REQUIRE(selrag_digest_path((f.dir / "qa.jsonl").c_str(), &s) == SELRAG_OK);
    CHECK(mj["input_digests"][(f.dir / "qa.jsonl").string()] == std::string(s));
    selrag_string_free(s);
    selrag_backend_free(b);
  }

  TEST_CASE("preference build, augmentation and export") {
    Fixture f;
    selrag_backend* b = nullptr;
    REQUIRE(selrag_backend_scripted((f.dir / "script.jsonl").c_str(), &b) == SELRAG_OK);
    char* s = nullptr;
    const auto inst = (f.dir / "inst.jsonl").string();
    REQUIRE(selrag_rgp_build(b, f.index, (f.dir / "qa.jsonl").c_str(), R"({"judge":"lexical","seed":1})",
                             inst.c_str(), &s) == SELRAG_OK);
    const auto report = take(s);
    CHECK(report["kept_retrieval_positive"] == 1);
    CHECK(report["both_correct"] == 1);
    const auto pairs = (f.dir / "pairs.jsonl").string();
    REQUIRE(selrag_rgp_augment(inst.c_str(), R"({"k":2,"similarity":"lexical","seed":1})", pairs.c_str(),
                               &s) == SELRAG_OK);
    CHECK(take(s)["pairs"] == 1);
    REQUIRE(selrag_dpo_export(pairs.c_str(), (f.dir / "train.jsonl").c_str(), &s) == SELRAG_OK);
    CHECK(take(s)["total"] == 1);
    selrag_backend_free(b);
  }

  TEST_CASE("dpo loss report") {
    testing::TempDir dir;
    testing::write_lines(dir / "lp.jsonl",
                         {R"({"pair_id":"a","logp_policy_chosen":-1,"logp_ref_chosen":-1,"logp_policy_rejected":-1,"logp_ref_rejected":-1})"});
    char* s = nullptr;
    REQUIRE(selrag_dpo_loss((dir / "lp.jsonl").c_str(), 0.1, &s) == SELRAG_OK);
    CHECK(take(s)["mean_loss"].get<double>() == doctest::Approx(0.6931471805599453));
    CHECK(selrag_dpo_loss((dir / "lp.jsonl").c_str(), -1.0, &s) == SELRAG_E_INVALID_ARGUMENT);
  }
}
