// End-to-end runs of the command-line tool.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "support.hpp"

using nlohmann::json;
using testing::quote;
using testing::run_command;

namespace {

const std::string kCli = SELRAG_CLI_PATH;

struct Workspace {
  testing::TempDir dir;

  Workspace() {
    testing::write_lines(dir / "passages.jsonl",
                         {R"({"id":"p1","title":"France","text":"Paris is the capital of France"})",
                          R"({"id":"p2","title":"Italy","text":"Rome is the capital of Italy"})",
                          R"({"id":"p3","title":"Rivers","text":"The Nile is a long river"})"});
    testing::write_lines(dir / "qa.jsonl",
                         {R"({"id":"q1","question":"capital of France?","golden_answers":["Paris"]})",
                          R"({"id":"q2","question":"capital of Italy?","golden_answers":["Rome"]})",
                          R"({"id":"q3","question":"longest river?","golden_answers":["Nile"]})"});
    testing::write_lines(
        dir / "script.jsonl",
        {R"({"match_key":"llm:capital of france","reply":"Explanation: memory. Answer: Lyon"})",
         R"({"match_key":"rag:capital of france","reply":"Explanation: passage one. Answer: Paris"})",
         R"({"match_key":"select:capital of france","reply":"Explanation: passage one. Answer: Paris"})",
         R"({"match_key":"llm:capital of italy","reply":"Explanation: memory. Answer: Rome"})",
         R"({"match_key":"rag:capital of italy","reply":"Explanation: passage two. Answer: Milan"})",
         R"({"match_key":"select:capital of italy","reply":"Explanation: memory. Answer: Rome"})",
         R"({"match_key":"llm:longest river","reply":"Explanation: memory. Answer: Amazon"})",
         R"({"match_key":"rag:longest river","reply":"Explanation: passage three. Answer: Nile"})",
         R"({"match_key":"select:longest river","reply":"Explanation: unsure. Answer: Danube"})"});
  }

  std::string p(const std::string& name) const { return quote((dir / name).string()); }

  testing::CommandResult cli(const std::string& args, bool merge = false) const {
    return run_command("env -u SELECTOR_RAG_CONFIG " + quote(kCli) + " " + args, merge);
  }

  void build_index() const {
    REQUIRE(cli("corpus ingest --passages " + p("passages.jsonl") + " --out " + p("corpus")).exit_code == 0);
    REQUIRE(cli("index build --corpus " + p("corpus") + " --out " + p("index")).exit_code == 0);
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    Workspace w;
    CHECK(w.cli("--help").exit_code == 0);
    CHECK(w.cli("run --help").exit_code == 0);
    CHECK(w.cli("--no-such-flag").exit_code == 2);
    CHECK(w.cli("run --qa x").exit_code == 2);
    CHECK(w.cli("run --mode sideways --qa x --out y").exit_code == 2);
  }

  TEST_CASE("runtime errors exit 1 with a JSON error line") {
    Workspace w;
    const auto r = w.cli("corpus ingest --passages " + w.p("missing.jsonl") + " --out " + w.p("c"), true);
    CHECK(r.exit_code == 1);
    const auto err = json::parse(r.out.substr(r.out.find('{')));
    CHECK(err["error"]["code"] == "io");
    CHECK(err["error"].contains("message"));
  }

  TEST_CASE("ingest, index, retrieve") {
    Workspace w;
    w.build_index();
    CHECK(std::filesystem::exists(w.dir / "corpus" / "manifest.json"));
    CHECK(std::filesystem::exists(w.dir / "index" / "manifest.json"));
    const auto r = w.cli("retrieve --index " + w.p("index") + " --query 'capital of Italy' --top-k 2");
    REQUIRE(r.exit_code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["hits"][0]["passage_id"] == "p2");
  }

  TEST_CASE("scripted run, evaluation and error analysis") {
    Workspace w;
    w.build_index();
    for (const std::string mode : {"llm-only", "standard-rag", "self-select"}) {
      const auto r = w.cli("run --mode " + mode + " --qa " + w.p("qa.jsonl") + " --index " + w.p("index") +
                           " --script " + w.p("script.jsonl") + " --out " + w.p(mode + ".jsonl"));
      REQUIRE(r.exit_code == 0);
      CHECK(json::parse(r.out)["records"] == 3);
      CHECK(std::filesystem::exists(w.dir / (mode + ".jsonl.manifest.json")));
    }
    const auto e = w.cli("eval --pred " + w.p("self-select.jsonl") + " --qa " + w.p("qa.jsonl") + " --out " +
                         w.p("report.json"));
    REQUIRE(e.exit_code == 0);
    CHECK(e.out.find("Acc 66.7") != std::string::npos);
    const auto rep = json::parse(testing::read_text(w.dir / "report.json"));
    CHECK(rep["acc"].get<double>() == doctest::Approx(2.0 / 3.0));
    const auto llm = w.cli("eval --pred " + w.p("llm-only.jsonl") + " --qa " + w.p("qa.jsonl"));
    CHECK(llm.out.find("Acc 33.3") != std::string::npos);
    const auto c = w.cli("errors classify --pred " + w.p("self-select.jsonl") + " --qa " + w.p("qa.jsonl"));
    REQUIRE(c.exit_code == 0);
    const auto cj = json::parse(c.out);
    CHECK(cj["errors"] == 1);
    CHECK(cj["categories"]["selection_error"]["count"] == 1);
  }

  TEST_CASE("flags override environment-free config files") {
    Workspace w;
    w.build_index();
    testing::write_text(w.dir / "cfg.ini", "top_k = 1\nmode = llm-only\n");
    auto r = w.cli("--config " + w.p("cfg.ini") + " run --qa " + w.p("qa.jsonl") + " --index " + w.p("index") +
                   " --script " + w.p("script.jsonl") + " --out " + w.p("a.jsonl"));
    REQUIRE(r.exit_code == 0);
    CHECK(json::parse(r.out)["mode"] == "llm-only");
    r = w.cli("--config " + w.p("cfg.ini") + " run --mode standard-rag --qa " + w.p("qa.jsonl") + " --index " +
              w.p("index") + " --script " + w.p("script.jsonl") + " --out " + w.p("b.jsonl"));
    REQUIRE(r.exit_code == 0);
    CHECK(json::parse(r.out)["mode"] == "standard-rag");
    const auto first = json::parse(testing::read_text(w.dir / "b.jsonl").substr(0, testing::read_text(w.dir / "b.jsonl").find('\n')));
    CHECK(first["passages_used"].size() == 1);
    testing::write_text(w.dir / "bad.ini", "no_such_key = 1\n");
    CHECK(w.cli("--config " + w.p("bad.ini") + " eval --pred x --qa y").exit_code == 2);
  }

  TEST_CASE("dataset pipeline is byte-for-byte deterministic") {
    Workspace w;
    w.build_index();
    std::string bytes[2];
    for (int round = 0; round < 2; ++round) {
      const auto tag = std::to_string(round);
      REQUIRE(w.cli("rgp build --judge lexical --seed 5 --qa " + w.p("qa.jsonl") + " --index " + w.p("index") +
                    " --script " + w.p("script.jsonl") + " --out " + w.p("inst" + tag + ".jsonl"))
                  .exit_code == 0);
      REQUIRE(w.cli("rgp augment --k 2 --similarity lexical --seed 5 --in " + w.p("inst" + tag + ".jsonl") +
                    " --out " + w.p("pairs" + tag + ".jsonl"))
                  .exit_code == 0);
      REQUIRE(w.cli("dpo export --in " + w.p("pairs" + tag + ".jsonl") + " --out " + w.p("train" + tag + ".jsonl"))
                  .exit_code == 0);
      bytes[round] = testing::read_text(w.dir / ("inst" + tag + ".jsonl")) +
                     testing::read_text(w.dir / ("pairs" + tag + ".jsonl")) +
                     testing::read_text(w.dir / ("train" + tag + ".jsonl"));
    }
    CHECK(bytes[0] == bytes[1]);
    CHECK_FALSE(bytes[0].empty());
    CHECK(std::filesystem::exists(w.dir / "train0.jsonl.manifest.json"));
  }

  TEST_CASE("dpo loss from log-probabilities") {
    Workspace w;
    testing::write_lines(w.dir / "lp.jsonl",
                         {R"({"pair_id":"a","logp_policy_chosen":-1,"logp_ref_chosen":-2,"logp_policy_rejected":-2,"logp_ref_rejected":-1})"});
    const auto r = w.cli("dpo loss --beta 0.1 --in " + w.p("lp.jsonl"));
    REQUIRE(r.exit_code == 0);
    CHECK(json::parse(r.out)["mean_loss"].get<double>() == doctest::Approx(0.598138869));
  }
}
