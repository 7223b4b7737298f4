#include <doctest.h>

#include "fixtures.hpp"
#include "selrag/metrics.hpp"
#include "selrag/qa.hpp"
#include "selrag/util.hpp"
#include "support.hpp"

using namespace selrag::eval;
using selrag::ErrorCode;
using testing::capture_error;

TEST_SUITE("metrics") {
  TEST_CASE("normalize examples") {
    CHECK(normalize("Kensington and Chelsea (borough)") == "kensington and chelsea borough");
    CHECK(normalize("The Answer.") == "answer");
    CHECK(normalize("  A   cat,  an apple; THE end ") == "cat apple end");
    CHECK(normalize("theater anthem") == "theater anthem");
    CHECK(normalize("") == "");
    CHECK(normalize("Émile") == "émile");
  }

  TEST_CASE("exact match examples") {
    CHECK(exact_match("practice", {"Practice"}) == 1);
    CHECK(exact_match("Kensington and Chelsea", {"Kensington and Chelsea (borough)"}) == 0);
    CHECK(exact_match("Kensington and Chelsea (borough)", {"Kensington and Chelsea (borough)"}) == 1);
    CHECK(exact_match("x", {"y", "X"}) == 1);
  }

  TEST_CASE("f1 examples") {
    CHECK(f1("Kensington and Chelsea", {"Kensington and Chelsea (borough)"}) ==
          doctest::Approx(6.0 / 7.0).epsilon(1e-15));
    CHECK(f1("the same thing", {"Same thing!"}) == 1.0);
    CHECK(f1("apples", {"oranges"}) == 0.0);
    CHECK(f1_single("", "") == 1.0);
    CHECK(f1_single("the", "a") == 1.0);
    CHECK(f1_single("", "x") == 0.0);
    // Multiset overlap: repeated tokens count at most min(count) times.
    CHECK(f1_single("new new york", "new york") == doctest::Approx(0.8));
    CHECK(f1("blue", {"red", "blue sky"}) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("accuracy examples") {
    CHECK(accuracy("in the context of television ratings and more", {"Television Ratings"}) == 1);
    CHECK(accuracy("Kensington and Chelsea", {"Kensington and Chelsea (borough)"}) == 0);
    CHECK(accuracy("Paris", {"Paris"}) == 1);
  }

  TEST_CASE("empty gold lists are rejected") {
    CHECK(capture_error([] { exact_match("x", {}); }).code() == ErrorCode::kInvalidArgument);
    CHECK(capture_error([] { f1("x", {}); }).code() == ErrorCode::kInvalidArgument);
    CHECK(capture_error([] { accuracy("x", {}); }).code() == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("hand-scored fixture") {
    for (const auto& item : fixture::metric_items()) {
      CAPTURE(item.id);
      CHECK(exact_match(item.pred, item.golds) == item.em);
      CHECK(f1(item.pred, item.golds) == doctest::Approx(item.f1).epsilon(1e-12));
      CHECK(accuracy(item.pred, item.golds) == item.acc);
    }
  }

  namespace {
  std::string random_text(selrag::Rng& rng) {
    static const std::vector<std::string> parts = {"The", "a", "AN", "an", "x", ".", ",", "!",
                                                   " ", "  ", "\t", "Öl", "(b)", "-", "'s", "thE",
                                                   "apple", "and", "\"", "the."};
    std::string s;
    const auto n = rng.uniform_int(0, 12);
    for (std::int64_t i = 0; i < n; ++i) s += parts[static_cast<std::size_t>(rng.uniform_int(0, 19))];
    return s;
  }
  }  // namespace

  TEST_CASE("property: normalization is idempotent") {
    selrag::Rng rng(11);
    for (int i = 0; i < 5000; ++i) {
      const auto s = random_text(rng);
      REQUIRE(normalize(normalize(s)) == normalize(s));
    }
  }

  TEST_CASE("property: f1 is symmetric and metrics respect their bounds") {
    selrag::Rng rng(12);
    for (int i = 0; i < 5000; ++i) {
      const auto a = random_text(rng);
      const auto b = random_text(rng);
      const double fab = f1_single(a, b);
      REQUIRE(fab == f1_single(b, a));
      REQUIRE(fab >= 0.0);
      REQUIRE(fab <= 1.0);
      if (exact_match(a, {b}) == 1) {
        REQUIRE(f1(a, {b}) == 1.0);
        REQUIRE(accuracy(a, {b}) == 1);
      }
    }
  }
}

TEST_SUITE("qa") {
  TEST_CASE("reads QA pairs") {
    testing::TempDir dir;
    testing::write_lines(dir / "qa.jsonl",
                         {R"({"id":"q1","question":"Who?","golden_answers":["A","B"]})", "",
                          R"({"id":"q2","question":"What?","golden_answers":["C"]})"});
    const auto qa = selrag::read_qa_file(dir / "qa.jsonl");
    REQUIRE(qa.size() == 2);
    CHECK(qa[0] == selrag::QAPair{"q1", "Who?", {"A", "B"}});
    CHECK(qa[1].golden_answers == std::vector<std::string>{"C"});
  }

  TEST_CASE("rejects malformed, empty-gold and duplicate records") {
    testing::TempDir dir;
    testing::write_lines(dir / "bad.jsonl",
                         {R"({"id":"q1","question":"Who?","golden_answers":["A"]})", R"({"id":"q2"})"});
    auto e = capture_error([&] { selrag::read_qa_file(dir / "bad.jsonl"); });
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);

    testing::write_lines(dir / "empty.jsonl", {R"({"id":"q1","question":"Who?","golden_answers":[]})"});
    CHECK(capture_error([&] { selrag::read_qa_file(dir / "empty.jsonl"); }).code() == ErrorCode::kParse);

    testing::write_lines(dir / "dup.jsonl", {R"({"id":"q1","question":"a","golden_answers":["A"]})",
                                             R"({"id":"q1","question":"b","golden_answers":["B"]})"});
    CHECK(capture_error([&] { selrag::read_qa_file(dir / "dup.jsonl"); }).code() ==
          ErrorCode::kDuplicateId);
    CHECK(capture_error([&] { selrag::read_qa_file(dir / "missing.jsonl"); }).code() == ErrorCode::kIo);
  }
}
