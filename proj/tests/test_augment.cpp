#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "selrag/augment.hpp"
#include "selrag/metrics.hpp"
#include "selrag/util.hpp"
#include "support.hpp"

using namespace selrag::augment;
using selrag::ErrorCode;
using selrag::prompts::PromptSet;
using selrag::rgp::PreferenceInstance;
using testing::capture_error;

namespace {

PreferenceInstance instance(const std::string& id, const std::string& query, const std::string& pos,
                            const std::string& neg) {
  PreferenceInstance p;
  p.id = id;
  p.query = query;
  p.golden = pos;
  p.golden_answers = {pos};
  p.positive = {pos, "because " + pos};
  p.negative = {neg, "because " + neg};
  p.n_passages = 1;
  return p;
}

// Distinct answers everywhere so no negative collides with a positive.
std::vector<PreferenceInstance> dataset(std::size_t n, selrag::Rng& rng) {
  static const char* kWords[] = {"who", "wrote", "hamlet", "capital", "river", "king",
                                 "year", "film", "song", "city", "war", "born"};
  std::vector<PreferenceInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q;
    const int len = rng.uniform_int(2, 6);
    for (int w = 0; w < len; ++w) q += std::string(kWords[rng.uniform_int(0, 11)]) + " ";
    out.push_back(instance("q" + std::to_string(i), q + std::to_string(i), "pos" + std::to_string(i),
                           "neg" + std::to_string(i)));
  }
  return out;
}

// Independent count-vector cosine.
double oracle_cosine(const std::string& a, const std::string& b) {
  std::map<std::string, double> ca, cb;
  for (const auto& t : selrag::retrieval::tokenize(a)) ca[t] += 1;
  for (const auto& t : selrag::retrieval::tokenize(b)) cb[t] += 1;
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, v] : ca) {
    na += v * v;
    if (auto it = cb.find(t); it != cb.end()) dot += v * it->second;
  }
  for (const auto& [t, v] : cb) nb += v * v;
  return (na == 0 || nb == 0) ? 0.0 : dot / std::sqrt(na * nb);
}

// Maps each text to a fixed vector by keyword.
class KeywordEmbedder final : public selrag::retrieval::EmbeddingClient {
 public:
  std::vector<selrag::retrieval::Embedding> embed(const std::vector<std::string>& inputs) override {
    std::vector<selrag::retrieval::Embedding> out;
    for (const auto& s : inputs) {
      ++calls;
      if (s.find("apple") != std::string::npos) out.push_back({1, 0, 0});
      else if (s.find("pear") != std::string::npos) out.push_back({0.9f, 0.1f, 0});
      else out.push_back({0, 0, 1});
    }
    return out;
  }
  std::string model_tag() const override { return "keyword"; }
  std::size_t calls = 0;
};

InstanceLookup lookup_of(const std::vector<PreferenceInstance>& v) {
  InstanceLookup m;
  for (const auto& p : v) m[p.id] = &p;
  return m;
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("lexical similarity") {
    CHECK(lexical_similarity("who wrote hamlet", "Who wrote Hamlet?") == doctest::Approx(1.0));
    CHECK(lexical_similarity("apple pie", "river bank") == 0.0);
    CHECK(lexical_similarity("who wrote hamlet", "who wrote macbeth") == doctest::Approx(2.0 / 3.0));
    CHECK(lexical_similarity("", "x") == 0.0);
    CHECK(parse_similarity_backend("lexical") == SimilarityBackend::kLexical);
    CHECK(capture_error([] { parse_similarity_backend("bogus"); }).code() ==
          ErrorCode::kInvalidArgument);
  }

  TEST_CASE("neighbor count is capped by dataset size and excludes self") {
    std::vector<PreferenceInstance> v{instance("a", "x y", "1", "2"), instance("b", "x z", "3", "4"),
                                      instance("c", "w", "5", "6")};
    const auto m = mine_neighbors(v, 5, SimilarityBackend::kLexical);
    for (const auto& [id, ns] : m) {
      CHECK(ns.neighbors.size() == 2);
      for (const auto& n : ns.neighbors) CHECK(n.query_id != id);
    }
    CHECK(m.at("a").neighbors[0].query_id == "b");
    CHECK(mine_neighbors(v, 0, SimilarityBackend::kLexical).at("a").neighbors.empty());
    v.push_back(instance("a", "dup", "7", "8"));
    CHECK(capture_error([&] { mine_neighbors(v, 1, SimilarityBackend::kLexical); }).code() ==
          ErrorCode::kDuplicateId);
  }

  TEST_CASE("property: neighbors match a brute-force ranking") {
    selrag::Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      const auto v = dataset(static_cast<std::size_t>(rng.uniform_int(1, 25)), rng);
      const int k = rng.uniform_int(0, 6);
      const auto m = mine_neighbors(v, k, SimilarityBackend::kLexical);
      for (const auto& a : v) {
        std::vector<Neighbor> want;
        for (const auto& b : v) {
          if (b.id != a.id) want.push_back({b.id, oracle_cosine(a.query, b.query)});
        }
        std::sort(want.begin(), want.end(), [](const Neighbor& x, const Neighbor& y) {
          if (std::abs(x.similarity - y.similarity) > 1e-12) return x.similarity > y.similarity;
          return x.query_id < y.query_id;
        });
        want.resize(std::min<std::size_t>(static_cast<std::size_t>(k), want.size()));
        const auto& got = m.at(a.id).neighbors;
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          REQUIRE(got[i].query_id == want[i].query_id);
          REQUIRE(got[i].similarity == doctest::Approx(want[i].similarity));
        }
      }
    }
  }

  TEST_CASE("embedding similarity uses the client") {
    KeywordEmbedder e;
    std::vector<PreferenceInstance> v{instance("a", "apple", "1", "2"), instance("b", "pear", "3", "4"),
                                      instance("c", "stone", "5", "6")};
    const auto m = mine_neighbors(v, 1, SimilarityBackend::kEmbedding, &e);
    CHECK(m.at("a").neighbors[0].query_id == "b");
    CHECK(m.at("c").neighbors[0].similarity == doctest::Approx(0.0));
    CHECK(e.calls >= 3);
    CHECK(similarity("apple", "apple", SimilarityBackend::kEmbedding, &e) == doctest::Approx(1.0));
    CHECK(capture_error([] { similarity("a", "b", SimilarityBackend::kEmbedding); }).code() ==
          ErrorCode::kInvalidArgument);
  }

  TEST_CASE("expansion cardinality") {
    std::vector<PreferenceInstance> v{instance("a", "q a", "A", "wrong a"), instance("b", "q b", "B", "wrong b"),
                                      instance("c", "q c", "C", "wrong c")};
    const auto look = lookup_of(v);
    const auto p = PromptSet::defaults();
    const NeighborSet two{"a", {{"b", 0.5}, {"c", 0.4}}};
    const auto pairs = expand(v[0], two, look, 1, p);
    REQUIRE(pairs.size() == 5);
    CHECK(pairs[0].negative_origin == NegativeOrigin::kOwnNegative);
    CHECK(pairs[1].negative_origin == NegativeOrigin::kNeighborPositive);
    CHECK(pairs[2].negative_origin == NegativeOrigin::kNeighborNegative);
    CHECK(pairs[1].source_query_ids == std::pair<std::string, std::string>{"a", "b"});
    CHECK(pairs[4].source_query_ids.second == "c");
    CHECK(pairs[0].pair_id == "a#0");
    CHECK(pairs[4].pair_id == "a#4");
    CHECK(expand(v[0], NeighborSet{"a", {}}, look, 1, p).size() == 1);

    // Neighbor b shares a's answer, so its positive is dropped.
    auto clash = v;
    clash[1].positive = {"A", "different reasoning"};
    ExpandStats st;
    CHECK(expand(clash[0], two, lookup_of(clash), 1, p, &st).size() == 4);
    CHECK(st.dropped == 1);

    // Own negative colliding with the positive leaves 2K pairs.
    auto self = v;
    self[0].negative = {"the A", "because A"};
    CHECK(expand(self[0], two, lookup_of(self), 1, p).size() == 4);

    const NeighborSet ghost{"a", {{"zzz", 0.9}}};
    CHECK(capture_error([&] { expand(v[0], ghost, look, 1, p); }).code() == ErrorCode::kNotFound);
  }

  TEST_CASE("three instances with one neighbor give nine pairs") {
    std::vector<PreferenceInstance> v{instance("a", "who wrote hamlet", "A", "wrong a"),
                                      instance("b", "who wrote macbeth", "B", "wrong b"),
                                      instance("c", "river nile length", "C", "wrong c")};
    const auto r = augment_dataset(v, 1, 9, SimilarityBackend::kLexical, PromptSet::defaults());
    CHECK(r.pairs.size() == 9);
    CHECK(r.report.pairs == 9);
    CHECK(r.report.own_negative == 3);
    CHECK(r.report.neighbor_positive == 3);
    CHECK(r.report.neighbor_negative == 3);
    CHECK(r.report.chosen_first + r.report.rejected_first == 9);
    CHECK(capture_error([] {
            augment_dataset({}, 1, 0, SimilarityBackend::kLexical, PromptSet::defaults());
          }).code() == ErrorCode::kPrecondition);
  }

  TEST_CASE("property: order balance, chosen preservation, prompt layout") {
    selrag::Rng rng(5);
    const auto v = dataset(250, rng);
    const auto r = augment_dataset(v, 2, 1234, SimilarityBackend::kLexical, PromptSet::defaults());
    REQUIRE(r.pairs.size() >= 1000);
    std::map<std::string, const PreferenceInstance*> by_id;
    for (const auto& p : v) by_id[p.id] = &p;
    std::size_t first = 0;
    for (const auto& pair : r.pairs) {
      const auto* inst = by_id.at(pair.source_query_ids.first);
      REQUIRE(pair.chosen == render_response(inst->positive));
      REQUIRE(pair.chosen != pair.rejected);
      REQUIRE(selrag::eval::normalize(pair.chosen) != selrag::eval::normalize(pair.rejected));
      const auto ci = pair.prompt.find(pair.chosen);
      const auto ri = pair.prompt.find(pair.rejected);
      REQUIRE(ci != std::string::npos);
      REQUIRE(ri != std::string::npos);
      REQUIRE((ci < ri) == (pair.order == PairOrder::kChosenFirst));
      REQUIRE(pair.prompt.find(inst->query) != std::string::npos);
      first += pair.order == PairOrder::kChosenFirst;
    }
    const double share = static_cast<double>(first) / static_cast<double>(r.pairs.size());
    CHECK(share >= 0.45);
    CHECK(share <= 0.55);
  }

  TEST_CASE("augmentation is deterministic and round-trips") {
    testing::TempDir dir;
    selrag::Rng rng(6);
    const auto v = dataset(40, rng);
    const auto a = augment_dataset(v, 2, 42, SimilarityBackend::kLexical, PromptSet::defaults());
    const auto b = augment_dataset(v, 2, 42, SimilarityBackend::kLexical, PromptSet::defaults());
    CHECK(a.pairs == b.pairs);
    write_pairs(dir / "p.jsonl", a.pairs);
    CHECK(read_pairs(dir / "p.jsonl") == a.pairs);
    const auto c = augment_dataset(v, 2, 43, SimilarityBackend::kLexical, PromptSet::defaults());
    bool differs = false;
    for (std::size_t i = 0; i < a.pairs.size(); ++i) differs |= a.pairs[i].order != c.pairs[i].order;
    CHECK(differs);
  }
}
