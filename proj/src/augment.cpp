#include "selrag/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "selrag/error.hpp"
#include "selrag/metrics.hpp"
#include "selrag/pipeline.hpp"
#include "selrag/text.hpp"
#include "selrag/util.hpp"

namespace selrag::augment {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

SimilarityBackend parse_similarity_backend(std::string_view s) {
  if (s == "embedding") return SimilarityBackend::kEmbedding;
  if (s == "lexical") return SimilarityBackend::kLexical;
  fail(ErrorCode::kInvalidArgument, "unknown similarity backend '" + std::string(s) + "'");
}

namespace {

using CountVector = std::unordered_map<std::string, double>;

CountVector count_vector(std::string_view s) {
  CountVector v;
  for (auto& t : text::tokenize(s)) v[t] += 1.0;
  return v;
}

double count_cosine(const CountVector& a, const CountVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, c] : a) {
    na += c * c;
    if (auto it = b.find(t); it != b.end()) dot += c * it->second;
  }
  for (const auto& [t, c] : b) nb += c * c;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

double lexical_similarity(std::string_view a, std::string_view b) {
  return count_cosine(count_vector(a), count_vector(b));
}

double similarity(std::string_view a, std::string_view b, SimilarityBackend backend,
                  retrieval::EmbeddingClient* client) {
  if (backend == SimilarityBackend::kLexical) return lexical_similarity(a, b);
  if (!client) fail(ErrorCode::kInvalidArgument, "embedding similarity needs a client");
  auto v = client->embed({std::string(a), std::string(b)});
  return retrieval::cosine(v.at(0), v.at(1));
}

NeighborMap mine_neighbors(const std::vector<rgp::PreferenceInstance>& dataset, int k,
                           SimilarityBackend backend, retrieval::EmbeddingClient* client,
                           std::size_t workers) {
  if (k < 0) fail(ErrorCode::kInvalidArgument, "k must be >= 0");
  const std::size_t m = dataset.size();
  {
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& inst : dataset) {
      if (!seen.emplace(inst.id, 0).second) {
        fail(ErrorCode::kDuplicateId, "duplicate instance id '" + inst.id + "'");
      }
    }
  }

  std::function<double(std::size_t, std::size_t)> sim;
  std::vector<CountVector> counts;
  std::vector<retrieval::Embedding> vecs;
  if (backend == SimilarityBackend::kLexical) {
    counts.reserve(m);
    for (const auto& inst : dataset) counts.push_back(count_vector(inst.query));
    sim = [&](std::size_t i, std::size_t j) { return count_cosine(counts[i], counts[j]); };
  } else {
    if (!client) fail(ErrorCode::kInvalidArgument, "embedding similarity needs a client");
    std::vector<std::string> queries;
    for (const auto& inst : dataset) queries.push_back(inst.query);
    vecs = client->embed(queries);
    if (vecs.size() != m) fail(ErrorCode::kBackend, "embedding count mismatch");
    sim = [&](std::size_t i, std::size_t j) { return retrieval::cosine(vecs[i], vecs[j]); };
  }

  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), m == 0 ? 0 : m - 1);
  std::vector<NeighborSet> sets(m);
  parallel_for(m, workers, [&](std::size_t i) {
    std::vector<Neighbor> all;
    all.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) all.push_back({dataset[j].id, sim(i, j)});
    }
    // Equal cosines reached through different integer ratios can differ in
    // the last bit; compare on a rounded key so they tie by id.
    auto key = [](double s) { return std::llround(s * 1e12); };
    auto before = [&](const Neighbor& a, const Neighbor& b) {
      if (key(a.similarity) != key(b.similarity)) return key(a.similarity) > key(b.similarity);
      return a.query_id < b.query_id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      before);
    all.resize(keep);
    sets[i] = {dataset[i].id, std::move(all)};
  });

  NeighborMap out;
  for (auto& s : sets) out.emplace(s.query_id, std::move(s));
  return out;
}

std::string_view to_string(PairOrder o) noexcept {
  return o == PairOrder::kChosenFirst ? "chosen_first" : "rejected_first";
}

std::string_view to_string(NegativeOrigin o) noexcept {
  switch (o) {
    case NegativeOrigin::kOwnNegative: return "own_negative";
    case NegativeOrigin::kNeighborPositive: return "neighbor_positive";
    case NegativeOrigin::kNeighborNegative: return "neighbor_negative";
  }
  return "own_negative";
}

std::string render_response(const rgp::Response& r) {
  return pipeline::render_candidate(r.explanation, r.answer);
}

std::vector<DpoPair> expand(const rgp::PreferenceInstance& instance, const NeighborSet& neighbors,
                            const InstanceLookup& lookup, std::uint64_t order_seed,
                            const prompts::PromptSet& prompts, ExpandStats* stats) {
  struct Negative {
    const rgp::Response* response;
    NegativeOrigin origin;
    const std::string* owner;
  };
  std::vector<Negative> negatives{{&instance.negative, NegativeOrigin::kOwnNegative, &instance.id}};
  for (const auto& n : neighbors.neighbors) {
    auto it = lookup.find(n.query_id);
    if (it == lookup.end() || it->second == nullptr) {
      fail(ErrorCode::kNotFound, "unresolved neighbor id '" + n.query_id + "'");
    }
    const auto* other = it->second;
    negatives.push_back({&other->positive, NegativeOrigin::kNeighborPositive, &other->id});
    negatives.push_back({&other->negative, NegativeOrigin::kNeighborNegative, &other->id});
  }

  const std::string chosen = render_response(instance.positive);
  const std::string chosen_norm = eval::normalize(chosen);
  const std::string positive_answer = eval::normalize(instance.positive.answer);
  Rng rng(order_seed);
  std::vector<DpoPair> out;
  std::size_t dropped = 0;
  for (const auto& neg : negatives) {
    std::string rejected = render_response(*neg.response);
    if (eval::normalize(neg.response->answer) == positive_answer ||
        eval::normalize(rejected) == chosen_norm) {
      ++dropped;
      continue;
    }
    DpoPair p;
    p.pair_id = instance.id + "#" + std::to_string(out.size());
    p.order = rng.coin() ? PairOrder::kRejectedFirst : PairOrder::kChosenFirst;
    p.prompt = p.order == PairOrder::kChosenFirst
                   ? pipeline::render_selection_prompt(prompts, instance.query, chosen, rejected)
                   : pipeline::render_selection_prompt(prompts, instance.query, rejected, chosen);
    p.chosen = chosen;
    p.rejected = std::move(rejected);
    p.negative_origin = neg.origin;
    p.source_query_ids = {instance.id, *neg.owner};
    out.push_back(std::move(p));
  }
  if (stats) stats->dropped = dropped;
  return out;
}

ordered_json AugmentReport::to_json() const {
  ordered_json j;
  j["instances"] = instances;
  j["pairs"] = pairs;
  j["by_origin"] = {{"own_negative", own_negative},
                    {"neighbor_positive", neighbor_positive},
                    {"neighbor_negative", neighbor_negative}};
  j["dropped"] = dropped;
  j["order"] = {{"chosen_first", chosen_first}, {"rejected_first", rejected_first}};
  return j;
}

AugmentResult augment_dataset(const std::vector<rgp::PreferenceInstance>& dataset, int k,
                              std::uint64_t order_seed, SimilarityBackend backend,
                              const prompts::PromptSet& prompts,
                              retrieval::EmbeddingClient* client) {
  if (dataset.empty()) fail(ErrorCode::kPrecondition, "cannot augment an empty dataset");
  const auto neighbors = mine_neighbors(dataset, k, backend, client);
  InstanceLookup lookup;
  for (const auto& inst : dataset) lookup.emplace(inst.id, &inst);

  AugmentResult result;
  auto& rep = result.report;
  rep.instances = dataset.size();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    ExpandStats st;
    auto pairs = expand(dataset[i], neighbors.at(dataset[i].id), lookup,
                        derive_seed(order_seed, i), prompts, &st);
    rep.dropped += st.dropped;
    for (auto& p : pairs) {
      switch (p.negative_origin) {
        case NegativeOrigin::kOwnNegative: ++rep.own_negative; break;
        case NegativeOrigin::kNeighborPositive: ++rep.neighbor_positive; break;
        case NegativeOrigin::kNeighborNegative: ++rep.neighbor_negative; break;
      }
      (p.order == PairOrder::kChosenFirst ? rep.chosen_first : rep.rejected_first) += 1;
      result.pairs.push_back(std::move(p));
    }
  }
  rep.pairs = result.pairs.size();
  return result;
}

ordered_json to_json(const DpoPair& p) {
  ordered_json j;
  j["pair_id"] = p.pair_id;
  j["prompt"] = p.prompt;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  j["order"] = to_string(p.order);
  j["negative_origin"] = to_string(p.negative_origin);
  j["source_query_ids"] = {p.source_query_ids.first, p.source_query_ids.second};
  return j;
}

DpoPair pair_from_json(const json& j) {
  DpoPair p;
  try {
    p.pair_id = j.value("pair_id", "");
    p.prompt = j.at("prompt").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    const auto order = j.at("order").get<std::string>();
    if (order == "chosen_first") p.order = PairOrder::kChosenFirst;
    else if (order == "rejected_first") p.order = PairOrder::kRejectedFirst;
    else fail(ErrorCode::kParse, "unknown order '" + order + "'");
    const auto origin = j.at("negative_origin").get<std::string>();
    if (origin == "own_negative") p.negative_origin = NegativeOrigin::kOwnNegative;
    else if (origin == "neighbor_positive") p.negative_origin = NegativeOrigin::kNeighborPositive;
    else if (origin == "neighbor_negative") p.negative_origin = NegativeOrigin::kNeighborNegative;
    else fail(ErrorCode::kParse, "unknown negative_origin '" + origin + "'");
    const auto ids = j.at("source_query_ids");
    p.source_query_ids = {ids.at(0).get<std::string>(), ids.at(1).get<std::string>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed DPO pair: ") + e.what());
  }
  return p;
}

void write_pairs(const fs::path& path, const std::vector<DpoPair>& pairs) {
  std::string buf;
  for (const auto& p : pairs) {
    buf += to_json(p).dump();
    buf.push_back('\n');
  }
  write_file_atomic(path, buf);
}

std::vector<DpoPair> read_pairs(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<DpoPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace selrag::augment
