#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selrag/dense.hpp"
#include "selrag/prompts.hpp"
#include "selrag/rgp.hpp"

// Preference-set expansion with negatives borrowed from similar queries.
namespace selrag::augment {

enum class SimilarityBackend { kEmbedding, kLexical };
SimilarityBackend parse_similarity_backend(std::string_view s);

// Cosine of token-count vectors; 0 if either side has no tokens.
double lexical_similarity(std::string_view a, std::string_view b);

// Embedding mode needs a client; lexical mode ignores it.
double similarity(std::string_view a, std::string_view b, SimilarityBackend backend,
                  retrieval::EmbeddingClient* client = nullptr);

struct Neighbor {
  std::string query_id;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Sorted by similarity descending, ties by ascending query_id; never
// contains query_id itself.
struct NeighborSet {
  std::string query_id;
  std::vector<Neighbor> neighbors;
};

using NeighborMap = std::map<std::string, NeighborSet>;

// For every instance, the min(k, M-1) most similar other queries.
// Throws kDuplicateId when two instances share an id.
NeighborMap mine_neighbors(const std::vector<rgp::PreferenceInstance>& dataset, int k,
                           SimilarityBackend backend,
                           retrieval::EmbeddingClient* client = nullptr,
                           std::size_t workers = 4);

enum class PairOrder { kChosenFirst, kRejectedFirst };
enum class NegativeOrigin { kOwnNegative, kNeighborPositive, kNeighborNegative };
std::string_view to_string(PairOrder o) noexcept;
std::string_view to_string(NegativeOrigin o) noexcept;

struct DpoPair {
  std::string pair_id;
  std::string prompt;    // x: selection prompt with both responses
  std::string chosen;    // y_w
  std::string rejected;  // y_l
  PairOrder order = PairOrder::kChosenFirst;
  NegativeOrigin negative_origin = NegativeOrigin::kOwnNegative;
  std::pair<std::string, std::string> source_query_ids;  // (instance, negative's owner)

  friend bool operator==(const DpoPair&, const DpoPair&) = default;
};

std::string render_response(const rgp::Response& r);

using InstanceLookup = std::map<std::string, const rgp::PreferenceInstance*>;

struct ExpandStats {
  std::size_t dropped = 0;
};

// Negatives: own negative, then each neighbor's positive and negative in
// neighbor order. A negative whose answer normalizes to the positive's is
// dropped. Throws kNotFound for a neighbor id absent from lookup.
std::vector<DpoPair> expand(const rgp::PreferenceInstance& instance, const NeighborSet& neighbors,
                            const InstanceLookup& lookup, std::uint64_t order_seed,
                            const prompts::PromptSet& prompts, ExpandStats* stats = nullptr);

struct AugmentReport {
  std::size_t instances = 0;
  std::size_t pairs = 0;
  std::size_t own_negative = 0;
  std::size_t neighbor_positive = 0;
  std::size_t neighbor_negative = 0;
  std::size_t dropped = 0;
  std::size_t chosen_first = 0;
  std::size_t rejected_first = 0;

  nlohmann::ordered_json to_json() const;
};

struct AugmentResult {
  std::vector<DpoPair> pairs;
  AugmentReport report;
};

// Throws kPrecondition on an empty dataset.
AugmentResult augment_dataset(const std::vector<rgp::PreferenceInstance>& dataset, int k,
                              std::uint64_t order_seed, SimilarityBackend backend,
                              const prompts::PromptSet& prompts,
                              retrieval::EmbeddingClient* client = nullptr);

nlohmann::ordered_json to_json(const DpoPair& pair);
DpoPair pair_from_json(const nlohmann::json& j);
void write_pairs(const std::filesystem::path& path, const std::vector<DpoPair>& pairs);
std::vector<DpoPair> read_pairs(const std::filesystem::path& path);

}  // namespace selrag::augment
