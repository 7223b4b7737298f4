#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selrag/corpus.hpp"

namespace selrag::retrieval {

struct RetrievalConfig {
  int top_k = 5;
  double k1 = 1.2;
  double b = 0.75;

  // Throws kInvalidArgument unless top_k >= 1, k1 > 0 and b in [0, 1].
  void validate() const;
};

enum class RetrieverTag { kBm25, kDense };

std::string_view retriever_tag_name(RetrieverTag tag) noexcept;

struct Hit {
  std::string passage_id;
  double score = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

// Hits are sorted by score descending, ties by ascending passage id.
struct RetrievalResult {
  std::string query;
  std::vector<Hit> hits;
  RetrieverTag retriever_tag = RetrieverTag::kBm25;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// Canonical ordering for hits.
inline bool hit_before(const Hit& a, const Hit& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.passage_id < b.passage_id;
}

std::string to_json(const RetrievalResult& result);

// Lowercased Unicode-alphanumeric runs. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

// Anything that can hand the pipeline ranked passages.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrievalResult retrieve(std::string_view query, int top_k) const = 0;
  virtual const corpus::Corpus& corpus() const = 0;
};

// Okapi BM25 over an inverted index. Immutable after build; all queries are
// const reads and safe to issue concurrently.
class Bm25Index final : public Retriever {
 public:
  // Throws kPrecondition for an empty corpus.
  static Bm25Index build(const corpus::Corpus& corpus, const RetrievalConfig& config = {});
  static Bm25Index load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  // Throws kNotFound for an unknown passage id.
  double score(std::string_view query, std::string_view passage_id) const;
  RetrievalResult retrieve(std::string_view query, int top_k) const override;
  const corpus::Corpus& corpus() const override { return *corpus_; }

  std::size_t doc_count() const noexcept { return doc_len_.size(); }
  double avg_doc_len() const noexcept { return avgdl_; }
  std::uint32_t doc_freq(std::string_view term) const;
  const RetrievalConfig& config() const noexcept { return config_; }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  Bm25Index() = default;
  void finalize();
  double idf(std::size_t df) const noexcept;
  double term_weight(double idf, std::uint32_t tf, std::uint32_t doc) const noexcept;
  std::vector<std::uint32_t> query_terms(std::string_view query) const;

  std::shared_ptr<const corpus::Corpus> corpus_;
  RetrievalConfig config_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_len_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::uint32_t> doc_ordinal_;
  std::uint64_t total_tokens_ = 0;
  double avgdl_ = 0.0;
};

}  // namespace selrag::retrieval
