#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selrag/corpus.hpp"
#include "selrag/http.hpp"
#include "selrag/retrieval.hpp"

namespace selrag::retrieval {

using Embedding = std::vector<float>;

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  // One vector per input, same order. Failures raise kBackend.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& inputs) = 0;
  virtual std::string model_tag() const = 0;
};

struct HttpEmbeddingConfig {
  std::string endpoint_url;
  std::string api_key_env;
  std::string model_tag = "default";
  http::RetryPolicy retry;
};

// POST {"input": [...]} -> {"embeddings": [[...], ...]}
class HttpEmbeddingClient final : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(HttpEmbeddingConfig config);
  std::vector<Embedding> embed(const std::vector<std::string>& inputs) override;
  std::string model_tag() const override { return config_.model_tag; }

 private:
  HttpEmbeddingConfig config_;
  http::Endpoint endpoint_;
};

// Cosine similarity; 0 when either vector has zero norm. Throws
// kInvalidArgument on a dimension mismatch.
double cosine(const Embedding& a, const Embedding& b);

struct DenseBuildOptions {
  std::size_t batch_size = 32;
  std::size_t max_in_flight = 4;
  // When set, vectors are cached in <cache_dir>/<sha256(model_tag)>.jsonl,
  // one {"id", "vector"} line per passage.
  std::optional<std::filesystem::path> cache_dir;
};

// Passage vectors held in corpus order, queried by exhaustive cosine.
class DenseIndex final : public Retriever {
 public:
  static DenseIndex build(std::shared_ptr<EmbeddingClient> client, const corpus::Corpus& corpus,
                          const DenseBuildOptions& options = {});

  RetrievalResult retrieve(std::string_view query, int top_k) const override;
  // Ranks cached passage vectors against an already-embedded query.
  RetrievalResult retrieve_vector(std::string_view query, const Embedding& query_vec,
                                  int top_k) const;
  const corpus::Corpus& corpus() const override { return *corpus_; }
  std::size_t dimension() const noexcept { return dim_; }

 private:
  DenseIndex() = default;
  std::shared_ptr<EmbeddingClient> client_;
  std::shared_ptr<const corpus::Corpus> corpus_;
  std::vector<std::string> ids_;
  std::vector<Embedding> vectors_;
  std::size_t dim_ = 0;
};

RetrievalResult dense_retrieve(EmbeddingClient& client, const DenseIndex& index,
                               std::string_view query, int top_k);

}  // namespace selrag::retrieval
