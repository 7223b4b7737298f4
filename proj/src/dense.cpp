#include "selrag/dense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "selrag/error.hpp"
#include "selrag/util.hpp"

namespace selrag::retrieval {

namespace fs = std::filesystem;
using nlohmann::json;

HttpEmbeddingClient::HttpEmbeddingClient(HttpEmbeddingConfig config)
    : config_(std::move(config)), endpoint_(http::parse_url(config_.endpoint_url)) {}

std::vector<Embedding> HttpEmbeddingClient::embed(const std::vector<std::string>& inputs) {
  json req;
  req["input"] = inputs;
  if (!config_.model_tag.empty()) req["model"] = config_.model_tag;
  std::string body;
  try {
    body = http::post_json(endpoint_, req.dump(), http::token_from_env(config_.api_key_env),
                           config_.retry);
  } catch (const Error& e) {
    fail(ErrorCode::kBackend, std::string("embedding endpoint failed: ") + e.what());
  }
  std::vector<Embedding> out;
  try {
    const auto j = json::parse(body);
    out = j.at("embeddings").get<std::vector<Embedding>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kBackend, std::string("bad embedding response: ") + e.what());
  }
  if (out.size() != inputs.size()) {
    fail(ErrorCode::kBackend, "embedding endpoint returned " + std::to_string(out.size()) +
                                  " vectors for " + std::to_string(inputs.size()) + " inputs");
  }
  return out;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kInvalidArgument, "dimension mismatch: " + std::to_string(a.size()) +
                                          " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::map<std::string, Embedding> load_cache(const fs::path& file) {
  std::map<std::string, Embedding> cache;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      cache[j.at("id").get<std::string>()] = j.at("vector").get<Embedding>();
    } catch (const json::exception&) {
      // A torn trailing line from an interrupted run; recomputed below.
    }
  }
  return cache;
}

}  // namespace

DenseIndex DenseIndex::build(std::shared_ptr<EmbeddingClient> client, const corpus::Corpus& corpus,
                             const DenseBuildOptions& options) {
  if (!client) fail(ErrorCode::kInvalidArgument, "null embedding client");
  if (corpus.size() == 0) fail(ErrorCode::kPrecondition, "cannot index an empty corpus");

  DenseIndex idx;
  idx.client_ = client;
  idx.corpus_ = std::make_shared<const corpus::Corpus>(corpus);
  idx.ids_.resize(corpus.size());
  idx.vectors_.resize(corpus.size());

  std::map<std::string, Embedding> cached;
  fs::path cache_file;
  if (options.cache_dir) {
    fs::create_directories(*options.cache_dir);
    cache_file = *options.cache_dir / (sha256_hex(client->model_tag()) + ".jsonl");
    cached = load_cache(cache_file);
  }

  std::vector<std::size_t> missing;
  std::vector<std::string> missing_text;
  corpus.for_each([&](std::size_t i, const corpus::Passage& p) {
    idx.ids_[i] = p.id;
    if (auto it = cached.find(p.id); it != cached.end()) {
      idx.vectors_[i] = it->second;
    } else {
      missing.push_back(i);
      missing_text.push_back(p.title.empty() ? p.text : p.title + "\n" + p.text);
    }
  });

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (missing.size() + batch - 1) / batch;
  parallel_for(n_batches, options.max_in_flight, [&](std::size_t bi) {
    const std::size_t lo = bi * batch;
    const std::size_t hi = std::min(missing.size(), lo + batch);
    std::vector<std::string> inputs(missing_text.begin() + lo, missing_text.begin() + hi);
    auto vecs = client->embed(inputs);
    for (std::size_t k = 0; k < vecs.size(); ++k) idx.vectors_[missing[lo + k]] = std::move(vecs[k]);
  });

  idx.dim_ = idx.vectors_.front().size();
  for (std::size_t i = 0; i < idx.vectors_.size(); ++i) {
    if (idx.vectors_[i].size() != idx.dim_) {
      fail(ErrorCode::kInvalidArgument, "dimension mismatch for passage '" + idx.ids_[i] + "'");
    }
  }

  if (options.cache_dir && !missing.empty()) {
    std::ofstream out(cache_file, std::ios::app);
    for (std::size_t i : missing) {
      out << json{{"id", idx.ids_[i]}, {"vector", idx.vectors_[i]}}.dump() << '\n';
    }
  }
  return idx;
}

RetrievalResult DenseIndex::retrieve_vector(std::string_view query, const Embedding& query_vec,
                                            int top_k) const {
  if (top_k < 1) fail(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  if (query_vec.size() != dim_) {
    fail(ErrorCode::kInvalidArgument, "dimension mismatch: query has " +
                                          std::to_string(query_vec.size()) + ", index has " +
                                          std::to_string(dim_));
  }
  // Scores are non-negative by contract, so anti-correlated passages are left out.
  std::vector<Hit> hits;
  hits.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const double s = cosine(vectors_[i], query_vec);
    if (s >= 0.0) hits.push_back({ids_[i], s});
  }
  const auto k = std::min(hits.size(), static_cast<std::size_t>(top_k));
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    hit_before);
  hits.resize(k);
  return {std::string(query), std::move(hits), RetrieverTag::kDense};
}

RetrievalResult DenseIndex::retrieve(std::string_view query, int top_k) const {
  return dense_retrieve(*client_, *this, query, top_k);
}

RetrievalResult dense_retrieve(EmbeddingClient& client, const DenseIndex& index,
                               std::string_view query, int top_k) {
  auto vecs = client.embed({std::string(query)});
  if (vecs.size() != 1) fail(ErrorCode::kBackend, "embedding endpoint returned no query vector");
  return index.retrieve_vector(query, vecs.front(), top_k);
}

}  // namespace selrag::retrieval
