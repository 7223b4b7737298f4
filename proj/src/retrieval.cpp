#include "selrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "selrag/error.hpp"
#include "selrag/text.hpp"

namespace selrag::retrieval {

namespace fs = std::filesystem;

void RetrievalConfig::validate() const {
  if (top_k < 1) fail(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  if (!(k1 > 0.0) || !std::isfinite(k1)) fail(ErrorCode::kInvalidArgument, "k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) fail(ErrorCode::kInvalidArgument, "b must lie in [0, 1]");
}

std::string_view retriever_tag_name(RetrieverTag tag) noexcept {
  return tag == RetrieverTag::kBm25 ? "bm25" : "dense";
}

std::string to_json(const RetrievalResult& result) {
  nlohmann::ordered_json j;
  j["query"] = result.query;
  j["retriever_tag"] = retriever_tag_name(result.retriever_tag);
  auto& hits = j["hits"] = nlohmann::ordered_json::array();
  for (const auto& h : result.hits) {
    hits.push_back({{"passage_id", h.passage_id}, {"score", h.score}});
  }
  return j.dump();
}

std::vector<std::string> tokenize(std::string_view text) { return text::tokenize(text); }

Bm25Index Bm25Index::build(const corpus::Corpus& corpus, const RetrievalConfig& config) {
  config.validate();
  if (corpus.size() == 0) fail(ErrorCode::kPrecondition, "cannot index an empty corpus");

  Bm25Index idx;
  idx.corpus_ = std::make_shared<const corpus::Corpus>(corpus);
  idx.config_ = config;
  idx.doc_ids_.resize(corpus.size());
  idx.doc_len_.resize(corpus.size());

  std::unordered_map<std::string, std::uint32_t> tf;
  corpus.for_each([&](std::size_t ordinal, const corpus::Passage& p) {
    const auto doc = static_cast<std::uint32_t>(ordinal);
    idx.doc_ids_[ordinal] = p.id;
    tf.clear();
    const auto tokens = tokenize(p.text);
    idx.doc_len_[ordinal] = static_cast<std::uint32_t>(tokens.size());
    idx.total_tokens_ += tokens.size();
    for (const auto& t : tokens) ++tf[t];
    // Sorted so the on-disk layout does not depend on hash iteration order.
    std::vector<std::pair<std::string_view, std::uint32_t>> sorted(tf.begin(), tf.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [term, count] : sorted) {
      auto [it, inserted] = idx.term_ids_.try_emplace(std::string(term),
                                                      static_cast<std::uint32_t>(idx.terms_.size()));
      if (inserted) {
        idx.terms_.emplace_back(term);
        idx.postings_.emplace_back();
      }
      idx.postings_[it->second].push_back({doc, count});
    }
  });
  idx.finalize();
  return idx;
}

void Bm25Index::finalize() {
  doc_ordinal_.clear();
  doc_ordinal_.reserve(doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    doc_ordinal_.emplace(doc_ids_[i], static_cast<std::uint32_t>(i));
  }
  avgdl_ = static_cast<double>(total_tokens_) / static_cast<double>(doc_ids_.size());
}

double Bm25Index::idf(std::size_t df) const noexcept {
  const double n = static_cast<double>(doc_ids_.size());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t doc) const noexcept {
  const double f = static_cast<double>(tf);
  const double k1 = config_.k1;
  const double b = config_.b;
  const double len = static_cast<double>(doc_len_[doc]);
  // avgdl is 0 only when every passage tokenizes to nothing; then no term matches.
  const double norm = avgdl_ > 0.0 ? len / avgdl_ : 0.0;
  return idf * (f * (k1 + 1.0)) / (f + k1 * (1.0 - b + b * norm));
}

std::vector<std::uint32_t> Bm25Index::query_terms(std::string_view query) const {
  std::vector<std::uint32_t> ids;
  for (const auto& tok : tokenize(query)) {
    auto it = term_ids_.find(tok);
    if (it == term_ids_.end()) continue;
    if (std::find(ids.begin(), ids.end(), it->second) == ids.end()) ids.push_back(it->second);
  }
  return ids;
}

std::uint32_t Bm25Index::doc_freq(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? 0 : static_cast<std::uint32_t>(postings_[it->second].size());
}

double Bm25Index::score(std::string_view query, std::string_view passage_id) const {
  auto dit = doc_ordinal_.find(std::string(passage_id));
  if (dit == doc_ordinal_.end()) {
    fail(ErrorCode::kNotFound, "passage '" + std::string(passage_id) + "' not in index");
  }
  const std::uint32_t doc = dit->second;
  double total = 0.0;
  for (std::uint32_t term : query_terms(query)) {
    const auto& plist = postings_[term];
    auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (it != plist.end() && it->doc == doc) {
      total += term_weight(idf(plist.size()), it->tf, doc);
    }
  }
  return total;
}

RetrievalResult Bm25Index::retrieve(std::string_view query, int top_k) const {
  if (top_k < 1) fail(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  RetrievalResult result;
  result.query = std::string(query);
  result.retriever_tag = RetrieverTag::kBm25;

  // Term-at-a-time accumulation in query-term order, so every document sees
  // the same summation order as a per-document evaluation would.
  std::vector<double> acc;
  std::vector<std::uint32_t> touched;
  for (std::uint32_t term : query_terms(query)) {
    const auto& plist = postings_[term];
    const double w = idf(plist.size());
    if (acc.empty()) acc.assign(doc_ids_.size(), 0.0);
    for (const auto& p : plist) {
      if (acc[p.doc] == 0.0) touched.push_back(p.doc);
      acc[p.doc] += term_weight(w, p.tf, p.doc);
    }
  }

  std::vector<Hit> hits;
  hits.reserve(touched.size());
  for (std::uint32_t doc : touched) {
    if (acc[doc] > 0.0) hits.push_back({doc_ids_[doc], acc[doc]});
  }
  const auto k = std::min(hits.size(), static_cast<std::size_t>(top_k));
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    hit_before);
  hits.resize(k);
  result.hits = std::move(hits);
  return result;
}

// On-disk layout (host byte order):
//   magic "SELRAG-BM25\0", u32 version, f64 k1, f64 b, i32 top_k,
//   str corpus_dir, u64 total_tokens, u64 n_docs, {str id, u32 len} * n_docs,
//   u64 n_terms, {str term, u64 n_postings, {u32 doc, u32 tf} * n} * n_terms
namespace {

constexpr char kMagic[12] = {'S', 'E', 'L', 'R', 'A', 'G', '-', 'B', 'M', '2', '5', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kIndexFile = "bm25.idx";

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::kParse, "truncated index file");
  return v;
}

std::string get_str(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 32)) fail(ErrorCode::kParse, "corrupt index string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) fail(ErrorCode::kParse, "truncated index file");
  return s;
}

}  // namespace

void Bm25Index::save(const fs::path& dir) const {
  if (corpus_->dir().empty()) {
    fail(ErrorCode::kPrecondition, "only indexes over an on-disk corpus can be saved");
  }
  fs::create_directories(dir);
  const auto path = dir / kIndexFile;
  const auto tmp = fs::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put(out, kVersion);
    put(out, config_.k1);
    put(out, config_.b);
    put<std::int32_t>(out, config_.top_k);
    put_str(out, fs::absolute(corpus_->dir()).lexically_normal().string());
    put<std::uint64_t>(out, total_tokens_);
    put<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
      put_str(out, doc_ids_[i]);
      put(out, doc_len_[i]);
    }
    put<std::uint64_t>(out, terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      put_str(out, terms_[t]);
      put<std::uint64_t>(out, postings_[t].size());
      for (const auto& p : postings_[t]) {
        put(out, p.doc);
        put(out, p.tf);
      }
    }
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Bm25Index Bm25Index::load(const fs::path& dir) {
  const auto path = dir / kIndexFile;
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::kParse, path.string() + " is not a BM25 index");
  }
  if (get<std::uint32_t>(in) != kVersion) {
    fail(ErrorCode::kParse, "unsupported index version in " + path.string());
  }
  Bm25Index idx;
  idx.config_.k1 = get<double>(in);
  idx.config_.b = get<double>(in);
  idx.config_.top_k = get<std::int32_t>(in);
  idx.config_.validate();
  idx.corpus_ = std::make_shared<const corpus::Corpus>(corpus::Corpus::open(get_str(in)));
  idx.total_tokens_ = get<std::uint64_t>(in);
  const auto n_docs = get<std::uint64_t>(in);
  if (n_docs != idx.corpus_->size()) {
    fail(ErrorCode::kParse, "index and corpus disagree on passage count");
  }
  idx.doc_ids_.resize(n_docs);
  idx.doc_len_.resize(n_docs);
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    idx.doc_ids_[i] = get_str(in);
    idx.doc_len_[i] = get<std::uint32_t>(in);
  }
  const auto n_terms = get<std::uint64_t>(in);
  idx.terms_.resize(n_terms);
  idx.postings_.resize(n_terms);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    idx.terms_[t] = get_str(in);
    idx.term_ids_.emplace(idx.terms_[t], static_cast<std::uint32_t>(t));
    const auto n = get<std::uint64_t>(in);
    if (n > n_docs) fail(ErrorCode::kParse, "corrupt posting list");
    idx.postings_[t].resize(n);
    for (auto& p : idx.postings_[t]) {
      p.doc = get<std::uint32_t>(in);
      p.tf = get<std::uint32_t>(in);
      if (p.doc >= n_docs) fail(ErrorCode::kParse, "corrupt posting list");
    }
  }
  idx.finalize();
  return idx;
}

}  // namespace selrag::retrieval
