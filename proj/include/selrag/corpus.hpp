#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace selrag::corpus {

struct Passage {
  std::string id;
  std::string title;
  std::string text;

  friend bool operator==(const Passage&, const Passage&) = default;
};

struct CorpusStats {
  std::uint64_t passage_count = 0;
  std::uint64_t total_tokens = 0;

  // total_tokens / passage_count, or 0 for an empty corpus. Kept as a
  // derived value so that avg * count == total holds exactly as a rational.
  double avg_doc_len() const noexcept {
    return passage_count == 0 ? 0.0
                              : static_cast<double>(total_tokens) /
                                    static_cast<double>(passage_count);
  }

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

// Immutable passage collection. Backed either by an on-disk corpus directory
// (passages.jsonl + offsets.json + stats.json) or by memory.
class Corpus {
 public:
  // Reads JSONL records {"id", "title"?, "text"} and persists them under
  // out_dir. Errors: malformed line -> kParse with the line number; empty
  // text -> kInvalidArgument with the record ordinal; repeated id ->
  // kDuplicateId naming the id.
  static Corpus ingest(std::istream& records, const std::filesystem::path& out_dir,
                       const Tokenizer& tokenizer);
  static Corpus ingest_file(const std::filesystem::path& passages,
                            const std::filesystem::path& out_dir,
                            const Tokenizer& tokenizer);
  static Corpus open(const std::filesystem::path& dir);
  // Same validation as ingest, nothing written to disk.
  static Corpus from_passages(std::vector<Passage> passages, const Tokenizer& tokenizer);

  Passage get(std::string_view id) const;
  bool contains(std::string_view id) const;
  Passage at(std::size_t ordinal) const;
  const std::string& id_at(std::size_t ordinal) const;
  std::size_t size() const noexcept;
  const CorpusStats& stats() const noexcept;
  // Empty for in-memory corpora.
  const std::filesystem::path& dir() const noexcept;

  void for_each(const std::function<void(std::size_t, const Passage&)>& fn) const;

  struct State;  // implementation detail

 private:
  explicit Corpus(std::shared_ptr<const State> state) : state_(std::move(state)) {}
  std::shared_ptr<const State> state_;
};

// Parses a single passage record; throws kParse on malformed JSON or fields.
Passage parse_passage_record(std::string_view line);
std::string serialize_passage_record(const Passage& p);

}  // namespace selrag::corpus
