#include "selrag/corpus.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selrag/error.hpp"
#include "selrag/text.hpp"
#include "selrag/util.hpp"

namespace selrag::corpus {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kPassagesFile = "passages.jsonl";
constexpr const char* kOffsetsFile = "offsets.json";
constexpr const char* kStatsFile = "stats.json";

struct Entry {
  std::string id;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

}  // namespace

struct Corpus::State {
  fs::path dir;
  std::vector<Entry> entries;
  std::vector<Passage> memory;  // populated only for in-memory corpora
  std::unordered_map<std::string, std::size_t> by_id;
  CorpusStats stats;
};

Passage parse_passage_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kParse, "record is not an object");
  auto field = [&](const char* name, bool required) -> std::string {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) {
      if (required) fail(ErrorCode::kParse, std::string("missing field '") + name + "'");
      return {};
    }
    if (!it->is_string()) fail(ErrorCode::kParse, std::string("field '") + name + "' is not a string");
    return it->get<std::string>();
  };
  Passage p;
  p.id = field("id", true);
  p.title = field("title", false);
  p.text = field("text", true);
  if (p.id.empty()) fail(ErrorCode::kParse, "empty id");
  return p;
}

std::string serialize_passage_record(const Passage& p) {
  ordered_json j;
  j["id"] = p.id;
  j["title"] = p.title;
  j["text"] = p.text;
  return j.dump();
}

namespace {

void validate_and_index(Corpus::State& st, const Passage& p, std::size_t ordinal,
                        const Tokenizer& tokenizer) {
  if (text::trim(p.text).empty()) {
    fail(ErrorCode::kInvalidArgument,
         "record #" + std::to_string(ordinal) + " has empty text");
  }
  if (!st.by_id.emplace(p.id, st.by_id.size()).second) {
    fail(ErrorCode::kDuplicateId, "duplicate passage id '" + p.id + "'");
  }
  st.stats.passage_count += 1;
  st.stats.total_tokens += tokenizer(p.text).size();
}

}  // namespace

Corpus Corpus::ingest(std::istream& records, const fs::path& out_dir,
                      const Tokenizer& tokenizer) {
  auto st = std::make_shared<State>();
  st->dir = out_dir;
  fs::create_directories(out_dir);

  const auto passages_path = out_dir / kPassagesFile;
  const auto tmp_path = fs::path(passages_path.string() + ".partial");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp_path.string());

    std::string line;
    std::size_t line_no = 0;
    std::size_t ordinal = 0;
    std::uint64_t offset = 0;
    while (std::getline(records, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty()) continue;
      ++ordinal;
      Passage p;
      try {
        p = parse_passage_record(line);
      } catch (const Error& e) {
        fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
      }
      validate_and_index(*st, p, ordinal, tokenizer);
      const std::string rec = serialize_passage_record(p);
      st->entries.push_back({p.id, offset, rec.size()});
      out << rec << '\n';
      offset += rec.size() + 1;
    }
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp_path.string());
  }
  fs::rename(tmp_path, passages_path);

  json offsets = json::array();
  for (const auto& e : st->entries) offsets.push_back({e.id, e.offset, e.length});
  write_file_atomic(out_dir / kOffsetsFile, offsets.dump());

  ordered_json stats;
  stats["format_version"] = kFormatVersion;
  stats["passage_count"] = st->stats.passage_count;
  stats["total_tokens"] = st->stats.total_tokens;
  write_file_atomic(out_dir / kStatsFile, stats.dump(2) + "\n");
  return Corpus(std::move(st));
}

Corpus Corpus::ingest_file(const fs::path& passages, const fs::path& out_dir,
                           const Tokenizer& tokenizer) {
  std::ifstream in(passages, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + passages.string());
  return ingest(in, out_dir, tokenizer);
}

Corpus Corpus::open(const fs::path& dir) {
  auto st = std::make_shared<State>();
  st->dir = dir;
  json stats;
  json offsets;
  try {
    stats = json::parse(read_file(dir / kStatsFile));
    offsets = json::parse(read_file(dir / kOffsetsFile));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "corrupt corpus directory " + dir.string() + ": " + e.what());
  }
  if (stats.value("format_version", 0) != kFormatVersion) {
    fail(ErrorCode::kParse, "unsupported corpus format in " + dir.string());
  }
  st->stats.passage_count = stats.at("passage_count").get<std::uint64_t>();
  st->stats.total_tokens = stats.at("total_tokens").get<std::uint64_t>();
  st->entries.reserve(offsets.size());
  for (const auto& e : offsets) {
    st->by_id.emplace(e.at(0).get<std::string>(), st->entries.size());
    st->entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>(),
                           e.at(2).get<std::uint64_t>()});
  }
  if (st->entries.size() != st->stats.passage_count) {
    fail(ErrorCode::kParse, "corpus offsets and stats disagree in " + dir.string());
  }
  return Corpus(std::move(st));
}

Corpus Corpus::from_passages(std::vector<Passage> passages, const Tokenizer& tokenizer) {
  auto st = std::make_shared<State>();
  for (std::size_t i = 0; i < passages.size(); ++i) {
    validate_and_index(*st, passages[i], i + 1, tokenizer);
    st->entries.push_back({passages[i].id, 0, 0});
  }
  st->memory = std::move(passages);
  return Corpus(std::move(st));
}

Passage Corpus::at(std::size_t ordinal) const {
  if (ordinal >= state_->entries.size()) {
    fail(ErrorCode::kNotFound, "passage ordinal " + std::to_string(ordinal) + " out of range");
  }
  if (!state_->memory.empty()) return state_->memory[ordinal];
  const auto& e = state_->entries[ordinal];
  std::ifstream in(state_->dir / kPassagesFile, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open passages in " + state_->dir.string());
  std::string buf(e.length, '\0');
  in.seekg(static_cast<std::streamoff>(e.offset));
  in.read(buf.data(), static_cast<std::streamsize>(e.length));
  if (!in) fail(ErrorCode::kIo, "short read for passage '" + e.id + "'");
  return parse_passage_record(buf);
}

Passage Corpus::get(std::string_view id) const {
  auto it = state_->by_id.find(std::string(id));
  if (it == state_->by_id.end()) {
    fail(ErrorCode::kNotFound, "passage '" + std::string(id) + "' not found");
  }
  return at(it->second);
}

bool Corpus::contains(std::string_view id) const {
  return state_->by_id.count(std::string(id)) != 0;
}

const std::string& Corpus::id_at(std::size_t ordinal) const {
  return state_->entries.at(ordinal).id;
}

std::size_t Corpus::size() const noexcept { return state_->entries.size(); }

const CorpusStats& Corpus::stats() const noexcept { return state_->stats; }

const fs::path& Corpus::dir() const noexcept { return state_->dir; }

void Corpus::for_each(const std::function<void(std::size_t, const Passage&)>& fn) const {
  if (!state_->memory.empty()) {
    for (std::size_t i = 0; i < state_->memory.size(); ++i) fn(i, state_->memory[i]);
    return;
  }
  std::ifstream in(state_->dir / kPassagesFile, std::ios::binary);
  if (!in && !state_->entries.empty()) {
    fail(ErrorCode::kIo, "cannot open passages in " + state_->dir.string());
  }
  std::string line;
  std::size_t i = 0;
  while (i < state_->entries.size() && std::getline(in, line)) {
    fn(i, parse_passage_record(line));
    ++i;
  }
  if (i != state_->entries.size()) {
    fail(ErrorCode::kIo, "passages file truncated in " + state_->dir.string());
  }
}

}  // namespace selrag::corpus
