#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace selrag {

struct QAPair {
  std::string id;
  std::string question;
  std::vector<std::string> golden_answers;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

// JSONL {"id", "question", "golden_answers": [...]}. Throws kParse with the
// line number on malformed input and kDuplicateId on repeated ids.
std::vector<QAPair> read_qa_file(const std::filesystem::path& path);

}  // namespace selrag
