#include "selrag/qa.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "selrag/error.hpp"

namespace selrag {

std::vector<QAPair> read_qa_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<QAPair> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    QAPair qa;
    try {
      const auto j = nlohmann::json::parse(line);
      qa.id = j.at("id").get<std::string>();
      qa.question = j.at("question").get<std::string>();
      qa.golden_answers = j.at("golden_answers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (qa.golden_answers.empty()) {
      fail(ErrorCode::kParse,
           path.string() + " line " + std::to_string(line_no) + ": golden_answers is empty");
    }
    if (!seen.insert(qa.id).second) {
      fail(ErrorCode::kDuplicateId, "duplicate QA id '" + qa.id + "' in " + path.string());
    }
    out.push_back(std::move(qa));
  }
  return out;
}

}  // namespace selrag
