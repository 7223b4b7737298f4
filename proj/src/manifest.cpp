#include "selrag/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include "selrag/error.hpp"
#include "selrag/util.hpp"

namespace selrag {

namespace fs = std::filesystem;

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command_line"] = command_line;
  j["config"] = config;
  j["seeds"] = seeds;
  j["input_digests"] = input_digests;
  j["artifact_version"] = artifact_version;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

std::string digest_path(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kIo, "cannot digest missing path " + path.string());
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string buf;
  for (const auto& f : files) {
    buf += fs::relative(f, path).generic_string();
    buf.push_back('\0');
    buf += sha256_file(f);
    buf.push_back('\n');
  }
  return sha256_hex(buf);
}

fs::path manifest_path_for(const fs::path& output) {
  if (fs::is_directory(output)) return output / "manifest.json";
  auto p = output;
  p += ".manifest.json";
  return p;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& output, const RunManifest& manifest) {
  write_file_atomic(manifest_path_for(output), manifest.to_json().dump(2) + "\n");
}

}  // namespace selrag
