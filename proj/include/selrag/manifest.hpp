#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace selrag {

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string command_line;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::int64_t> seeds;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string artifact_version = kVersion;
  std::string started_at;
  std::string finished_at;

  nlohmann::ordered_json to_json() const;
};

// SHA-256 of a file, or for a directory of "relative-path\0file-digest\n"
// over its regular files in sorted order.
std::string digest_path(const std::filesystem::path& path);

// <dir>/manifest.json for a directory output, <file>.manifest.json otherwise.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

// UTC, ISO-8601 with seconds.
std::string utc_timestamp();

void write_manifest(const std::filesystem::path& output, const RunManifest& manifest);

}  // namespace selrag
