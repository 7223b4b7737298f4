#include "selrag/llm.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "selrag/error.hpp"
#include "selrag/util.hpp"

namespace selrag::llm {

namespace fs = std::filesystem;
using nlohmann::json;

void GenRequest::validate() const {
  if (max_tokens < 1) fail(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  }
}

std::string fingerprint(const GenRequest& r) {
  std::string buf;
  auto field = [&](std::string_view s) {
    buf += std::to_string(s.size());
    buf += ':';
    buf += s;
    buf += ';';
  };
  field("selrag-gen-v1");
  field(r.system_prompt);
  field(r.user_prompt);
  // Exact bit pattern so 0.1 and 0.1000000001 never collide.
  std::uint64_t bits = 0;
  std::memcpy(&bits, &r.temperature, sizeof bits);
  field(std::to_string(bits));
  field(std::to_string(r.max_tokens));
  field(r.seed ? std::to_string(*r.seed) : std::string("none"));
  return sha256_hex(buf);
}

ScriptedBackend::ScriptedBackend(const std::vector<ScriptedBehavior>& script) {
  for (const auto& b : script) {
    if (!replies_.emplace(b.match_key, b.reply).second) {
      fail(ErrorCode::kDuplicateId, "duplicate match_key '" + b.match_key + "' in script");
    }
  }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open script " + path.string());
  std::vector<ScriptedBehavior> script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      script.push_back({j.at("match_key").get<std::string>(), j.at("reply").get<std::string>()});
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return std::make_shared<ScriptedBackend>(script);
}

GenResponse ScriptedBackend::generate(const GenRequest& request) {
  request.validate();
  calls_.fetch_add(1);
  if (!request.script_key.empty()) {
    if (auto it = replies_.find(request.script_key); it != replies_.end()) {
      return {it->second, tag(), 0};
    }
  }
  const auto fp = fingerprint(request);
  if (auto it = replies_.find(fp); it != replies_.end()) return {it->second, tag(), 0};
  fail(ErrorCode::kScriptMiss, "no scripted reply for key '" +
                                   (request.script_key.empty() ? fp : request.script_key) + "'");
}

HttpChatBackend::HttpChatBackend(HttpChatConfig config)
    : config_(std::move(config)),
      endpoint_(http::parse_url(config_.endpoint_url)),
      in_flight_(std::max(1, config_.max_in_flight)) {}

GenResponse HttpChatBackend::generate(const GenRequest& request) {
  request.validate();
  json body;
  body["model"] = config_.model_name;
  body["messages"] = json::array();
  if (!request.system_prompt.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", request.user_prompt}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;

  http::RetryPolicy policy;
  policy.max_retries = config_.max_retries;
  policy.initial_backoff_ms = config_.initial_backoff_ms;
  policy.timeout_s = config_.timeout_s;

  const auto start = std::chrono::steady_clock::now();
  std::string raw;
  {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{in_flight_};
    calls_.fetch_add(1);
    raw = http::post_json(endpoint_, body.dump(), http::token_from_env(config_.api_key_env), policy);
  }
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);

  std::string text;
  try {
    const auto j = json::parse(raw);
    text = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kStatus, std::string("malformed chat completion response: ") + e.what());
  }
  return {std::move(text), tag(), elapsed.count()};
}

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, fs::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  if (!inner_) fail(ErrorCode::kInvalidArgument, "null backend");
  fs::create_directories(dir_);
}

GenResponse CachingBackend::generate(const GenRequest& request) {
  const auto path = dir_ / (fingerprint(request) + ".json");
  if (fs::exists(path)) {
    try {
      const auto j = json::parse(read_file(path));
      hits_.fetch_add(1);
      return {j.at("text").get<std::string>(), j.at("backend_tag").get<std::string>(), 0};
    } catch (const json::exception&) {
      // Unreadable entry: regenerate and overwrite.
    }
  }
  misses_.fetch_add(1);
  auto resp = inner_->generate(request);
  json j;
  j["text"] = resp.text;
  j["backend_tag"] = resp.backend_tag;
  write_file_atomic(path, j.dump());
  return resp;
}

}  // namespace selrag::llm
