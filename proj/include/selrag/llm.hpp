#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "selrag/http.hpp"

namespace selrag::llm {

struct GenRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
  // Routing hint for the scripted backend (e.g. "llm:<normalized question>").
  // Not part of the fingerprint.
  std::string script_key;

  void validate() const;
};

struct GenResponse {
  std::string text;  // raw completion, unmodified
  std::string backend_tag;
  std::int64_t latency_ms = 0;
};

// SHA-256 over length-prefixed (system_prompt, user_prompt, temperature,
// max_tokens, seed). Stable across processes and platforms.
std::string fingerprint(const GenRequest& request);

// Backends are shareable across threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenResponse generate(const GenRequest& request) = 0;
  virtual std::string tag() const = 0;
};

struct ScriptedBehavior {
  std::string match_key;
  std::string reply;
};

// Deterministic test double. A request resolves by script_key first, then
// by fingerprint; no match raises kScriptMiss naming the key.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(const std::vector<ScriptedBehavior>& script);
  // JSONL of {"match_key", "reply"}.
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  GenResponse generate(const GenRequest& request) override;
  std::string tag() const override { return "scripted"; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::unordered_map<std::string, std::string> replies_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpChatConfig {
  std::string endpoint_url;
  std::string api_key_env;
  std::string model_name;
  int max_retries = 3;
  int max_in_flight = 4;
  int initial_backoff_ms = 200;
  int timeout_s = 120;
};

// OpenAI-style chat completions: messages in, choices[0].message.content out.
class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);

  GenResponse generate(const GenRequest& request) override;
  std::string tag() const override { return "http:" + config_.model_name; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  HttpChatConfig config_;
  http::Endpoint endpoint_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::size_t> calls_{0};
};

// Replay cache: one file per fingerprint under dir. A hit never reaches the
// wrapped backend.
class CachingBackend final : public Backend {
 public:
  CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir);

  GenResponse generate(const GenRequest& request) override;
  std::string tag() const override { return inner_->tag(); }
  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace selrag::llm
