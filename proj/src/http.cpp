#include "selrag/http.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "selrag/error.hpp"

namespace selrag::http {

Endpoint parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    fail(ErrorCode::kInvalidArgument, "endpoint URL needs a scheme: " + std::string(url));
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    fail(ErrorCode::kInvalidArgument, "unsupported URL scheme: " + std::string(scheme));
  }
  const auto rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  const auto host = rest.substr(0, slash);
  if (host.empty()) fail(ErrorCode::kInvalidArgument, "endpoint URL has no host");
  Endpoint ep;
  ep.origin = std::string(scheme) + "://" + std::string(host);
  ep.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  return ep;
}

std::string token_from_env(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string();
}

std::string post_json(const Endpoint& endpoint, const std::string& body,
                      const std::string& bearer_token, const RetryPolicy& policy) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(policy.timeout_s, 0);
  client.set_read_timeout(policy.timeout_s, 0);
  client.set_write_timeout(policy.timeout_s, 0);
  if (!bearer_token.empty()) client.set_bearer_token_auth(bearer_token);

  const int attempts = std::max(0, policy.max_retries) + 1;
  int backoff_ms = policy.initial_backoff_ms;
  int last_status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(endpoint.path, body, "application/json");
    if (res) {
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) return res->body;
      const bool transient = res->status == 429 || res->status >= 500;
      if (!transient) {
        fail(ErrorCode::kStatus, "HTTP " + std::to_string(res->status) + " from " +
                                     endpoint.origin + endpoint.path + ": " + res->body);
      }
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      last_status = 0;
      last_error = httplib::to_string(res.error());
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  if (last_status != 0) {
    fail(ErrorCode::kStatus, "HTTP " + std::to_string(last_status) + " after " +
                                 std::to_string(attempts) + " attempts");
  }
  fail(ErrorCode::kTransport, "transport failure after " + std::to_string(attempts) +
                                  " attempts: " + last_error);
}

}  // namespace selrag::http
