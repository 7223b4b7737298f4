#pragma once

#include <string>
#include <string_view>

namespace selrag::http {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

// Throws kInvalidArgument for anything that is not http(s)://host[:port][/path].
Endpoint parse_url(std::string_view url);

struct RetryPolicy {
  int max_retries = 3;          // attempts = max_retries + 1
  int initial_backoff_ms = 200;  // doubles after each failed attempt
  int timeout_s = 120;
};

// POSTs a JSON body. Connection failures, 429 and 5xx are retried with
// exponential backoff. Exhausted retries raise kTransport (no response) or
// kStatus (last HTTP status); other non-2xx statuses raise kStatus at once.
std::string post_json(const Endpoint& endpoint, const std::string& body,
                      const std::string& bearer_token, const RetryPolicy& policy);

// Reads the token from the named environment variable; empty name or unset
// variable yields an empty token.
std::string token_from_env(const std::string& env_name);

}  // namespace selrag::http
