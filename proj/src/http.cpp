#include "http.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

#include "mindact/error.hpp"

namespace mindact::detail {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
  if (url.compare(0, scheme, "http") != 0) throw ConfigError("only http:// endpoints are supported: " + url);
  std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string post_json(const std::string& endpoint, const std::string& body,
                      const std::map<std::string, std::string>& headers, const RetryPolicy& policy) {
  const Endpoint ep = split_endpoint(endpoint);
  httplib::Headers hdrs(headers.begin(), headers.end());
  std::string last_error;
  int backoff = policy.initial_backoff_ms;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client client(ep.origin);
    const auto timeout = std::chrono::milliseconds(policy.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(ep.path, hdrs, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP status " + std::to_string(res->status);
    // Client errors other than throttling will not improve on retry.
    if (res->status >= 400 && res->status < 500 && res->status != 429) break;
  }
  throw ProtocolError("POST " + endpoint + " failed: " + last_error);
}

}  // namespace mindact::detail
