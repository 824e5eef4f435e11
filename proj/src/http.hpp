#pragma once

#include <map>
#include <string>

namespace mindact::detail {

struct RetryPolicy {
  int max_retries = 3;
  int initial_backoff_ms = 100;
  int timeout_ms = 30000;
};

// POSTs a JSON body and returns the response body. Transport failures and
// non-2xx statuses are retried with exponential backoff; the last failure is
// rethrown as ProtocolError.
std::string post_json(const std::string& endpoint, const std::string& body,
                      const std::map<std::string, std::string>& headers, const RetryPolicy& policy);

}  // namespace mindact::detail
