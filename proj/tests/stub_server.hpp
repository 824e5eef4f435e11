#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include "httplib.h"

namespace testing {

// Local HTTP server on an ephemeral port that answers POSTs with `handler`.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) {
    server_.Post(".*", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path = "/") const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  int requests() const { return requests_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
};

// A port with nothing listening on it.
inline int dead_port() {
  httplib::Server s;
  int port = s.bind_to_any_port("127.0.0.1");
  return port;
}

}  // namespace testing
