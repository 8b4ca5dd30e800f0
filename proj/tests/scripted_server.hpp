#pragma once

// Local chat-completion endpoint used by the HTTP-backend tests. Include this
// header after any aivv header: it pulls in httplib.h, which drags <resolv.h>
// along, and the _res macro defined there mangles Eigen declarations parsed
// later.

#include <doctest.h>
#include <httplib.h>

#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "aivv/backend.hpp"

namespace aivv_test {

struct Scripted {
  int status = 200;
  std::string body;
};

// Wraps content in a chat-completion envelope.
inline Scripted completion(const std::string& content) {
  const nlohmann::json message{{"content", content}};
  const nlohmann::json choice{{"message", message}};
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({choice});
  return {200, j.dump()};
}

// Replays a scripted response sequence while recording every request body and
// Authorization header. The last scripted entry repeats once exhausted.
class TestServer {
 public:
  TestServer() {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   std::lock_guard<std::mutex> lock(mu_);
                   requests_.push_back(nlohmann::json::parse(req.body));
                   auth_.push_back(req.get_header_value("Authorization"));
                   const Scripted& s =
                       index_ < script_.size() ? script_[index_] : script_.back();
                   ++index_;
                   res.status = s.status;
                   res.set_content(s.body, "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }

  void script(std::vector<Scripted> s) {
    std::lock_guard<std::mutex> lock(mu_);
    script_ = std::move(s);
    index_ = 0;
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t request_count() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.size();
  }
  nlohmann::json request(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.at(i);
  }
  std::string auth(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_.at(i);
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<Scripted> script_;
  std::size_t index_ = 0;
  std::vector<nlohmann::json> requests_;
  std::vector<std::string> auth_;
};

inline aivv::HttpBackendConfig fast_config(const std::string& base_url) {
  aivv::HttpBackendConfig cfg;
  cfg.base_url = base_url;
  cfg.backoff_ms = 1;
  cfg.timeout_sec = 5;
  return cfg;
}

}  // namespace aivv_test
