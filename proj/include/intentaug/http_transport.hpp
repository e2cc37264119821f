#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "intentaug/error.hpp"
#include "intentaug/mock_providers.hpp"
#include "intentaug/providers.hpp"

namespace intentaug {

/// "https://host:port/v1" -> {"https://host:port", "/v1"}.
struct Endpoint {
  std::string origin;
  std::string base_path;
};

inline Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint '" + std::string(url) + "' lacks a scheme");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("endpoint '" + std::string(url) + "' must use http or https");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) e.base_path = std::string(url.substr(path_start));
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  if (e.origin.size() <= scheme_end + 3) throw ConfigError("endpoint '" + std::string(url) + "' has no host");
  return e;
}

/// Blocking HTTP(S) transport. A fresh client per request keeps concurrent
/// callers independent.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string_view url, std::string api_key, Millis timeout)
      : endpoint_(parse_endpoint(url)), api_key_(std::move(api_key)), timeout_(timeout) {}

  TransportResponse post(std::string_view route, std::string_view body) override {
    httplib::Client cli(endpoint_.origin);
    const auto secs = static_cast<time_t>(timeout_.count() / 1000);
    const auto usecs = static_cast<time_t>((timeout_.count() % 1000) * 1000);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = cli.Post(endpoint_.base_path + std::string(route), headers, std::string(body), "application/json");
    if (!res) throw TransportFailure(httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  Endpoint endpoint_;
  std::string api_key_;
  Millis timeout_;
};

/// Serves a mock::MockEndpoint over HTTP under `prefix` (default "/v1").
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<mock::MockEndpoint> endpoint, std::string prefix = "/v1")
      : endpoint_(std::move(endpoint)), prefix_(std::move(prefix)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const std::string_view path = req.path;
      const auto route = path.substr(std::min(prefix_.size(), path.size()));
      const auto out = endpoint_->handle(route, req.body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    };
    server_.Post(prefix_ + "/chat/completions", handler);
    server_.Post(prefix_ + "/embeddings", handler);
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  ~MockServer() { stop(); }

  /// Binds (port 0 picks a free port) and serves on a background thread. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    host_ = host;
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw ConfigError("cannot bind mock server to " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://" + host_ + ":" + std::to_string(port_) + prefix_; }

 private:
  std::shared_ptr<mock::MockEndpoint> endpoint_;
  std::string prefix_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace intentaug
