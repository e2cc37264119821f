#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace intentaug {

/// Broad failure classes; each maps to one CLI exit code.
enum class ErrorKind { config, provider, data };

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::provider: return 3;
    case ErrorKind::data: return 4;
  }
  return 1;
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::provider: return "provider";
    case ErrorKind::data: return "data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid input data: malformed corpus rows, violated preconditions, degenerate geometry.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Configuration problems. Carries every validation message found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> messages)
      : Error(ErrorKind::config, join(messages)), messages_(std::move(messages)) {}
  explicit ConfigError(const std::string& message) : ConfigError(std::vector<std::string>{message}) {}

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& messages) {
    std::string out;
    for (const auto& m : messages) {
      if (!out.empty()) out += "; ";
      out += m;
    }
    return out;
  }

  std::vector<std::string> messages_;
};

/// A provider call failed after exhausting its retries.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, std::string call_id, std::string request_digest, int status = 0)
      : Error(ErrorKind::provider, what + " [call_id=" + call_id + " request=" + request_digest + "]"),
        call_id_(std::move(call_id)),
        request_digest_(std::move(request_digest)),
        status_(status) {}

  const std::string& call_id() const noexcept { return call_id_; }
  const std::string& request_digest() const noexcept { return request_digest_; }
  /// Last HTTP status seen, 0 for transport-level failures.
  int status() const noexcept { return status_; }

 private:
  std::string call_id_;
  std::string request_digest_;
  int status_;
};

}  // namespace intentaug
