#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/embedding.hpp"
#include "intentaug/error.hpp"
#include "intentaug/util.hpp"

namespace intentaug {

using Millis = std::chrono::milliseconds;

struct RetryPolicy {
  int max_retries = 3;
  Millis initial_backoff{500};
  double backoff_factor = 2.0;
  Millis max_backoff{30000};
};

struct GeneratorConfig {
  std::string endpoint_url;
  std::string model_name;
  double temperature = 0.7;
  RetryPolicy retry;
  Millis timeout{60000};
  std::size_t request_parallelism = 1;
  /// Forward a per-call seed in the request body (honored by most OpenAI-compatible servers).
  bool send_seed = true;
  std::string api_key;
};

struct EncoderConfig {
  std::string endpoint_url;
  std::string model_name;
  std::optional<std::size_t> expected_dim;
  bool normalize = true;
  RetryPolicy retry;
  Millis timeout{60000};
  std::size_t batch_size = 64;
  std::string api_key;
};

inline std::vector<std::string> validate(const GeneratorConfig& c) {
  std::vector<std::string> errs;
  if (c.retry.max_retries < 0) errs.emplace_back("generator.max_retries must be >= 0");
  if (c.request_parallelism < 1) errs.emplace_back("generator.parallelism must be >= 1");
  if (!(c.temperature >= 0.0)) errs.emplace_back("generator.temperature must be >= 0");
  if (c.timeout.count() <= 0) errs.emplace_back("generator.timeout must be positive");
  return errs;
}

inline std::vector<std::string> validate(const EncoderConfig& c) {
  std::vector<std::string> errs;
  if (c.retry.max_retries < 0) errs.emplace_back("encoder.max_retries must be >= 0");
  if (c.expected_dim && *c.expected_dim == 0) errs.emplace_back("encoder.dim must be positive");
  if (c.batch_size < 1) errs.emplace_back("encoder.batch_size must be >= 1");
  if (c.timeout.count() <= 0) errs.emplace_back("encoder.timeout must be positive");
  return errs;
}

enum class CallKind { generate, regenerate, embed };

inline const char* to_string(CallKind k) {
  switch (k) {
    case CallKind::generate: return "generate";
    case CallKind::regenerate: return "regenerate";
    case CallKind::embed: return "embed";
  }
  return "?";
}

/// One logical provider call. Retries show up in attempt_count, never as extra records.
struct ProviderCallRecord {
  std::string call_id;
  CallKind kind = CallKind::generate;
  std::string request_digest;
  std::string response_digest;
  std::chrono::microseconds latency{0};
  int attempt_count = 0;
  int iteration = 0;
  bool ok = true;
  std::string error;
};

/// Ledger form. Latency is excluded so that ledgers are reproducible; it is logged separately.
inline nlohmann::json to_json(const ProviderCallRecord& r) {
  nlohmann::json j{{"type", "call"},
                   {"call_id", r.call_id},
                   {"kind", to_string(r.kind)},
                   {"iteration", r.iteration},
                   {"request_digest", r.request_digest},
                   {"response_digest", r.response_digest},
                   {"attempt_count", r.attempt_count},
                   {"ok", r.ok}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

// ---------------------------------------------------------------------------
// Transport

struct TransportResponse {
  int status = 0;
  std::string body;
};

/// Connection-level failure (refused, reset, timed out).
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// POSTs JSON bodies to routes relative to a provider base URL.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse post(std::string_view route, std::string_view body) = 0;
};

/// Transport backed by a callable; used for in-process mocks.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<TransportResponse(std::string_view route, std::string_view body)>;
  explicit FunctionTransport(Handler h) : handler_(std::move(h)) {}
  TransportResponse post(std::string_view route, std::string_view body) override { return handler_(route, body); }

 private:
  Handler handler_;
};

// ---------------------------------------------------------------------------
// Utterance extraction

enum class ExtractFailure { no_json_object, missing_key, empty_utterance };

class ExtractError : public DataError {
 public:
  ExtractError(ExtractFailure f, const std::string& what) : DataError(what), failure_(f) {}
  ExtractFailure failure() const noexcept { return failure_; }

 private:
  ExtractFailure failure_;
};

namespace detail {

/// End (one past) of the brace-balanced span starting at text[open], or npos.
inline std::size_t balanced_object_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

inline std::string collapse_line_breaks(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out += (c == '\n' || c == '\r') ? ' ' : c;
  return out;
}

}  // namespace detail

/// Value of "utterance" in the first valid JSON object inside `raw`. Prose
/// around the object is ignored; line breaks inside the value become spaces.
inline std::string extract_utterance(std::string_view raw) {
  for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
    const auto end = detail::balanced_object_end(raw, pos);
    if (end == std::string_view::npos) continue;
    auto obj = nlohmann::json::parse(raw.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) continue;
    auto it = obj.find("utterance");
    if (it == obj.end() || !it->is_string()) {
      throw ExtractError(ExtractFailure::missing_key, "JSON object lacks a string \"utterance\" field");
    }
    const auto value = detail::collapse_line_breaks(trim(it->get_ref<const std::string&>()));
    if (trim(value).empty()) throw ExtractError(ExtractFailure::empty_utterance, "empty utterance");
    return std::string(trim(value));
  }
  throw ExtractError(ExtractFailure::no_json_object, "no valid JSON object in model output");
}

// ---------------------------------------------------------------------------
// Retrying clients

/// Failed logical call; carries the ledger record so partial runs stay auditable.
class CallFailed : public ProviderError {
 public:
  CallFailed(const std::string& what, ProviderCallRecord record, bool malformed_output, int status)
      : ProviderError(what, record.call_id, record.request_digest, status),
        record_(std::move(record)),
        malformed_output_(malformed_output) {}

  const ProviderCallRecord& record() const noexcept { return record_; }
  /// True when every attempt reached the model but its output could not be used.
  bool malformed_output() const noexcept { return malformed_output_; }

 private:
  ProviderCallRecord record_;
  bool malformed_output_;
};

using Sleeper = std::function<void(Millis)>;

inline Sleeper default_sleeper() {
  return [](Millis d) { std::this_thread::sleep_for(d); };
}

/// Exponential backoff with multiplicative jitter in [0.5, 1].
inline Millis backoff_delay(const RetryPolicy& p, int attempt) {
  thread_local std::mt19937_64 jitter_eng{std::random_device{}()};
  const double base = static_cast<double>(p.initial_backoff.count()) * std::pow(p.backoff_factor, attempt - 1);
  const double capped = std::min(base, static_cast<double>(p.max_backoff.count()));
  const double jitter = 0.5 + 0.5 * std::uniform_real_distribution<double>(0.0, 1.0)(jitter_eng);
  return Millis(static_cast<long long>(capped * jitter));
}

struct CallContext {
  std::string call_id;
  CallKind kind = CallKind::generate;
  int iteration = 0;
  std::optional<std::uint64_t> seed;
};

struct Completion {
  std::string text;
  ProviderCallRecord record;
};

namespace detail {

inline bool retryable_status(int status) { return status >= 500 || status == 429; }

/// Shared attempt loop. `handle` maps a 2xx body to a result or throws
/// (ExtractError / DataError) to request another attempt.
template <typename Result, typename Handle>
Result call_with_retries(Transport& transport, const RetryPolicy& policy, const Sleeper& sleep,
                         std::string_view route, const std::string& body, ProviderCallRecord record,
                         Handle&& handle) {
  record.request_digest = sha256_hex(body);
  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  int last_status = 0;
  bool only_malformed = true;
  const int max_attempts = policy.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    record.attempt_count = attempt;
    bool retry = true;
    try {
      const auto resp = transport.post(route, body);
      last_status = resp.status;
      record.response_digest = sha256_hex(resp.body);
      if (resp.status >= 200 && resp.status < 300) {
        try {
          auto result = handle(resp.body);
          record.latency = std::chrono::duration_cast<std::chrono::microseconds>(
              std::chrono::steady_clock::now() - start);
          return Result{std::move(result), std::move(record)};
        } catch (const DataError& e) {
          last_error = e.what();
        } catch (const nlohmann::json::exception& e) {
          last_error = std::string("malformed provider response: ") + e.what();
        }
      } else {
        only_malformed = false;
        last_error = "HTTP status " + std::to_string(resp.status);
        retry = retryable_status(resp.status);
      }
    } catch (const TransportFailure& e) {
      only_malformed = false;
      last_status = 0;
      last_error = std::string("transport failure: ") + e.what();
    }
    if (!retry) break;
    if (attempt < max_attempts) sleep(backoff_delay(policy, attempt));
  }
  record.ok = false;
  record.error = last_error;
  record.latency =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  throw CallFailed(last_error, std::move(record), only_malformed, last_status);
}

inline std::string chat_content(std::string_view body) {
  const auto j = nlohmann::json::parse(body);
  return j.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace detail

/// Chat-completion client speaking the OpenAI `/chat/completions` shape.
class Generator {
 public:
  Generator(GeneratorConfig config, std::shared_ptr<Transport> transport, Sleeper sleep = default_sleeper())
      : config_(std::move(config)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
    if (auto errs = validate(config_); !errs.empty()) throw ConfigError(std::move(errs));
  }

  const GeneratorConfig& config() const noexcept { return config_; }

  nlohmann::json request_body(std::string_view prompt, const CallContext& ctx) const {
    nlohmann::json body{{"model", config_.model_name},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                        {"temperature", config_.temperature}};
    if (config_.send_seed && ctx.seed) body["seed"] = *ctx.seed;
    return body;
  }

  /// Raw model text for `prompt`.
  Completion complete(std::string_view prompt, const CallContext& ctx) const {
    return call(prompt, ctx, [](std::string_view body) { return detail::chat_content(body); });
  }

  /// Like complete(), but the text is the extracted utterance; unparseable
  /// model output counts as a failed attempt.
  Completion generate_utterance(std::string_view prompt, const CallContext& ctx) const {
    return call(prompt, ctx, [](std::string_view body) { return extract_utterance(detail::chat_content(body)); });
  }

 private:
  template <typename Handle>
  Completion call(std::string_view prompt, const CallContext& ctx, Handle&& handle) const {
    ProviderCallRecord rec;
    rec.call_id = ctx.call_id;
    rec.kind = ctx.kind;
    rec.iteration = ctx.iteration;
    return detail::call_with_retries<Completion>(*transport_, config_.retry, sleep_, "/chat/completions",
                                                 request_body(prompt, ctx).dump(), std::move(rec),
                                                 std::forward<Handle>(handle));
  }

  GeneratorConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleep_;
};

struct EmbedBatch {
  std::vector<Embedding> embeddings;
  std::vector<ProviderCallRecord> records;
};

/// Sentence-encoder client speaking the OpenAI `/embeddings` shape.
class Encoder {
 public:
  Encoder(EncoderConfig config, std::shared_ptr<Transport> transport, Sleeper sleep = default_sleeper())
      : config_(std::move(config)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
    if (auto errs = validate(config_); !errs.empty()) throw ConfigError(std::move(errs));
  }

  const EncoderConfig& config() const noexcept { return config_; }
  const std::string& encoder_id() const noexcept { return config_.model_name; }

  /// One embedding per text, in input order. Requests are chunked by
  /// batch_size; each chunk is one ledger record named `<call_prefix>/<k>`.
  EmbedBatch embed_batch(std::span<const std::string> texts, const std::string& call_prefix, int iteration) const {
    if (texts.empty()) throw DataError("embed_batch needs at least one text");
    EmbedBatch out;
    out.embeddings.reserve(texts.size());
    std::optional<std::size_t> batch_dim = config_.expected_dim;
    for (std::size_t begin = 0, k = 0; begin < texts.size(); begin += config_.batch_size, ++k) {
      const auto chunk = texts.subspan(begin, std::min(config_.batch_size, texts.size() - begin));
      ProviderCallRecord rec;
      rec.call_id = call_prefix + "/" + std::to_string(k);
      rec.kind = CallKind::embed;
      rec.iteration = iteration;
      nlohmann::json body{{"model", config_.model_name}, {"input", std::vector<std::string>(chunk.begin(), chunk.end())}};
      struct Result {
        std::vector<std::vector<double>> vectors;
        ProviderCallRecord record;
      };
      auto res = detail::call_with_retries<Result>(
          *transport_, config_.retry, sleep_, "/embeddings", body.dump(), std::move(rec),
          [&](std::string_view resp) { return parse_vectors(resp); });

      if (res.vectors.size() != chunk.size()) {
        res.record.ok = false;
        res.record.error = "count mismatch";
        throw CallFailed("embedding count mismatch: sent " + std::to_string(chunk.size()) + " texts, got " +
                             std::to_string(res.vectors.size()) + " vectors",
                         res.record, false, 200);
      }
      for (auto& v : res.vectors) {
        auto fail = [&](const std::string& why) {
          res.record.ok = false;
          res.record.error = why;
          throw CallFailed(why, res.record, false, 200);
        };
        if (v.empty()) fail("empty embedding vector");
        if (batch_dim && v.size() != *batch_dim) {
          fail("embedding dimension mismatch: expected " + std::to_string(*batch_dim) + ", got " +
               std::to_string(v.size()));
        }
        batch_dim = v.size();
        if (!all_finite(v)) fail("non-finite embedding value");
        if (l2_norm(v) == 0.0) fail("provider returned a zero embedding vector");
        if (config_.normalize) normalize_in_place(v);
        out.embeddings.push_back(Embedding{std::move(v), config_.model_name, config_.normalize});
      }
      out.records.push_back(std::move(res.record));
    }
    return out;
  }

 private:
  static std::vector<std::vector<double>> parse_vectors(std::string_view body) {
    const auto j = nlohmann::json::parse(body);
    const auto& data = j.at("data");
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& item = data.at(i);
      rows.emplace_back(item.value("index", i), item.at("embedding").get<std::vector<double>>());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
  }

  EncoderConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleep_;
};

}  // namespace intentaug
