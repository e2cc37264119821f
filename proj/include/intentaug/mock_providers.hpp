#pragma once

#include <array>
#include <atomic>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/providers.hpp"
#include "intentaug/random.hpp"
#include "intentaug/util.hpp"

namespace intentaug::mock {

/// Deterministic stand-in encoder: mt19937_64 seeded with the FNV-1a hash of
/// the UTF-8 bytes emits `dim` values in [-1, 1), then the vector is L2-normalized.
inline std::vector<double> hash_embedding(std::string_view text, std::size_t dim) {
  Engine eng(fnv1a64(text));
  std::vector<double> v(dim);
  for (auto& x : v) x = 2.0 * uniform_unit(eng) - 1.0;
  normalize_in_place(v);
  return v;
}

/// Bag-of-words variant: sum of hash_embedding over lowercased alphanumeric
/// tokens, normalized. Texts sharing words land near each other.
inline std::vector<double> token_embedding(std::string_view text, std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    const auto v = hash_embedding(token, dim);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += v[i];
    token.clear();
    any = true;
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      token += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  if (!any || l2_norm(acc) == 0.0) return hash_embedding(text, dim);
  normalize_in_place(acc);
  return acc;
}

using EmbedFn = std::function<std::vector<double>(std::string_view)>;

inline std::string embeddings_body(const nlohmann::json& request, const EmbedFn& embed) {
  nlohmann::json data = nlohmann::json::array();
  const auto& input = request.at("input");
  for (std::size_t i = 0; i < input.size(); ++i) {
    data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", embed(input[i].get<std::string>())}});
  }
  return nlohmann::json{{"object", "list"}, {"data", data}, {"model", request.value("model", "")}}.dump();
}

inline std::string chat_body(std::string_view content, std::string_view model = "mock") {
  return nlohmann::json{
      {"object", "chat.completion"},
      {"model", model},
      {"choices",
       nlohmann::json::array({{{"index", 0},
                               {"message", {{"role", "assistant"}, {"content", content}}},
                               {"finish_reason", "stop"}}})}}
      .dump();
}

inline std::string utterance_json(std::string_view text) { return nlohmann::json{{"utterance", text}}.dump(); }

/// Fields recovered from a rendered generation or re-generation prompt.
struct ParsedPrompt {
  bool regeneration = false;
  std::string intent;
  std::string domain;
  std::string ambiguous_utterance;
  std::string most_similar_intent;
  std::vector<std::string> examples;
};

namespace detail {

inline std::string quoted_after(std::string_view text, std::string_view marker) {
  auto p = text.find(marker);
  if (p == std::string_view::npos) return {};
  p += marker.size();
  auto e = text.find('"', p);
  return std::string(text.substr(p, e == std::string_view::npos ? std::string_view::npos : e - p));
}

}  // namespace detail

inline std::optional<ParsedPrompt> parse_prompt(std::string_view prompt) {
  ParsedPrompt out;
  if (prompt.starts_with("I generated 1 user's utterance")) {
    out.regeneration = true;
  } else if (!prompt.starts_with("Give me 1 user's utterance")) {
    return std::nullopt;
  }
  out.intent = detail::quoted_after(prompt, "intent of \"");
  out.domain = detail::quoted_after(prompt, "in the domain \"");
  if (out.regeneration) {
    const std::string_view open = "as follows: \"";
    const std::string_view close = "\". However, the utterance";
    auto a = prompt.find(open);
    auto b = prompt.find(close);
    if (a != std::string_view::npos && b != std::string_view::npos && b > a) {
      out.ambiguous_utterance = std::string(prompt.substr(a + open.size(), b - a - open.size()));
    }
    out.most_similar_intent = detail::quoted_after(prompt, "more similar to the intent \"");
  }
  std::size_t pos = prompt.find('\n');
  while (pos != std::string_view::npos && pos + 1 < prompt.size()) {
    auto end = prompt.find('\n', pos + 1);
    auto line = prompt.substr(pos + 1, end == std::string_view::npos ? std::string_view::npos : end - pos - 1);
    if (line.starts_with("- ")) out.examples.emplace_back(line.substr(2));
    pos = end;
  }
  return out;
}

/// Maps a prompt (plus the per-call seed, when sent) to raw model text.
using ChatFn = std::function<std::string(const ParsedPrompt&, std::uint64_t seed)>;

/// Default offline generator. Generation pads an ICL example with filler
/// words; re-generation returns one target-class ICL example verbatim,
/// which makes the disambiguation loop converge.
inline std::string convergent_chat(const ParsedPrompt& p, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 12> filler = {
      "please", "now", "again", "today", "quickly", "maybe", "actually", "kindly", "also", "here", "then", "ok"};
  if (p.examples.empty()) return utterance_json(p.intent.empty() ? "hello" : p.intent);
  Engine eng(splitmix64(seed));
  const auto& ex = p.examples[uniform_below(eng, p.examples.size())];
  if (p.regeneration) return utterance_json(ex);
  // One to four filler words on each side; short examples drown and drift toward other classes.
  auto pad = [&] {
    std::string s;
    for (auto n = 1 + uniform_below(eng, 4); n > 0; --n) s += std::string(filler[uniform_below(eng, filler.size())]) + " ";
    return s;
  };
  std::string text = pad() + ex;
  text += " " + pad();
  text.pop_back();
  // Some replies wrap the object in prose, as chat models often do.
  if (uniform_below(eng, 4) == 0) return "Sure! Here is one: " + utterance_json(text) + " Hope it helps.";
  return utterance_json(text);
}

/// Returns the target intent's name as the utterance.
inline std::string echo_intent_chat(const ParsedPrompt& p, std::uint64_t) { return utterance_json(p.intent); }

/// In-process OpenAI-compatible endpoint pair (`/chat/completions`, `/embeddings`).
/// Thread-safe; optionally fails the first N requests with HTTP 500.
class MockEndpoint {
 public:
  MockEndpoint(ChatFn chat, EmbedFn embed, int fail_first = 0)
      : chat_(std::move(chat)), embed_(std::move(embed)), fail_remaining_(fail_first) {}

  TransportResponse handle(std::string_view route, std::string_view body) {
    requests_.fetch_add(1);
    if (fail_remaining_.load() > 0 && fail_remaining_.fetch_sub(1) > 0) {
      return {500, R"({"error":{"message":"scripted failure"}})"};
    }
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return {400, R"({"error":{"message":"invalid JSON"}})"};
    }
    try {
      if (route.ends_with("/chat/completions")) {
        const auto prompt = req.at("messages").back().at("content").get<std::string>();
        const auto parsed = parse_prompt(prompt).value_or(ParsedPrompt{});
        const std::uint64_t seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : fnv1a64(prompt);
        return {200, chat_body(chat_(parsed, seed), req.value("model", "mock"))};
      }
      if (route.ends_with("/embeddings")) return {200, embeddings_body(req, embed_)};
    } catch (const std::exception& e) {
      return {400, nlohmann::json{{"error", {{"message", e.what()}}}}.dump()};
    }
    return {404, R"({"error":{"message":"unknown route"}})"};
  }

  int request_count() const { return requests_.load(); }

 private:
  ChatFn chat_;
  EmbedFn embed_;
  std::atomic<int> fail_remaining_;
  std::atomic<int> requests_{0};
};

/// In-process transport that shares ownership of `endpoint`.
inline std::shared_ptr<Transport> endpoint_transport(std::shared_ptr<MockEndpoint> endpoint) {
  return std::make_shared<FunctionTransport>(
      [endpoint = std::move(endpoint)](std::string_view route, std::string_view body) {
        return endpoint->handle(route, body);
      });
}

/// Replays a fixed list of responses in order; once exhausted, repeats the last.
/// A status of -1 simulates a connection failure.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<TransportResponse> script) : script_(std::move(script)) {}

  TransportResponse post(std::string_view route, std::string_view body) override {
    std::lock_guard lock(mu_);
    requests_.push_back({std::string(route), std::string(body)});
    const auto& r = script_.at(std::min(next_++, script_.size() - 1));
    if (r.status < 0) throw TransportFailure("connection refused (scripted)");
    return r;
  }

  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }
  std::vector<std::pair<std::string, std::string>> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<TransportResponse> script_;
  std::size_t next_ = 0;
  std::vector<std::pair<std::string, std::string>> requests_;
};

/// Encoder backed by an explicit text -> vector table (planted geometries in tests).
/// Unknown texts fall back to `fallback`, or fail with HTTP 400 when none is set.
inline std::shared_ptr<Transport> table_encoder(std::map<std::string, std::vector<double>> table,
                                                EmbedFn fallback = {}) {
  return std::make_shared<FunctionTransport>(
      [table = std::move(table), fallback = std::move(fallback)](std::string_view, std::string_view body) {
        const auto req = nlohmann::json::parse(body);
        try {
          return TransportResponse{200, embeddings_body(req, [&](std::string_view t) {
                                     if (auto it = table.find(std::string(t)); it != table.end()) return it->second;
                                     if (fallback) return fallback(t);
                                     throw std::runtime_error("no planted vector for '" + std::string(t) + "'");
                                   })};
        } catch (const std::runtime_error& e) {
          return TransportResponse{400, nlohmann::json{{"error", {{"message", e.what()}}}}.dump()};
        }
      });
}

/// Generator whose reply is computed from the parsed prompt by `fn`.
inline std::shared_ptr<Transport> chat_transport(ChatFn fn) {
  return std::make_shared<FunctionTransport>([fn = std::move(fn)](std::string_view, std::string_view body) {
    const auto req = nlohmann::json::parse(body);
    const auto prompt = req.at("messages").back().at("content").get<std::string>();
    const std::uint64_t seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : fnv1a64(prompt);
    return TransportResponse{200, chat_body(fn(parse_prompt(prompt).value_or(ParsedPrompt{}), seed))};
  });
}

}  // namespace intentaug::mock
