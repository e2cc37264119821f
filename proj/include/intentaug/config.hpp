#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "intentaug/corpus.hpp"
#include "intentaug/detector.hpp"
#include "intentaug/disambiguator.hpp"
#include "intentaug/embedding.hpp"
#include "intentaug/error.hpp"
#include "intentaug/providers.hpp"

namespace intentaug {

struct GeneratorSection {
  /// "openai" (HTTP), "mock" (in-process, converging) or "echo" (in-process, returns the intent name).
  std::string kind = "mock";
  std::string api_key_env = "OPENAI_API_KEY";
  GeneratorConfig config;
};

struct EncoderSection {
  /// "openai" (HTTP), "hash" or "tokens" (in-process mock encoders).
  std::string kind = "hash";
  std::string api_key_env = "OPENAI_API_KEY";
  /// Output dimension of the in-process encoders.
  std::size_t mock_dim = 64;
  EncoderConfig config;
};

struct RunConfig {
  std::filesystem::path corpus_path;
  CorpusFormat corpus_format = CorpusFormat::csv;
  std::string corpus_name;
  std::optional<std::filesystem::path> label_manifest;
  /// Prompt domain for labels without a manifest entry.
  std::string domain;

  GeneratorSection generator;
  EncoderSection encoder;

  std::size_t n_shot = 2;
  std::size_t rounds = 5;
  std::uint64_t first_round = 0;
  std::size_t n_synthetic = 10;
  std::string strategy = "dis-3";
  std::size_t max_dis_iterations = 3;
  bool drop_still_ambiguous = false;
  Metric metric = Metric::cosine;
  CenterKind center_kind = CenterKind::mean;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";

  AugmentConfig augment_config(std::uint64_t round) const {
    AugmentConfig c;
    c.n_shot = n_shot;
    c.round = round;
    c.seed = seed;
    c.n_synthetic = n_synthetic;
    c.strategy = parse_strategy(strategy);
    c.metric = metric;
    c.center_kind = center_kind;
    c.drop_still_ambiguous = drop_still_ambiguous;
    return c;
  }

  std::string generator_id() const {
    if (generator.kind == "openai") return generator.config.model_name;
    return generator.kind == "echo" ? "mock-echo" : "mock-convergent";
  }
  std::string encoder_id() const {
    return encoder.kind == "openai" ? encoder.config.model_name
                                    : encoder.kind + "-" + std::to_string(encoder.mock_dim);
  }
};

/// Replaces ${NAME} with the environment variable NAME. Unset variables are errors.
inline std::string interpolate_env(std::string_view s, std::vector<std::string>& errors) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.substr(i, 2) == "${") {
      const auto close = s.find('}', i + 2);
      if (close == std::string_view::npos) {
        errors.push_back("unterminated ${ in '" + std::string(s) + "'");
        return std::string(s);
      }
      const std::string name(s.substr(i + 2, close - i - 2));
      if (const char* v = std::getenv(name.c_str())) {
        out += v;
      } else {
        errors.push_back("environment variable '" + name + "' is not set");
      }
      i = close + 1;
    } else {
      out += s[i++];
    }
  }
  return out;
}

namespace detail {

/// Typed accessors over one TOML table that record problems instead of throwing.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string prefix, std::vector<std::string>& errors)
      : table_(table), prefix_(std::move(prefix)), errors_(errors) {}

  std::optional<std::string> str(const char* key) {
    const auto* node = lookup(key);
    if (!node) return std::nullopt;
    if (auto v = node->value<std::string>()) return interpolate_env(*v, errors_);
    type_error(key, "a string");
    return std::nullopt;
  }

  std::optional<std::int64_t> integer(const char* key) {
    const auto* node = lookup(key);
    if (!node) return std::nullopt;
    if (node->is_integer()) return node->value<std::int64_t>();
    type_error(key, "an integer");
    return std::nullopt;
  }

  std::optional<std::size_t> count(const char* key) {
    auto v = integer(key);
    if (!v) return std::nullopt;
    if (*v < 0) {
      errors_.push_back(name(key) + " must be non-negative");
      return std::nullopt;
    }
    return static_cast<std::size_t>(*v);
  }

  std::optional<double> real(const char* key) {
    const auto* node = lookup(key);
    if (!node) return std::nullopt;
    if (node->is_number()) return node->value<double>();
    type_error(key, "a number");
    return std::nullopt;
  }

  std::optional<bool> boolean(const char* key) {
    const auto* node = lookup(key);
    if (!node) return std::nullopt;
    if (auto v = node->value<bool>()) return *v;
    type_error(key, "a boolean");
    return std::nullopt;
  }

  /// Flags keys that were never read.
  void reject_unknown(std::initializer_list<std::string_view> tables = {}) {
    if (!table_) return;
    for (const auto& [k, _] : *table_) {
      const std::string key(k.str());
      if (!seen_.contains(key) && std::find(tables.begin(), tables.end(), key) == tables.end()) {
        errors_.push_back("unknown key '" + name(key.c_str()) + "'");
      }
    }
  }

 private:
  const toml::node* lookup(const char* key) {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  void type_error(const char* key, const char* expected) { errors_.push_back(name(key) + " must be " + expected); }

  const toml::table* table_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

template <typename T>
void assign(T& dst, std::optional<T> v) {
  if (v) dst = std::move(*v);
}

template <typename Parse>
void assign_parsed(const std::optional<std::string>& v, std::vector<std::string>& errors, Parse&& parse) {
  if (!v) return;
  try {
    parse(*v);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
}

inline void read_retry(TableReader& t, RetryPolicy& r) {
  if (auto v = t.integer("max_retries")) r.max_retries = static_cast<int>(*v);
  if (auto v = t.integer("backoff_initial_ms")) r.initial_backoff = Millis(*v);
  if (auto v = t.real("backoff_factor")) r.backoff_factor = *v;
  if (auto v = t.integer("backoff_max_ms")) r.max_backoff = Millis(*v);
}

}  // namespace detail

/// Checks a fully assembled config. Returns every problem found.
inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> errs;
  if (c.corpus_path.empty()) errs.emplace_back("corpus.path is required");
  if (c.n_shot < 1) errs.emplace_back("n_shot must be >= 1");
  if (c.rounds < 1) errs.emplace_back("rounds must be >= 1");
  try {
    const auto s = parse_strategy(c.strategy);
    if (s.strategy == Strategy::dis && (s.iterations < 1 || s.iterations > c.max_dis_iterations)) {
      errs.push_back("strategy " + c.strategy + " outside dis-1..dis-" + std::to_string(c.max_dis_iterations) +
                     " (raise max_dis_iterations to allow more)");
    }
  } catch (const ConfigError& e) {
    errs.emplace_back(e.what());
  }
  if (c.generator.kind != "openai" && c.generator.kind != "mock" && c.generator.kind != "echo") {
    errs.push_back("generator.kind '" + c.generator.kind + "' must be openai, mock or echo");
  }
  if (c.encoder.kind != "openai" && c.encoder.kind != "hash" && c.encoder.kind != "tokens") {
    errs.push_back("encoder.kind '" + c.encoder.kind + "' must be openai, hash or tokens");
  }
  if (c.generator.kind == "openai") {
    if (c.generator.config.endpoint_url.empty()) errs.emplace_back("generator.endpoint is required for kind openai");
    if (c.generator.config.model_name.empty()) errs.emplace_back("generator.model is required for kind openai");
  }
  if (c.encoder.kind == "openai") {
    if (c.encoder.config.endpoint_url.empty()) errs.emplace_back("encoder.endpoint is required for kind openai");
    if (c.encoder.config.model_name.empty()) errs.emplace_back("encoder.model is required for kind openai");
  } else if (c.encoder.mock_dim == 0) {
    errs.emplace_back("encoder.dim must be positive");
  }
  for (auto& e : validate(c.generator.config)) errs.push_back(std::move(e));
  for (auto& e : validate(c.encoder.config)) errs.push_back(std::move(e));
  return errs;
}

/// Parses a run config. Relative paths are resolved against `base_dir`.
/// Problems are collected into `errors` rather than thrown one at a time.
inline RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                  std::vector<std::string>& errors) {
  RunConfig c;
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    errors.push_back(os.str());
    return c;
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };

  detail::TableReader top(&root, "", errors);
  detail::assign(c.n_shot, top.count("n_shot"));
  detail::assign(c.rounds, top.count("rounds"));
  if (auto v = top.count("first_round")) c.first_round = *v;
  detail::assign(c.n_synthetic, top.count("n_synthetic"));
  detail::assign(c.strategy, top.str("strategy"));
  detail::assign(c.max_dis_iterations, top.count("max_dis_iterations"));
  detail::assign(c.drop_still_ambiguous, top.boolean("drop_still_ambiguous"));
  detail::assign_parsed(top.str("metric"), errors, [&](const std::string& s) { c.metric = parse_metric(s); });
  detail::assign_parsed(top.str("center"), errors, [&](const std::string& s) { c.center_kind = parse_center_kind(s); });
  if (auto v = top.integer("seed")) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = top.str("output_dir")) c.output_dir = resolve(*v);
  top.reject_unknown({"corpus", "generator", "encoder"});

  detail::TableReader corpus(root["corpus"].as_table(), "corpus", errors);
  if (auto v = corpus.str("path")) c.corpus_path = resolve(*v);
  detail::assign_parsed(corpus.str("format"), errors,
                        [&](const std::string& s) { c.corpus_format = parse_corpus_format(s); });
  detail::assign(c.corpus_name, corpus.str("name"));
  if (auto v = corpus.str("labels")) c.label_manifest = resolve(*v);
  detail::assign(c.domain, corpus.str("domain"));
  corpus.reject_unknown();

  detail::TableReader gen(root["generator"].as_table(), "generator", errors);
  auto& g = c.generator;
  detail::assign(g.kind, gen.str("kind"));
  detail::assign(g.config.endpoint_url, gen.str("endpoint"));
  detail::assign(g.config.model_name, gen.str("model"));
  detail::assign(g.config.temperature, gen.real("temperature"));
  detail::read_retry(gen, g.config.retry);
  if (auto v = gen.integer("timeout_ms")) g.config.timeout = Millis(*v);
  detail::assign(g.config.request_parallelism, gen.count("parallelism"));
  detail::assign(g.config.send_seed, gen.boolean("send_seed"));
  detail::assign(g.api_key_env, gen.str("api_key_env"));
  gen.reject_unknown();

  detail::TableReader enc(root["encoder"].as_table(), "encoder", errors);
  auto& e = c.encoder;
  detail::assign(e.kind, enc.str("kind"));
  detail::assign(e.config.endpoint_url, enc.str("endpoint"));
  detail::assign(e.config.model_name, enc.str("model"));
  if (auto v = enc.count("dim")) {
    e.mock_dim = *v;
    e.config.expected_dim = *v;
  }
  detail::assign(e.config.normalize, enc.boolean("normalize"));
  detail::read_retry(enc, e.config.retry);
  if (auto v = enc.integer("timeout_ms")) e.config.timeout = Millis(*v);
  detail::assign(e.config.batch_size, enc.count("batch_size"));
  detail::assign(e.api_key_env, enc.str("api_key_env"));
  enc.reject_unknown();

  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path, std::vector<std::string>& errors) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    errors.emplace_back(e.what());
    return {};
  }
  return parse_run_config(text, path.parent_path(), errors);
}

/// Reads API keys named by *.api_key_env from the environment (missing keys are allowed).
inline void resolve_secrets(RunConfig& c) {
  auto key = [](const std::string& var) -> std::string {
    if (var.empty()) return {};
    const char* v = std::getenv(var.c_str());
    return v ? v : "";
  };
  c.generator.config.api_key = key(c.generator.api_key_env);
  c.encoder.config.api_key = key(c.encoder.api_key_env);
}

/// TOML snapshot of the resolved config with absolute paths; loading it
/// reproduces the run. API keys are not written, only the names of their environment variables.
inline std::string to_toml(const RunConfig& c) {
  auto abs = [](const std::filesystem::path& p) {
    return p.empty() ? std::string{} : std::filesystem::absolute(p).lexically_normal().generic_string();
  };
  toml::table t{
      {"seed", static_cast<std::int64_t>(c.seed)},
      {"n_shot", static_cast<std::int64_t>(c.n_shot)},
      {"rounds", static_cast<std::int64_t>(c.rounds)},
      {"first_round", static_cast<std::int64_t>(c.first_round)},
      {"n_synthetic", static_cast<std::int64_t>(c.n_synthetic)},
      {"strategy", c.strategy},
      {"max_dis_iterations", static_cast<std::int64_t>(c.max_dis_iterations)},
      {"drop_still_ambiguous", c.drop_still_ambiguous},
      {"metric", to_string(c.metric)},
      {"center", to_string(c.center_kind)},
      {"output_dir", abs(c.output_dir)},
  };
  toml::table corpus{{"path", abs(c.corpus_path)},
                     {"format", c.corpus_format == CorpusFormat::csv ? "csv" : "jsonl"}};
  if (!c.corpus_name.empty()) corpus.insert("name", c.corpus_name);
  if (c.label_manifest) corpus.insert("labels", abs(*c.label_manifest));
  if (!c.domain.empty()) corpus.insert("domain", c.domain);
  t.insert("corpus", std::move(corpus));

  const auto& g = c.generator;
  t.insert("generator",
           toml::table{{"kind", g.kind},
                       {"endpoint", g.config.endpoint_url},
                       {"model", g.config.model_name},
                       {"temperature", g.config.temperature},
                       {"max_retries", g.config.retry.max_retries},
                       {"backoff_initial_ms", static_cast<std::int64_t>(g.config.retry.initial_backoff.count())},
                       {"backoff_factor", g.config.retry.backoff_factor},
                       {"backoff_max_ms", static_cast<std::int64_t>(g.config.retry.max_backoff.count())},
                       {"timeout_ms", static_cast<std::int64_t>(g.config.timeout.count())},
                       {"parallelism", static_cast<std::int64_t>(g.config.request_parallelism)},
                       {"send_seed", g.config.send_seed},
                       {"api_key_env", g.api_key_env}});
  const auto& e = c.encoder;
  toml::table enc{{"kind", e.kind},
                  {"endpoint", e.config.endpoint_url},
                  {"model", e.config.model_name},
                  {"normalize", e.config.normalize},
                  {"max_retries", e.config.retry.max_retries},
                  {"backoff_initial_ms", static_cast<std::int64_t>(e.config.retry.initial_backoff.count())},
                  {"backoff_factor", e.config.retry.backoff_factor},
                  {"backoff_max_ms", static_cast<std::int64_t>(e.config.retry.max_backoff.count())},
                  {"timeout_ms", static_cast<std::int64_t>(e.config.timeout.count())},
                  {"batch_size", static_cast<std::int64_t>(e.config.batch_size)},
                  {"api_key_env", e.api_key_env}};
  if (e.kind != "openai" || e.config.expected_dim) {
    enc.insert("dim", static_cast<std::int64_t>(e.kind == "openai" ? *e.config.expected_dim : e.mock_dim));
  }
  t.insert("encoder", std::move(enc));

  std::ostringstream os;
  os << t << '\n';
  return os.str();
}

}  // namespace intentaug
