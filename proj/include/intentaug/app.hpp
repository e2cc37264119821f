#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/config.hpp"
#include "intentaug/corpus.hpp"
#include "intentaug/disambiguator.hpp"
#include "intentaug/http_transport.hpp"
#include "intentaug/ledger.hpp"
#include "intentaug/metrics.hpp"
#include "intentaug/mock_providers.hpp"
#include "intentaug/reporting.hpp"

namespace intentaug::app {

namespace fs = std::filesystem;

struct ProviderSet {
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Encoder> encoder;

  Providers view() const { return {*generator, *encoder}; }
};

/// Builds the configured clients: HTTP for kind "openai", in-process mocks otherwise.
inline ProviderSet make_providers(const RunConfig& cfg) {
  ProviderSet p;
  std::shared_ptr<Transport> gen_transport;
  auto gen_cfg = cfg.generator.config;
  if (cfg.generator.kind == "openai") {
    gen_transport = std::make_shared<HttpTransport>(gen_cfg.endpoint_url, gen_cfg.api_key, gen_cfg.timeout);
  } else {
    auto chat = cfg.generator.kind == "echo" ? mock::ChatFn(mock::echo_intent_chat) : mock::ChatFn(mock::convergent_chat);
    gen_transport = mock::endpoint_transport(std::make_shared<mock::MockEndpoint>(chat, mock::EmbedFn{}));
    if (gen_cfg.model_name.empty()) gen_cfg.model_name = cfg.generator_id();
  }
  p.generator = std::make_unique<Generator>(gen_cfg, gen_transport);

  std::shared_ptr<Transport> enc_transport;
  auto enc_cfg = cfg.encoder.config;
  if (cfg.encoder.kind == "openai") {
    enc_transport = std::make_shared<HttpTransport>(enc_cfg.endpoint_url, enc_cfg.api_key, enc_cfg.timeout);
  } else {
    const auto dim = cfg.encoder.mock_dim;
    mock::EmbedFn fn = cfg.encoder.kind == "tokens"
                           ? mock::EmbedFn([dim](std::string_view t) { return mock::token_embedding(t, dim); })
                           : mock::EmbedFn([dim](std::string_view t) { return mock::hash_embedding(t, dim); });
    enc_transport = mock::endpoint_transport(std::make_shared<mock::MockEndpoint>(mock::ChatFn{}, fn));
    enc_cfg.model_name = cfg.encoder_id();
    enc_cfg.expected_dim = dim;
  }
  p.encoder = std::make_unique<Encoder>(enc_cfg, enc_transport);
  return p;
}

inline Corpus load_configured_corpus(const RunConfig& cfg) {
  std::optional<LabelManifest> manifest;
  if (cfg.label_manifest) manifest = load_label_manifest(*cfg.label_manifest);
  if (!cfg.domain.empty()) {
    if (!manifest) manifest.emplace();
    if (manifest->default_domain.empty()) manifest->default_domain = cfg.domain;
  }
  return load_corpus(cfg.corpus_path, cfg.corpus_format, manifest ? &*manifest : nullptr, cfg.corpus_name);
}

/// Throws ConfigError listing every problem in `cfg`.
inline void require_valid(const RunConfig& cfg) {
  if (auto errs = validate(cfg); !errs.empty()) throw ConfigError(std::move(errs));
}

inline std::string config_hash(const RunConfig& cfg) { return sha256_hex(to_toml(cfg)).substr(0, 12); }

/// Planned generator calls; nothing is sent.
inline nlohmann::json plan(const RunConfig& cfg, const Corpus& corpus) {
  const auto m = corpus.num_labels();
  const auto originals = m * cfg.n_synthetic;
  const auto k = cfg.augment_config(cfg.first_round).max_iterations();
  return {{"corpus", corpus.name()},
          {"labels", m},
          {"n_shot", cfg.n_shot},
          {"n_synthetic", cfg.n_synthetic},
          {"strategy", cfg.strategy},
          {"rounds", cfg.rounds},
          {"original_calls_per_round", originals},
          {"max_regeneration_calls_per_round", originals * k},
          {"original_calls_total", originals * cfg.rounds},
          {"max_regeneration_calls_total", originals * k * cfg.rounds}};
}

namespace detail {

inline std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

inline fs::path fresh_dir(const fs::path& base) {
  fs::path dir = base;
  for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  fs::create_directories(dir);
  return dir;
}

inline std::string jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + '\n';
  return out;
}

inline std::vector<SilhouettePoint> icl_points(const AugmentationRun& run) {
  std::vector<SilhouettePoint> pts;
  for (const auto& cls : run.icl) {
    for (std::size_t i = 0; i < cls.ids.size(); ++i) {
      pts.push_back({cls.ids[i], cls.embeddings[i].vector, cls.label, false});
    }
  }
  return pts;
}

}  // namespace detail

/// Silhouette over ICL examples plus every synthetic as it stood after `iteration`.
inline SilhouetteReport silhouette_at(const AugmentationRun& run, std::size_t iteration) {
  auto pts = detail::icl_points(run);
  for (const auto& s : run.synthetics) pts.push_back({s.id, s.embedding_at(iteration).vector, s.target, true});
  return silhouette(pts, run.config.metric);
}

/// Silhouette over ICL examples plus the kept synthetics' final texts.
inline SilhouetteReport silhouette_final(const AugmentationRun& run) {
  auto pts = detail::icl_points(run);
  for (const auto& s : run.synthetics) {
    if (s.kept()) pts.push_back({s.id, s.embedding_history.back().vector, s.target, true});
  }
  return silhouette(pts, run.config.metric);
}

struct RoundResult {
  fs::path dir;
  AugmentationRun run;
  CostReport cost;
  std::vector<double> ratios;
};

/// Executes one sampling round and writes its artifacts into `dir`.
inline RoundResult run_round(const RunConfig& cfg, const Corpus& corpus, const ProviderSet& providers,
                             std::uint64_t round, const fs::path& dir) {
  fs::create_directories(dir);
  auto round_cfg = cfg;
  round_cfg.rounds = 1;
  round_cfg.first_round = round;
  write_file(dir / "config.toml", to_toml(round_cfg));

  const auto acfg = cfg.augment_config(round);
  auto shots = sample_shots(corpus, cfg.n_shot, round, cfg.seed);
  write_file(dir / "shots.json", to_manifest(shots).dump(2) + "\n");

  RunLedger ledger(dir / "ledger.jsonl", dir / "timings.jsonl");
  ledger.append({{"type", "run"},
                 {"corpus", corpus.name()},
                 {"generator", cfg.generator_id()},
                 {"encoder", cfg.encoder_id()},
                 {"n_shot", cfg.n_shot},
                 {"strategy", to_string(acfg.strategy)},
                 {"round", round},
                 {"seed", cfg.seed},
                 {"n_synthetic", cfg.n_synthetic},
                 {"metric", to_string(acfg.metric)},
                 {"center", to_string(acfg.center_kind)}});
  ledger.append({{"type", "shots"}, {"manifest", to_manifest(shots)}});

  RoundResult res;
  res.dir = dir;
  res.run = run_augmentation(acfg, corpus, std::move(shots), providers.view(), ledger);
  const auto& run = res.run;
  const auto iterations = acfg.max_iterations();

  std::string metrics_csv = csv_row({"iteration", "ambiguity_ratio", "silhouette_mean"});
  if (!run.synthetics.empty()) {
    res.ratios = ambiguity_ratios(run, iterations);
    for (std::size_t t = 0; t <= iterations; ++t) {
      const double sil = silhouette_at(run, t).mean_over_synthetics;
      ledger.append_metric("ambiguity_ratio", static_cast<int>(t), res.ratios[t]);
      ledger.append_metric("silhouette_mean", static_cast<int>(t), sil);
      metrics_csv += csv_row({std::to_string(t), format_double(res.ratios[t]), format_double(sil)});
    }
    const auto fin = silhouette_final(run);
    ledger.append({{"type", "metric"}, {"name", "silhouette_mean"}, {"iteration", "final"},
                   {"value", fin.mean_over_synthetics}});
    metrics_csv += csv_row({"final", "", format_double(fin.mean_over_synthetics)});

    std::string points = csv_row({"id", "label", "synthetic", "a", "b", "s", "singleton"});
    for (const auto& p : fin.per_point) {
      points += csv_row({p.id, p.label.name, p.synthetic ? "1" : "0", format_double(p.a), format_double(p.b),
                         format_double(p.s), p.singleton ? "1" : "0"});
    }
    write_file(dir / "silhouette_points.csv", points);
  }
  write_file(dir / "metrics.csv", metrics_csv);

  res.cost = cost_report(run);
  ledger.append({{"type", "cost"},
                 {"original_calls", res.cost.original_calls},
                 {"extra_calls_per_iteration", res.cost.extra_calls_per_iteration},
                 {"cumulative_pct", res.cost.cumulative_pct}});
  write_file(dir / "cost.csv", cost_csv(res.cost));

  std::map<std::string, std::size_t> status_counts;
  std::vector<nlohmann::json> synth_rows;
  for (const auto& s : run.synthetics) {
    ++status_counts[to_string(s.final_status)];
    synth_rows.push_back(to_json(s));
  }
  ledger.append({{"type", "final"}, {"synthetics", run.synthetics.size()}, {"status_counts", status_counts}});
  write_file(dir / "synthetics.jsonl", detail::jsonl(synth_rows));
  write_file(dir / "augmented.jsonl", detail::jsonl(augmented_records(run, corpus)));
  return res;
}

struct AugmentOptions {
  bool dry_run = false;
  /// Exact output directory; by default a fresh `<config hash>-<UTC time>` under output_dir.
  std::optional<fs::path> run_dir;
};

struct AugmentResult {
  nlohmann::json plan;
  fs::path run_dir;
  std::vector<fs::path> round_dirs;
};

/// sample -> generate -> detect -> strategy -> metrics -> reports, for every configured round.
inline AugmentResult cmd_augment(RunConfig cfg, const AugmentOptions& opts, std::ostream& log) {
  require_valid(cfg);
  resolve_secrets(cfg);
  const auto corpus = load_configured_corpus(cfg);
  for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
    if (corpus.members(c).size() < cfg.n_shot) {
      throw DataError("class '" + corpus.label_space()[c].name + "' has " +
                      std::to_string(corpus.members(c).size()) + " utterances, fewer than n_shot=" +
                      std::to_string(cfg.n_shot));
    }
  }

  AugmentResult out;
  out.plan = plan(cfg, corpus);
  if (opts.dry_run) return out;

  const auto providers = make_providers(cfg);
  out.run_dir = opts.run_dir ? *opts.run_dir
                             : detail::fresh_dir(cfg.output_dir / (config_hash(cfg) + "-" + detail::utc_stamp()));
  fs::create_directories(out.run_dir);
  write_file(out.run_dir / "config.toml", to_toml(cfg));

  std::vector<RunSummary> summaries;
  for (std::uint64_t r = cfg.first_round; r < cfg.first_round + cfg.rounds; ++r) {
    const auto dir = out.run_dir / ("round-" + std::to_string(r));
    const auto res = run_round(cfg, corpus, providers, r, dir);
    log << "round " << r << ": " << res.run.synthetics.size() << " synthetics";
    if (!res.ratios.empty()) log << ", ambiguity ratio " << format_double(res.ratios.front()) << " -> "
                                 << format_double(res.ratios.back());
    log << '\n';
    out.round_dirs.push_back(dir);
    summaries.push_back(load_run_dir(dir));
  }
  const std::vector<AggregateReport> reports{aggregate(summaries)};
  emit_tables(reports, out.run_dir / "report");
  return out;
}

/// Round directories under `dir`: itself if it holds a ledger, else its round-* children.
inline std::vector<fs::path> expand_run_dir(const fs::path& dir) {
  if (fs::exists(dir / "ledger.jsonl")) return {dir};
  std::vector<fs::path> rounds;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && entry.path().filename().string().starts_with("round-") &&
          fs::exists(entry.path() / "ledger.jsonl")) {
        rounds.push_back(entry.path());
      }
    }
  }
  if (rounds.empty()) throw DataError("run dir " + dir.string() + " has no ledger.jsonl");
  std::sort(rounds.begin(), rounds.end());
  return rounds;
}

struct ReportOptions {
  std::vector<fs::path> dirs;
  fs::path out_dir;
  std::vector<fs::path> score_files;
  /// Aggregate each group key separately instead of rejecting mixed keys.
  bool group = false;
};

inline std::vector<AggregateReport> cmd_report(const ReportOptions& opts) {
  if (opts.dirs.empty()) throw ConfigError("report needs at least one run dir");
  std::map<GroupKey, std::vector<RunSummary>> groups;
  for (const auto& d : opts.dirs) {
    for (const auto& round_dir : expand_run_dir(d)) {
      auto s = load_run_dir(round_dir);
      if (!opts.group && !groups.empty() && !groups.contains(s.key)) {
        throw DataError("incompatible group keys: " + groups.begin()->first.describe() + " vs " + s.key.describe() +
                        " (in " + round_dir.string() + "); pass --group to aggregate per key");
      }
      groups[s.key].push_back(std::move(s));
    }
  }
  std::vector<double> scores;
  for (const auto& f : opts.score_files) {
    for (double v : read_scores_csv(f)) scores.push_back(v);
  }
  if (!scores.empty() && groups.size() > 1) {
    throw ConfigError("classification scores can only be attached to a single group");
  }
  std::vector<AggregateReport> reports;
  for (const auto& [key, runs] : groups) reports.push_back(aggregate(runs, scores));
  emit_tables(reports, opts.out_dir);
  return reports;
}

/// Summary of a corpus file: label count and class sizes. Throws DataError when invalid.
inline nlohmann::json cmd_validate_corpus(const fs::path& path, CorpusFormat format,
                                          const std::optional<fs::path>& manifest_path,
                                          std::optional<std::size_t> n_shot) {
  std::optional<LabelManifest> manifest;
  if (manifest_path) manifest = load_label_manifest(*manifest_path);
  const auto corpus = load_corpus(path, format, manifest ? &*manifest : nullptr);
  nlohmann::json sizes = nlohmann::json::object();
  std::size_t smallest = corpus.utterances().size();
  for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
    sizes[corpus.label_space()[c].name] = corpus.members(c).size();
    smallest = std::min(smallest, corpus.members(c).size());
  }
  if (n_shot && smallest < *n_shot) {
    for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
      if (corpus.members(c).size() < *n_shot) {
        throw DataError("class '" + corpus.label_space()[c].name + "' has fewer than " + std::to_string(*n_shot) +
                        " utterances");
      }
    }
  }
  return {{"corpus", corpus.name()},
          {"utterances", corpus.utterances().size()},
          {"labels", corpus.num_labels()},
          {"smallest_class", smallest},
          {"class_sizes", sizes}};
}

struct PviOptions {
  fs::path probabilities;
  PviMode mode = PviMode::per_intent;
  /// Overrides the default (mean) threshold in global mode.
  std::optional<double> global_threshold;
  /// JSON object {label: threshold}; overrides per-class defaults.
  std::optional<fs::path> thresholds_file;
  double min_kept_fraction = 0.5;
  fs::path out_dir;
};

inline PviFilterResult cmd_pvi(const PviOptions& opts) {
  const auto rows = parse_probability_jsonl(read_file(opts.probabilities));
  const auto records = pvi_score(rows);
  auto policy = default_pvi_policy(records, opts.mode);
  if (opts.global_threshold) policy.global_threshold = *opts.global_threshold;
  if (opts.thresholds_file) {
    const auto j = nlohmann::json::parse(read_file(*opts.thresholds_file));
    for (const auto& [k, v] : j.items()) policy.thresholds[IntentLabel{k}] = v.get<double>();
  }
  const auto res = pvi_filter(records, policy, opts.min_kept_fraction);

  fs::create_directories(opts.out_dir);
  write_file(opts.out_dir / "pvi.json", to_json(res).dump(2) + "\n");
  std::string scores = csv_row({"id", "label", "log2_p_with_input", "log2_p_null", "pvi"});
  for (const auto& r : records) {
    scores += csv_row({r.id, r.label.name, format_double(r.logprob_with_input), format_double(r.logprob_null),
                       format_double(r.pvi)});
  }
  write_file(opts.out_dir / "pvi_scores.csv", scores);
  std::string counts = csv_row({"label", "total", "kept", "under_represented"});
  for (const auto& [label, c] : res.per_class) {
    counts += csv_row({label.name, std::to_string(c.total), std::to_string(c.kept), c.under_represented ? "1" : "0"});
  }
  write_file(opts.out_dir / "pvi_counts.csv", counts);
  return res;
}

}  // namespace intentaug::app
