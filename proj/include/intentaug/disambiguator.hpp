#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/corpus.hpp"
#include "intentaug/detector.hpp"
#include "intentaug/ledger.hpp"
#include "intentaug/parallel.hpp"
#include "intentaug/prompts.hpp"
#include "intentaug/providers.hpp"
#include "intentaug/random.hpp"

namespace intentaug {

/// How ambiguous generations are treated. `dis` re-generates up to
/// AugmentConfig::max_iterations times.
enum class Strategy { none, drop, dis };

struct StrategySpec {
  Strategy strategy = Strategy::none;
  std::size_t iterations = 0;
};

/// Parses "none", "drop" or "dis-k".
inline StrategySpec parse_strategy(std::string_view s) {
  if (s == "none") return {Strategy::none, 0};
  if (s == "drop") return {Strategy::drop, 0};
  if (s.starts_with("dis-")) {
    const auto digits = s.substr(4);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return {Strategy::dis, static_cast<std::size_t>(std::stoul(std::string(digits)))};
    }
  }
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected none, drop or dis-k)");
}

inline std::string to_string(const StrategySpec& s) {
  switch (s.strategy) {
    case Strategy::none: return "none";
    case Strategy::drop: return "drop";
    case Strategy::dis: return "dis-" + std::to_string(s.iterations);
  }
  return "?";
}

struct AugmentConfig {
  std::size_t n_shot = 2;
  std::uint64_t round = 0;
  std::uint64_t seed = 0;
  std::size_t n_synthetic = 10;
  StrategySpec strategy;
  Metric metric = Metric::cosine;
  CenterKind center_kind = CenterKind::mean;
  /// Under dis-k, drop synthetics still ambiguous after the last iteration instead of keeping them.
  bool drop_still_ambiguous = false;

  std::size_t max_iterations() const { return strategy.strategy == Strategy::dis ? strategy.iterations : 0; }
};

enum class FinalStatus { pending, clean, still_ambiguous, dropped };

inline const char* to_string(FinalStatus s) {
  switch (s) {
    case FinalStatus::pending: return "pending";
    case FinalStatus::clean: return "clean";
    case FinalStatus::still_ambiguous: return "still_ambiguous";
    case FinalStatus::dropped: return "dropped";
  }
  return "?";
}

/// One generated utterance across its re-generation iterations.
struct SyntheticUtterance {
  std::string id;
  IntentLabel target;
  std::vector<std::string> text_history;
  std::vector<AmbiguityVerdict> verdict_history;
  std::vector<Embedding> embedding_history;
  FinalStatus final_status = FinalStatus::pending;

  const AmbiguityVerdict& verdict_at(std::size_t iteration) const {
    return verdict_history.at(std::min(iteration, verdict_history.size() - 1));
  }
  const Embedding& embedding_at(std::size_t iteration) const {
    return embedding_history.at(std::min(iteration, embedding_history.size() - 1));
  }
  bool kept() const { return final_status != FinalStatus::dropped; }
};

struct AugmentationRun {
  AugmentConfig config;
  ShotSample shots;
  /// ICL embeddings per class (label-space order) and the centers built from them once.
  std::vector<ClassEmbeddings> icl;
  std::vector<IntentCenter> centers;
  /// Sorted by id.
  std::vector<SyntheticUtterance> synthetics;
  std::vector<ProviderCallRecord> calls;
};

/// Generator and encoder used by a run; `parallelism` bounds in-flight generation calls.
struct Providers {
  const Generator& generator;
  const Encoder& encoder;
};

namespace detail {

inline std::string padded(std::size_t v, std::size_t width) {
  auto s = std::to_string(v);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

inline std::size_t digits(std::size_t v) { return std::max<std::size_t>(3, std::to_string(v).size()); }

/// Per-call seed forwarded to the generator; 31 bits for compatibility with servers that take int32.
inline std::uint64_t call_seed(const AugmentConfig& cfg, std::string_view synthetic_id, std::size_t iteration) {
  return stream_seed(stream_seed(cfg.seed, cfg.round), fnv1a64(synthetic_id), iteration) & 0x7fffffffULL;
}

inline void record_call(AugmentationRun& run, RunLedger& ledger, const ProviderCallRecord& rec) {
  run.calls.push_back(rec);
  ledger.append_call(rec);
}

[[noreturn]] inline void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  throw std::logic_error("rethrow_first without error");
}

/// Logs the call records of a parallel stage in slot order, including
/// the records carried by failed calls, then rethrows the first failure.
inline void settle_stage(AugmentationRun& run, RunLedger& ledger, std::vector<std::optional<Completion>>& results,
                         const std::vector<std::exception_ptr>& errors) {
  bool failed = false;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i]) {
      record_call(run, ledger, results[i]->record);
    } else if (errors[i]) {
      failed = true;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const CallFailed& e) {
        record_call(run, ledger, e.record());
      } catch (...) {
      }
    }
  }
  if (failed) rethrow_first(errors);
}

}  // namespace detail

/// Embeds the sampled ICL utterances and builds the fixed per-intent centers.
inline void prepare_centers(AugmentationRun& run, const Corpus& corpus, const Encoder& encoder, RunLedger& ledger) {
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  for (const auto& label : corpus.label_space()) {
    for (const auto& id : run.shots.picks.at(label)) {
      ids.push_back(id);
      texts.push_back(corpus.find(id).text);
    }
  }
  auto batch = encoder.embed_batch(texts, "embed/icl", 0);
  for (const auto& rec : batch.records) detail::record_call(run, ledger, rec);

  run.icl.clear();
  std::size_t k = 0;
  for (const auto& label : corpus.label_space()) {
    ClassEmbeddings cls{label, {}, {}};
    for (std::size_t i = 0; i < run.shots.picks.at(label).size(); ++i, ++k) {
      cls.ids.push_back(ids[k]);
      cls.embeddings.push_back(std::move(batch.embeddings[k]));
    }
    run.icl.push_back(std::move(cls));
  }
  run.centers = build_centers(run.icl, run.config.center_kind, run.config.metric);
}

/// Creates n_synthetic utterances per intent, one generator call each.
inline std::vector<SyntheticUtterance> generate_initial(AugmentationRun& run, const Corpus& corpus,
                                                        const Generator& generator, RunLedger& ledger) {
  const auto& cfg = run.config;
  const auto label_w = detail::digits(corpus.num_labels());
  const auto synth_w = detail::digits(cfg.n_synthetic);

  struct Job {
    std::string id;
    std::size_t label_idx;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
    for (std::size_t k = 0; k < cfg.n_synthetic; ++k) {
      jobs.push_back({"syn-" + detail::padded(c, label_w) + "-" + detail::padded(k, synth_w), c});
    }
  }

  std::vector<std::string> prompts(corpus.num_labels());
  for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
    const auto& label = corpus.label_space()[c];
    prompts[c] = prompts::render_generation(
        {corpus.display_name(c), corpus.domain(c), shot_texts(corpus, run.shots, label)});
  }

  std::vector<std::optional<Completion>> results(jobs.size());
  auto errors = parallel_for(jobs.size(), generator.config().request_parallelism, [&](std::size_t i) {
    CallContext ctx{"generate/" + jobs[i].id, CallKind::generate, 0, detail::call_seed(cfg, jobs[i].id, 0)};
    results[i] = generator.generate_utterance(prompts[jobs[i].label_idx], ctx);
  });
  detail::settle_stage(run, ledger, results, errors);

  std::vector<SyntheticUtterance> out;
  out.reserve(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    SyntheticUtterance s;
    s.id = jobs[i].id;
    s.target = corpus.label_space()[jobs[i].label_idx];
    s.text_history.push_back(std::move(results[i]->text));
    out.push_back(std::move(s));
  }
  return out;
}

/// Embeds every latest text that has no verdict yet and classifies it against
/// the fixed centers.
inline void detect(AugmentationRun& run, const Encoder& encoder, RunLedger& ledger, int iteration) {
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < run.synthetics.size(); ++i) {
    if (run.synthetics[i].verdict_history.size() < run.synthetics[i].text_history.size()) pending.push_back(i);
  }
  if (pending.empty()) return;
  std::vector<std::string> texts;
  texts.reserve(pending.size());
  for (auto i : pending) texts.push_back(run.synthetics[i].text_history.back());
  auto batch = encoder.embed_batch(texts, "embed/iter" + std::to_string(iteration), iteration);
  for (const auto& rec : batch.records) detail::record_call(run, ledger, rec);
  for (std::size_t k = 0; k < pending.size(); ++k) {
    auto& s = run.synthetics[pending[k]];
    auto v = classify(s.id, batch.embeddings[k], s.target, run.centers, run.config.metric);
    ledger.append(to_json(v, iteration));
    s.embedding_history.push_back(std::move(batch.embeddings[k]));
    s.verdict_history.push_back(std::move(v));
  }
}

/// Iterative detect-and-regenerate loop. Iteration t re-generates every
/// synthetic whose latest verdict is ambiguous, naming the latest nearest
/// intent as the confounder; the loop stops early once nothing is ambiguous.
///
/// If every attempt of a re-generation call returns unusable output, the
/// previous text is carried forward (and logged as a failed call).
inline void disambiguate(AugmentationRun& run, const Corpus& corpus, Providers providers, RunLedger& ledger,
                         std::size_t max_iterations) {
  const auto& cfg = run.config;
  detect(run, providers.encoder, ledger, 0);
  for (std::size_t t = 1; t <= max_iterations; ++t) {
    std::vector<std::size_t> ambiguous;
    for (std::size_t i = 0; i < run.synthetics.size(); ++i) {
      if (run.synthetics[i].verdict_history.back().ambiguous) ambiguous.push_back(i);
    }
    if (ambiguous.empty()) break;

    std::vector<std::optional<Completion>> results(ambiguous.size());
    std::vector<bool> carried(ambiguous.size(), false);
    std::vector<ProviderCallRecord> carried_records(ambiguous.size());
    auto errors = parallel_for(ambiguous.size(), providers.generator.config().request_parallelism, [&](std::size_t k) {
      const auto& s = run.synthetics[ambiguous[k]];
      const auto target_idx = *corpus.label_index(s.target);
      const auto similar_idx = *corpus.label_index(s.verdict_history.back().nearest);
      const auto prompt = prompts::render_regeneration({corpus.display_name(target_idx), corpus.domain(target_idx),
                                                        s.text_history.back(), corpus.display_name(similar_idx),
                                                        shot_texts(corpus, run.shots, s.target)});
      CallContext ctx{"regenerate/" + s.id + "/" + std::to_string(t), CallKind::regenerate, static_cast<int>(t),
                      detail::call_seed(cfg, s.id, t)};
      try {
        results[k] = providers.generator.generate_utterance(prompt, ctx);
      } catch (const CallFailed& e) {
        if (!e.malformed_output()) throw;
        carried[k] = true;
        carried_records[k] = e.record();
      }
    });

    for (std::size_t k = 0; k < ambiguous.size(); ++k) {
      if (carried[k]) results[k] = Completion{run.synthetics[ambiguous[k]].text_history.back(), carried_records[k]};
    }
    detail::settle_stage(run, ledger, results, errors);

    for (std::size_t k = 0; k < ambiguous.size(); ++k) {
      auto& s = run.synthetics[ambiguous[k]];
      s.text_history.push_back(results[k]->text);
      if (carried[k]) {
        // Same text as before: reuse its embedding and verdict.
        s.embedding_history.push_back(s.embedding_history.back());
        s.verdict_history.push_back(s.verdict_history.back());
        ledger.append(to_json(s.verdict_history.back(), static_cast<int>(t)));
      }
    }
    detect(run, providers.encoder, ledger, static_cast<int>(t));
  }
  for (auto& s : run.synthetics) {
    const bool amb = s.verdict_history.back().ambiguous;
    s.final_status = amb ? (cfg.drop_still_ambiguous && max_iterations > 0 ? FinalStatus::dropped : FinalStatus::still_ambiguous)
                         : FinalStatus::clean;
  }
}

/// Drop strategy: discards every synthetic whose first verdict is ambiguous.
/// Makes no generator calls.
inline void apply_drop(AugmentationRun& run) {
  for (auto& s : run.synthetics) {
    if (s.verdict_history.empty()) throw DataError("apply_drop before detection for '" + s.id + "'");
    s.final_status = s.verdict_history.front().ambiguous ? FinalStatus::dropped : FinalStatus::clean;
  }
}

/// Ambiguity ratio after each iteration 0..max_iterations, counting every
/// synthetic (a synthetic's verdict stays fixed once it stops changing).
inline std::vector<double> ambiguity_ratios(const AugmentationRun& run, std::size_t iterations) {
  std::vector<double> out;
  for (std::size_t t = 0; t <= iterations; ++t) {
    std::vector<AmbiguityVerdict> vs;
    vs.reserve(run.synthetics.size());
    for (const auto& s : run.synthetics) vs.push_back(s.verdict_at(t));
    out.push_back(vs.empty() ? 0.0 : ambiguity_ratio(vs));
  }
  return out;
}

/// Extra generator calls caused by re-generation, relative to the original augmentation.
struct CostReport {
  std::size_t original_calls = 0;
  std::vector<std::size_t> extra_calls_per_iteration;
  std::vector<double> cumulative_pct;
};

inline CostReport make_cost_report(std::size_t original_calls, std::vector<std::size_t> extra_calls) {
  CostReport r;
  r.original_calls = original_calls;
  r.extra_calls_per_iteration = std::move(extra_calls);
  std::size_t cum = 0;
  for (auto x : r.extra_calls_per_iteration) {
    cum += x;
    r.cumulative_pct.push_back(original_calls == 0 ? 0.0
                                                   : 100.0 * static_cast<double>(cum) /
                                                         static_cast<double>(original_calls));
  }
  return r;
}

inline CostReport cost_report(const AugmentationRun& run) {
  std::size_t originals = 0;
  std::vector<std::size_t> extra(run.config.max_iterations(), 0);
  for (const auto& c : run.calls) {
    if (c.kind == CallKind::generate) {
      ++originals;
    } else if (c.kind == CallKind::regenerate && c.iteration >= 1) {
      const auto t = static_cast<std::size_t>(c.iteration);
      if (t > extra.size()) extra.resize(t, 0);
      ++extra[t - 1];
    }
  }
  return make_cost_report(originals, std::move(extra));
}

inline std::string cost_csv(const CostReport& r) {
  std::string out = csv_row({"iteration", "original_calls", "extra_calls", "cumulative_pct"});
  for (std::size_t i = 0; i < r.extra_calls_per_iteration.size(); ++i) {
    out += csv_row({"dis-" + std::to_string(i + 1), std::to_string(r.original_calls),
                    std::to_string(r.extra_calls_per_iteration[i]), format_double(r.cumulative_pct[i])});
  }
  return out;
}

/// "original", "regenerated_k" (k = iteration that produced the final text).
inline std::string provenance(const SyntheticUtterance& s) {
  const auto& final_text = s.text_history.back();
  for (std::size_t i = 0; i < s.text_history.size(); ++i) {
    if (s.text_history[i] == final_text) return i == 0 ? "original" : "regenerated_" + std::to_string(i);
  }
  return "original";
}

/// Training set rows: ICL examples, then every kept synthetic by id.
inline std::vector<nlohmann::json> augmented_records(const AugmentationRun& run, const Corpus& corpus) {
  std::vector<nlohmann::json> out;
  for (const auto& label : corpus.label_space()) {
    for (const auto& id : run.shots.picks.at(label)) {
      out.push_back({{"id", id},
                     {"text", corpus.find(id).text},
                     {"label", label.name},
                     {"provenance", "icl"},
                     {"final_status", nullptr}});
    }
  }
  for (const auto& s : run.synthetics) {
    if (!s.kept()) continue;
    out.push_back({{"id", s.id},
                   {"text", s.text_history.back()},
                   {"label", s.target.name},
                   {"provenance", provenance(s)},
                   {"final_status", to_string(s.final_status)}});
  }
  return out;
}

/// Full per-synthetic history, for audit.
inline nlohmann::json to_json(const SyntheticUtterance& s) {
  nlohmann::json nearest = nlohmann::json::array();
  for (const auto& v : s.verdict_history) nearest.push_back(v.nearest.name);
  return {{"id", s.id},
          {"target", s.target.name},
          {"texts", s.text_history},
          {"nearest", nearest},
          {"final_status", to_string(s.final_status)}};
}

/// Runs one complete augmentation: centers, initial generation, detection and
/// the configured strategy.
inline AugmentationRun run_augmentation(const AugmentConfig& cfg, const Corpus& corpus, ShotSample shots,
                                        Providers providers, RunLedger& ledger) {
  AugmentationRun run;
  run.config = cfg;
  run.shots = std::move(shots);
  prepare_centers(run, corpus, providers.encoder, ledger);
  run.synthetics = generate_initial(run, corpus, providers.generator, ledger);
  switch (cfg.strategy.strategy) {
    case Strategy::none:
      disambiguate(run, corpus, providers, ledger, 0);
      break;
    case Strategy::drop:
      detect(run, providers.encoder, ledger, 0);
      apply_drop(run);
      break;
    case Strategy::dis:
      disambiguate(run, corpus, providers, ledger, cfg.max_iterations());
      break;
  }
  return run;
}

}  // namespace intentaug
