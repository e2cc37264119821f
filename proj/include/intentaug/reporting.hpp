#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/corpus.hpp"
#include "intentaug/error.hpp"
#include "intentaug/ledger.hpp"
#include "intentaug/metrics.hpp"
#include "intentaug/util.hpp"

namespace intentaug {

/// Runs are only averaged together when all of these agree.
struct GroupKey {
  std::string corpus;
  std::string generator;
  std::string encoder;
  std::size_t n_shot = 0;
  std::string strategy;

  auto operator<=>(const GroupKey&) const = default;

  std::vector<std::string> columns() const {
    return {corpus, generator, encoder, std::to_string(n_shot), strategy};
  }
  std::string describe() const {
    return corpus + "/" + generator + "/" + encoder + "/" + std::to_string(n_shot) + "-shot/" + strategy;
  }
};

/// Mean and population standard deviation (divisor n) of one cell.
struct Stat {
  std::size_t count = 0;
  double mean = 0.0;
  std::optional<double> stdev;  // only when count >= 2
};

/// Values are summed in sorted order, so the result does not depend on run order.
inline Stat summarize(std::vector<double> values) {
  Stat s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(ss / static_cast<double>(values.size()));
  }
  return s;
}

/// Metrics of one round, as recorded in its ledger.
struct RunSummary {
  GroupKey key;
  std::uint64_t round = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> ratio;        // iteration label -> ambiguity ratio
  std::map<std::string, double> silhouette;   // iteration label ("0", "1", ..., "final") -> mean s(i)
  std::map<std::string, double> cost_pct;     // "dis-k" -> cumulative percent
  std::optional<PviFilterResult> pvi;
};

inline RunSummary summary_from_ledger(std::span<const nlohmann::json> entries, const std::string& source) {
  RunSummary s;
  bool have_header = false;
  try {
    for (const auto& e : entries) {
      const auto type = e.value("type", std::string{});
      if (type == "run") {
        have_header = true;
        s.key = {e.at("corpus").get<std::string>(), e.at("generator").get<std::string>(),
                 e.at("encoder").get<std::string>(), e.at("n_shot").get<std::size_t>(),
                 e.at("strategy").get<std::string>()};
        s.round = e.at("round").get<std::uint64_t>();
        s.seed = e.at("seed").get<std::uint64_t>();
      } else if (type == "metric") {
        const auto name = e.at("name").get<std::string>();
        const auto it = e.at("iteration");
        const auto label = it.is_string() ? it.get<std::string>() : std::to_string(it.get<int>());
        if (name == "ambiguity_ratio") s.ratio[label] = e.at("value").get<double>();
        if (name == "silhouette_mean") s.silhouette[label] = e.at("value").get<double>();
      } else if (type == "cost") {
        const auto pct = e.at("cumulative_pct").get<std::vector<double>>();
        for (std::size_t i = 0; i < pct.size(); ++i) s.cost_pct["dis-" + std::to_string(i + 1)] = pct[i];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed ledger entry (" + e.what() + ")");
  }
  if (!have_header) throw DataError(source + ": ledger has no run header");
  return s;
}

inline std::optional<PviFilterResult> read_pvi_summary(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) return std::nullopt;
  const auto j = nlohmann::json::parse(read_file(file));
  PviFilterResult r;
  r.kept_ids = j.at("kept_ids").get<std::vector<std::string>>();
  for (const auto& [label, c] : j.at("classes").items()) {
    r.per_class[IntentLabel{label}] = {c.at("total").get<std::size_t>(), c.at("kept").get<std::size_t>(),
                                       c.at("under_represented").get<bool>()};
  }
  return r;
}

/// Loads a round directory: its ledger.jsonl and, if present, pvi.json.
inline RunSummary load_run_dir(const std::filesystem::path& dir) {
  const auto ledger = dir / "ledger.jsonl";
  if (!std::filesystem::exists(ledger)) throw DataError("run dir " + dir.string() + " has no ledger.jsonl");
  const auto entries = read_ledger(ledger);
  auto s = summary_from_ledger(entries, dir.string());
  s.pvi = read_pvi_summary(dir / "pvi.json");
  return s;
}

struct ClassCountStat {
  Stat kept;
  std::size_t under_represented_runs = 0;
};

struct AggregateReport {
  GroupKey key;
  std::size_t runs = 0;
  std::map<std::string, Stat> ratio;
  std::map<std::string, Stat> silhouette;
  std::map<std::string, Stat> cost_pct;
  std::map<IntentLabel, ClassCountStat> pvi_kept;
  /// Imported from the classifier harness; one value per fine-tuning seed.
  std::optional<Stat> macro_f1;
};

inline AggregateReport aggregate(std::span<const RunSummary> runs, std::span<const double> macro_f1_scores = {}) {
  if (runs.empty()) throw DataError("aggregate needs at least one run");
  AggregateReport rep;
  rep.key = runs.front().key;
  rep.runs = runs.size();
  for (const auto& r : runs) {
    if (r.key != rep.key) {
      throw DataError("mixed group keys: " + rep.key.describe() + " vs " + r.key.describe());
    }
  }
  auto collect = [&](auto member) {
    std::map<std::string, std::vector<double>> cells;
    for (const auto& r : runs) {
      for (const auto& [k, v] : r.*member) cells[k].push_back(v);
    }
    std::map<std::string, Stat> out;
    for (auto& [k, vs] : cells) out[k] = summarize(std::move(vs));
    return out;
  };
  rep.ratio = collect(&RunSummary::ratio);
  rep.silhouette = collect(&RunSummary::silhouette);
  rep.cost_pct = collect(&RunSummary::cost_pct);

  std::map<IntentLabel, std::vector<double>> kept;
  std::map<IntentLabel, std::size_t> under;
  for (const auto& r : runs) {
    if (!r.pvi) continue;
    for (const auto& [label, c] : r.pvi->per_class) {
      kept[label].push_back(static_cast<double>(c.kept));
      under[label] += c.under_represented ? 1 : 0;
    }
  }
  for (auto& [label, vs] : kept) rep.pvi_kept[label] = {summarize(std::move(vs)), under[label]};

  if (!macro_f1_scores.empty()) rep.macro_f1 = summarize({macro_f1_scores.begin(), macro_f1_scores.end()});
  return rep;
}

/// Reads a `seed,macro_f1` scores file.
inline std::vector<double> read_scores_csv(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"seed", "macro_f1"}) {
    throw DataError(path.string() + ": expected header 'seed,macro_f1'");
  }
  std::vector<double> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].fields.size() != 2) throw DataError(path.string() + " line " + std::to_string(rows[i].line) + ": expected 2 fields");
    try {
      out.push_back(std::stod(rows[i].fields[1]));
    } catch (const std::exception&) {
      throw DataError(path.string() + " line " + std::to_string(rows[i].line) + ": bad macro_f1 value");
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> key_header() { return {"corpus", "generator", "encoder", "n_shot", "strategy"}; }

inline std::vector<std::string> stat_cells(const Stat& s) {
  return {std::to_string(s.count), format_double(s.mean), s.stdev ? format_double(*s.stdev) : std::string{}};
}

/// Iteration labels sort numerically, with non-numeric labels ("final") last.
inline bool iteration_less(const std::string& a, const std::string& b) {
  auto num = [](const std::string& s) -> std::optional<long> {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::nullopt;
    }
    return std::stol(s);
  };
  const auto na = num(a);
  const auto nb = num(b);
  if (na && nb) return *na < *nb;
  if (na != nb) return na.has_value();
  return a < b;
}

inline std::string stat_table(std::span<const AggregateReport> reports, const std::string& cell_name,
                              std::map<std::string, Stat> AggregateReport::*member) {
  auto header = key_header();
  for (const auto& h : {cell_name, std::string("runs"), std::string("mean"), std::string("stdev_pop")}) {
    header.push_back(h);
  }
  std::string out = csv_row(header);
  for (const auto& rep : reports) {
    std::vector<std::string> keys;
    for (const auto& [k, _] : rep.*member) keys.push_back(k);
    std::sort(keys.begin(), keys.end(), iteration_less);
    for (const auto& k : keys) {
      auto row = rep.key.columns();
      row.push_back(k);
      for (auto& c : stat_cells((rep.*member).at(k))) row.push_back(std::move(c));
      out += csv_row(row);
    }
  }
  return out;
}

}  // namespace detail

/// Writes ratios.csv, silhouette.csv, cost.csv, pvi_counts.csv and
/// classification.csv. Every file always has its header; stdev columns use
/// divisor n and are empty for single-value cells.
inline std::vector<std::filesystem::path> emit_tables(std::span<const AggregateReport> reports,
                                                      const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw DataError("cannot create output directory " + out_dir.string());
  }

  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("ratios.csv", detail::stat_table(reports, "iteration", &AggregateReport::ratio));
  files.emplace_back("silhouette.csv", detail::stat_table(reports, "iteration", &AggregateReport::silhouette));
  files.emplace_back("cost.csv", detail::stat_table(reports, "step", &AggregateReport::cost_pct));

  {
    auto header = detail::key_header();
    for (const char* h : {"label", "runs", "mean_kept", "stdev_pop", "under_represented_runs"}) header.emplace_back(h);
    std::string out = csv_row(header);
    for (const auto& rep : reports) {
      for (const auto& [label, c] : rep.pvi_kept) {
        auto row = rep.key.columns();
        row.push_back(label.name);
        for (auto& cell : detail::stat_cells(c.kept)) row.push_back(std::move(cell));
        row.push_back(std::to_string(c.under_represented_runs));
        out += csv_row(row);
      }
    }
    files.emplace_back("pvi_counts.csv", std::move(out));
  }
  {
    auto header = detail::key_header();
    for (const char* h : {"seeds", "mean_macro_f1", "stdev_pop"}) header.emplace_back(h);
    std::string out = csv_row(header);
    for (const auto& rep : reports) {
      if (!rep.macro_f1) continue;
      auto row = rep.key.columns();
      for (auto& cell : detail::stat_cells(*rep.macro_f1)) row.push_back(std::move(cell));
      out += csv_row(row);
    }
    files.emplace_back("classification.csv", std::move(out));
  }

  std::vector<std::filesystem::path> written;
  for (const auto& [name, content] : files) {
    write_file(out_dir / name, content);
    written.push_back(out_dir / name);
  }
  return written;
}

}  // namespace intentaug
