#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/corpus.hpp"
#include "intentaug/embedding.hpp"
#include "intentaug/error.hpp"

namespace intentaug {

// ---------------------------------------------------------------------------
// Silhouette over label-given clusters

struct SilhouettePoint {
  std::string id;
  std::span<const double> vector;
  IntentLabel label;
  bool synthetic = false;
};

struct SilhouetteValue {
  std::string id;
  IntentLabel label;
  double a = 0.0;
  double b = 0.0;
  double s = 0.0;
  bool synthetic = false;
  /// Point is alone in its cluster; a is taken as 0.
  bool singleton = false;
};

struct SilhouetteReport {
  std::vector<SilhouetteValue> per_point;  // input order
  /// Mean s(i) over synthetic points; 0 when there are none.
  double mean_over_synthetics = 0.0;
  double mean_over_all = 0.0;
  std::size_t synthetic_count = 0;
  std::vector<IntentLabel> singleton_clusters;

  double at(std::string_view id) const {
    for (const auto& p : per_point) {
      if (p.id == id) return p.s;
    }
    throw DataError("no silhouette value for '" + std::string(id) + "'");
  }
};

/// s(i) = (b - a) / max(a, b), where a is the mean distance to the rest of the
/// point's own cluster and b the smallest mean distance to another cluster.
/// Clusters are the given labels. a = b = 0 yields 0.
inline SilhouetteReport silhouette(std::span<const SilhouettePoint> points, Metric metric) {
  std::map<IntentLabel, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < points.size(); ++i) clusters[points[i].label].push_back(i);
  if (clusters.size() < 2) {
    throw DataError("silhouette needs at least 2 clusters, found " + std::to_string(clusters.size()));
  }

  SilhouetteReport rep;
  rep.per_point.reserve(points.size());
  for (const auto& [label, members] : clusters) {
    if (members.size() == 1) rep.singleton_clusters.push_back(label);
  }

  double sum_syn = 0.0;
  double sum_all = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    SilhouetteValue v{p.id, p.label, 0.0, std::numeric_limits<double>::infinity(), 0.0, p.synthetic, false};
    for (const auto& [label, members] : clusters) {
      double total = 0.0;
      for (auto j : members) {
        if (j != i) total += distance(metric, p.vector, points[j].vector);
      }
      if (label == p.label) {
        if (members.size() == 1) {
          v.singleton = true;
        } else {
          v.a = total / static_cast<double>(members.size() - 1);
        }
      } else {
        v.b = std::min(v.b, total / static_cast<double>(members.size()));
      }
    }
    const double denom = std::max(v.a, v.b);
    v.s = denom == 0.0 ? 0.0 : (v.b - v.a) / denom;
    sum_all += v.s;
    if (p.synthetic) {
      sum_syn += v.s;
      ++rep.synthetic_count;
    }
    rep.per_point.push_back(std::move(v));
  }
  rep.mean_over_all = points.empty() ? 0.0 : sum_all / static_cast<double>(points.size());
  rep.mean_over_synthetics = rep.synthetic_count == 0 ? 0.0 : sum_syn / static_cast<double>(rep.synthetic_count);
  return rep;
}

// ---------------------------------------------------------------------------
// Pointwise V-information

/// Classifier probabilities of the gold label with the input and with a null input.
struct ProbabilityRow {
  std::string id;
  IntentLabel label;
  double p_with_input = 0.0;
  double p_null = 0.0;
};

struct PviRecord {
  std::string id;
  IntentLabel label;
  double logprob_with_input = 0.0;  // log2
  double logprob_null = 0.0;        // log2
  double pvi = 0.0;
};

/// Rows of {id, label, p_with_input, p_null}; blank lines are skipped.
inline std::vector<ProbabilityRow> parse_probability_jsonl(std::string_view text) {
  std::vector<ProbabilityRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "probability file line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + e.what());
    }
    for (const char* key : {"id", "label"}) {
      if (!j.contains(key) || !j.at(key).is_string()) throw DataError(where + "missing string field '" + key + "'");
    }
    for (const char* key : {"p_with_input", "p_null"}) {
      if (!j.contains(key) || !j.at(key).is_number()) throw DataError(where + "missing numeric field '" + key + "'");
    }
    rows.push_back({j.at("id").get<std::string>(), IntentLabel{j.at("label").get<std::string>()},
                    j.at("p_with_input").get<double>(), j.at("p_null").get<double>()});
  }
  return rows;
}

/// PVI in bits: log2 g(y|x) - log2 g(y|null). Probabilities must lie in (0, 1].
inline std::vector<PviRecord> pvi_score(std::span<const ProbabilityRow> rows) {
  std::vector<PviRecord> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    for (double p : {r.p_with_input, r.p_null}) {
      if (!(p > 0.0 && p <= 1.0)) {
        throw DataError("probability " + format_double(p) + " for '" + r.id + "' is outside (0, 1]");
      }
    }
    PviRecord rec{r.id, r.label, std::log2(r.p_with_input), std::log2(r.p_null), 0.0};
    rec.pvi = rec.logprob_with_input - rec.logprob_null;
    out.push_back(std::move(rec));
  }
  return out;
}

enum class PviMode { global, per_intent };

inline PviMode parse_pvi_mode(std::string_view s) {
  if (s == "global") return PviMode::global;
  if (s == "per_intent" || s == "per-intent") return PviMode::per_intent;
  throw ConfigError("unknown PVI mode '" + std::string(s) + "' (expected global or per_intent)");
}

struct PviFilterPolicy {
  PviMode mode = PviMode::per_intent;
  double global_threshold = 0.0;
  std::map<IntentLabel, double> thresholds;
};

/// Mean PVI over all records (global) or per class (per_intent).
inline PviFilterPolicy default_pvi_policy(std::span<const PviRecord> records, PviMode mode) {
  PviFilterPolicy p;
  p.mode = mode;
  if (records.empty()) return p;
  if (mode == PviMode::global) {
    double sum = 0.0;
    for (const auto& r : records) sum += r.pvi;
    p.global_threshold = sum / static_cast<double>(records.size());
  } else {
    std::map<IntentLabel, std::pair<double, std::size_t>> acc;
    for (const auto& r : records) {
      acc[r.label].first += r.pvi;
      acc[r.label].second += 1;
    }
    for (const auto& [label, sn] : acc) p.thresholds[label] = sn.first / static_cast<double>(sn.second);
  }
  return p;
}

struct ClassSurvivors {
  std::size_t total = 0;
  std::size_t kept = 0;
  bool under_represented = false;
};

struct PviFilterResult {
  std::vector<std::string> kept_ids;
  std::map<IntentLabel, ClassSurvivors> per_class;
};

/// Keeps records with pvi >= their threshold. A class is flagged
/// under-represented when fewer than `min_kept_fraction` of its records survive,
/// or none do.
inline PviFilterResult pvi_filter(std::span<const PviRecord> records, const PviFilterPolicy& policy,
                                  double min_kept_fraction = 0.5) {
  PviFilterResult res;
  for (const auto& r : records) {
    double threshold = policy.global_threshold;
    if (policy.mode == PviMode::per_intent) {
      auto it = policy.thresholds.find(r.label);
      if (it == policy.thresholds.end()) throw DataError("no PVI threshold for class '" + r.label.name + "'");
      threshold = it->second;
    }
    auto& c = res.per_class[r.label];
    ++c.total;
    if (r.pvi >= threshold) {
      ++c.kept;
      res.kept_ids.push_back(r.id);
    }
  }
  for (auto& [label, c] : res.per_class) {
    c.under_represented = c.kept == 0 || static_cast<double>(c.kept) < min_kept_fraction * static_cast<double>(c.total);
  }
  return res;
}

inline nlohmann::json to_json(const PviFilterResult& r) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [label, c] : r.per_class) {
    classes[label.name] = {{"total", c.total}, {"kept", c.kept}, {"under_represented", c.under_represented}};
  }
  return {{"kept_ids", r.kept_ids}, {"classes", classes}};
}

}  // namespace intentaug
