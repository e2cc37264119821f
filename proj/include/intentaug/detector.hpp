#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/corpus.hpp"
#include "intentaug/embedding.hpp"
#include "intentaug/error.hpp"

namespace intentaug {

enum class CenterKind { mean, median };

inline CenterKind parse_center_kind(std::string_view s) {
  if (s == "mean") return CenterKind::mean;
  if (s == "median") return CenterKind::median;
  throw ConfigError("unknown center kind '" + std::string(s) + "' (expected mean or median)");
}

inline const char* to_string(CenterKind k) { return k == CenterKind::mean ? "mean" : "median"; }

/// Per-intent reference point built from that intent's ICL embeddings.
struct IntentCenter {
  IntentLabel label;
  std::vector<double> center;
  CenterKind kind = CenterKind::mean;
  std::vector<std::string> source_ids;

  std::size_t n() const noexcept { return source_ids.size(); }
};

/// ICL embeddings of one class, with their utterance ids.
struct ClassEmbeddings {
  IntentLabel label;
  std::vector<std::string> ids;
  std::vector<Embedding> embeddings;
};

/// Component-wise median; even counts average the two middle values.
inline std::vector<double> elementwise_median(std::span<const Embedding> embs) {
  const auto d = embs.front().dim();
  std::vector<double> out(d);
  std::vector<double> column(embs.size());
  const auto n = embs.size();
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = embs[i].vector[k];
    std::sort(column.begin(), column.end());
    out[k] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

inline std::vector<double> elementwise_mean(std::span<const Embedding> embs) {
  std::vector<double> out(embs.front().dim(), 0.0);
  for (const auto& e : embs) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += e.vector[k];
  }
  for (auto& x : out) x /= static_cast<double>(embs.size());
  return out;
}

/// One center per class, in input order. Centers are not re-normalized.
/// Under the cosine metric a zero-norm center is an error naming the class.
inline std::vector<IntentCenter> build_centers(std::span<const ClassEmbeddings> classes, CenterKind kind,
                                               Metric metric = Metric::cosine) {
  std::vector<IntentCenter> centers;
  centers.reserve(classes.size());
  std::size_t dim = 0;
  for (const auto& cls : classes) {
    if (cls.embeddings.empty()) throw DataError("class '" + cls.label.name + "' has no embeddings");
    for (const auto& e : cls.embeddings) {
      if (dim == 0) dim = e.dim();
      if (e.dim() != dim || dim == 0) {
        throw DataError("mixed embedding dimensions in class '" + cls.label.name + "': " + std::to_string(e.dim()) +
                        " vs " + std::to_string(dim));
      }
    }
    IntentCenter c;
    c.label = cls.label;
    c.kind = kind;
    c.source_ids = cls.ids;
    c.center = kind == CenterKind::mean ? elementwise_mean(cls.embeddings) : elementwise_median(cls.embeddings);
    if (!all_finite(c.center)) throw DataError("non-finite center for class '" + cls.label.name + "'");
    if (metric == Metric::cosine && l2_norm(c.center) == 0.0) {
      throw DataError("degenerate zero-norm center for class '" + cls.label.name + "' under cosine distance");
    }
    centers.push_back(std::move(c));
  }
  return centers;
}

/// Detection outcome for one synthetic utterance.
struct AmbiguityVerdict {
  std::string utterance_id;
  IntentLabel target;
  IntentLabel nearest;
  /// Distance to every center, in label-space order.
  std::vector<std::pair<IntentLabel, double>> distances;
  bool ambiguous = false;
};

inline nlohmann::json to_json(const AmbiguityVerdict& v, int iteration) {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& [l, d] : v.distances) dist[l.name] = d;
  return {{"type", "verdict"},   {"iteration", iteration},  {"utterance_id", v.utterance_id},
          {"target", v.target.name}, {"nearest", v.nearest.name}, {"ambiguous", v.ambiguous},
          {"distances", dist}};
}

/// Ties within this absolute distance count as equal.
inline constexpr double kTieTolerance = 1e-12;

/// Nearest-center check. If the target attains the minimum (within
/// kTieTolerance) it wins; otherwise the earliest center in label order does.
inline AmbiguityVerdict classify(std::string utterance_id, const Embedding& synthetic, const IntentLabel& target,
                                 std::span<const IntentCenter> centers, Metric metric) {
  auto target_it = std::find_if(centers.begin(), centers.end(), [&](const auto& c) { return c.label == target; });
  if (target_it == centers.end()) throw DataError("target label '" + target.name + "' is not in the label space");
  if (metric == Metric::cosine && l2_norm(synthetic.vector) == 0.0) {
    throw DataError("zero embedding for '" + utterance_id + "' under cosine distance");
  }

  AmbiguityVerdict v;
  v.utterance_id = std::move(utterance_id);
  v.target = target;
  v.distances.reserve(centers.size());
  double best = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double d = distance(metric, synthetic.vector, centers[i].center);
    v.distances.emplace_back(centers[i].label, d);
    if (i == 0 || d < best) best = d;
  }
  const auto target_idx = static_cast<std::size_t>(target_it - centers.begin());
  if (v.distances[target_idx].second <= best + kTieTolerance) {
    v.nearest = target;
  } else {
    for (const auto& [label, d] : v.distances) {
      if (d <= best + kTieTolerance) {
        v.nearest = label;
        break;
      }
    }
  }
  v.ambiguous = v.nearest != v.target;
  return v;
}

/// Fraction of verdicts flagged ambiguous.
inline double ambiguity_ratio(std::span<const AmbiguityVerdict> verdicts) {
  if (verdicts.empty()) throw DataError("ambiguity ratio of an empty verdict set");
  const auto k = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.ambiguous; });
  return static_cast<double>(k) / static_cast<double>(verdicts.size());
}

}  // namespace intentaug
