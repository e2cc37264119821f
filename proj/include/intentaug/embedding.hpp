#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intentaug/error.hpp"

namespace intentaug {

/// Sentence-encoder output for one text.
struct Embedding {
  std::vector<double> vector;
  std::string encoder_id;
  bool normalized = false;

  std::size_t dim() const noexcept { return vector.size(); }
  bool operator==(const Embedding&) const = default;
};

enum class Metric { cosine, euclidean };

inline Metric parse_metric(std::string_view s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected cosine or euclidean)");
}

inline const char* to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

/// Scales to unit length; zero vectors are rejected.
inline void normalize_in_place(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw DataError("cannot normalize a zero vector");
  for (auto& x : v) x /= n;
}

/// 1 - cos(a, b), clamped at 0. Zero-norm inputs are an error.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw DataError("cosine distance undefined for a zero vector");
  return std::max(0.0, 1.0 - dot(a, b) / (na * nb));
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double distance(Metric m, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return m == Metric::cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

}  // namespace intentaug
