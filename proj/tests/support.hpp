#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "intentaug/intentaug.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace intentaug;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("intentaug-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

inline fs::path source_dir() { return INTENTAUG_SOURCE_DIR; }

inline Embedding emb(std::vector<double> v) { return Embedding{std::move(v), "test", false}; }

/// Corpus with `per_class` utterances for each label, ids "<label>-<k>".
inline Corpus make_corpus(const std::vector<std::string>& labels, std::size_t per_class, std::string name = "c") {
  std::vector<LabeledUtterance> us;
  for (const auto& l : labels) {
    for (std::size_t k = 0; k < per_class; ++k) {
      us.push_back({l + "-" + (k < 10 ? "0" : "") + std::to_string(k), l + " text " + std::to_string(k), IntentLabel{l}});
    }
  }
  return Corpus(std::move(name), std::move(us));
}

/// Scripted generator endpoint: answers each prompt through `fn`.
inline std::shared_ptr<Transport> chat_fn_transport(mock::ChatFn fn) { return mock::chat_transport(std::move(fn)); }

inline GeneratorConfig quick_generator_config(int max_retries = 2) {
  GeneratorConfig g;
  g.model_name = "mock";
  g.retry.max_retries = max_retries;
  g.retry.initial_backoff = Millis(1);
  g.retry.max_backoff = Millis(1);
  return g;
}

inline EncoderConfig quick_encoder_config() {
  EncoderConfig e;
  e.model_name = "mock-encoder";
  e.retry.max_retries = 0;
  return e;
}

inline Sleeper no_sleep() {
  return [](Millis) {};
}

// Straight-line reference computations, written independently of the library.

inline double ref_cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  double d = 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
  return d < 0 ? 0 : d;
}

inline double ref_euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double ref_distance(Metric m, const std::vector<double>& a, const std::vector<double>& b) {
  return m == Metric::cosine ? ref_cosine_distance(a, b) : ref_euclidean(a, b);
}

/// Naive silhouette: for each point, loop over all other points.
inline std::vector<double> ref_silhouette(const std::vector<std::vector<double>>& pts,
                                          const std::vector<int>& labels, Metric m) {
  const std::size_t n = pts.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> sum;
    std::map<int, int> cnt;
    for (std::size_t j = 0; j < n; ++j) {
      cnt[labels[j]] += 1;
      if (j == i) continue;
      sum[labels[j]] += ref_distance(m, pts[i], pts[j]);
    }
    double a = cnt[labels[i]] > 1 ? sum[labels[i]] / (cnt[labels[i]] - 1) : 0.0;
    double b = 1e300;
    for (auto& [l, c] : cnt) {
      if (l == labels[i]) continue;
      b = std::min(b, sum[l] / c);
    }
    double mx = a > b ? a : b;
    out[i] = mx == 0 ? 0 : (b - a) / mx;
  }
  return out;
}

}  // namespace testing_support
