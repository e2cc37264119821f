#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"

using namespace intentaug;
using namespace testing_support;

namespace {

ClassEmbeddings cls(const std::string& label, std::vector<std::vector<double>> vs) {
  ClassEmbeddings c{IntentLabel{label}, {}, {}};
  for (std::size_t i = 0; i < vs.size(); ++i) {
    c.ids.push_back(label + std::to_string(i));
    c.embeddings.push_back(emb(std::move(vs[i])));
  }
  return c;
}

AmbiguityVerdict verdict(bool ambiguous) {
  AmbiguityVerdict v;
  v.ambiguous = ambiguous;
  return v;
}

// Per-dimension sort, take the middle (average of the two middles for even n).
std::vector<double> sort_median(const std::vector<std::vector<double>>& vs) {
  std::vector<double> out(vs[0].size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::vector<double> col;
    for (const auto& v : vs) col.push_back(v[k]);
    std::sort(col.begin(), col.end());
    const auto n = col.size();
    out[k] = n % 2 ? col[n / 2] : (col[n / 2 - 1] + col[n / 2]) / 2.0;
  }
  return out;
}

}  // namespace

TEST(Centers, SingleEmbeddingIsItsOwnCenter) {
  const std::vector<ClassEmbeddings> in{cls("a", {{0.3, -0.7, 0.1}}), cls("b", {{1, 2, 3}})};
  for (auto kind : {CenterKind::mean, CenterKind::median}) {
    const auto cs = build_centers(in, kind);
    EXPECT_EQ(cs[0].center, in[0].embeddings[0].vector);
    EXPECT_EQ(cs[1].center, in[1].embeddings[0].vector);
    EXPECT_EQ(cs[0].n(), 1u);
  }
}

TEST(Centers, OppositeVectorsAreDegenerateUnderCosine) {
  const std::vector<ClassEmbeddings> in{cls("sym", {{1, 2}, {-1, -2}}), cls("b", {{0, 1}})};
  try {
    build_centers(in, CenterKind::mean, Metric::cosine);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'sym'"), std::string::npos);
  }
  EXPECT_NO_THROW(build_centers(in, CenterKind::mean, Metric::euclidean));
}

TEST(Centers, MedianMatchesSortOracle) {
  const std::vector<std::vector<double>> vs{{0.1, 0.2, 0.3, 0.4}, {0.15, 0.1, 0.35, 0.5}, {9.0, -7.0, 100.0, 0.45}};
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("a", vs), cls("b", {{1, 1, 1, 1}})}, CenterKind::median);
  EXPECT_EQ(cs[0].center, sort_median(vs));
  EXPECT_EQ(cs[0].center, (std::vector<double>{0.15, 0.1, 0.35, 0.45}));

  // Even count and random instances.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 6;
    std::vector<std::vector<double>> r(n, std::vector<double>(5));
    for (auto& v : r)
      for (auto& x : v) x = u(rng);
    const auto c = build_centers(std::vector<ClassEmbeddings>{cls("a", r), cls("b", {{1, 1, 1, 1, 1}})}, CenterKind::median,
                                 Metric::euclidean);
    EXPECT_EQ(c[0].center, sort_median(r));
  }
}

TEST(Centers, MeanIsComponentwise) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("a", {{1, 2}, {3, 6}}), cls("b", {{0, 1}})}, CenterKind::mean);
  EXPECT_NEAR(cs[0].center[0], 2.0, 1e-12);
  EXPECT_NEAR(cs[0].center[1], 4.0, 1e-12);
}

TEST(Centers, Errors) {
  EXPECT_THROW(build_centers(std::vector<ClassEmbeddings>{cls("a", {}), cls("b", {{1}})}, CenterKind::mean), DataError);
  EXPECT_THROW(build_centers(std::vector<ClassEmbeddings>{cls("a", {{1, 0}}), cls("b", {{1, 0, 0}})}, CenterKind::mean),
               DataError);
}

TEST(Classify, ExactMatchIsClean) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("A", {{1, 0}}), cls("B", {{0, 1}})}, CenterKind::mean);
  const auto v = classify("s", emb({1, 0}), IntentLabel{"A"}, cs, Metric::cosine);
  EXPECT_FALSE(v.ambiguous);
  EXPECT_EQ(v.distances[0].second, 0.0);
}

TEST(Classify, TwoDimensionalToy) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("A", {{1, 0}}), cls("B", {{0, 1}})}, CenterKind::mean);
  const auto v = classify("s", emb({0.1, 0.9}), IntentLabel{"A"}, cs, Metric::cosine);
  EXPECT_EQ(v.nearest.name, "B");
  EXPECT_TRUE(v.ambiguous);
  // Hand-computed: |s| = sqrt(0.82); 1 - 0.1/|s| and 1 - 0.9/|s|.
  const double norm = std::sqrt(0.82);
  EXPECT_NEAR(v.distances[0].second, 1.0 - 0.1 / norm, 1e-12);
  EXPECT_NEAR(v.distances[1].second, 1.0 - 0.9 / norm, 1e-12);
  EXPECT_NEAR(v.distances[0].second, 0.8895684739251535, 1e-12);
  EXPECT_NEAR(v.distances[1].second, 0.006116265326380987, 1e-12);
}

TEST(Classify, TiesPreferTargetThenLabelOrder) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("A", {{1, 0}}), cls("B", {{0, 1}}), cls("C", {{-1, 0}})},
                                CenterKind::mean);
  const auto va = classify("s", emb({1, 1}), IntentLabel{"A"}, cs, Metric::cosine);
  EXPECT_EQ(va.nearest.name, "A");
  EXPECT_FALSE(va.ambiguous);
  const auto vb = classify("s", emb({1, 1}), IntentLabel{"B"}, cs, Metric::cosine);
  EXPECT_FALSE(vb.ambiguous);
  // Target C is not among the tied minimum; the earliest tied label wins.
  const auto vc = classify("s", emb({1, 1}), IntentLabel{"C"}, cs, Metric::cosine);
  EXPECT_EQ(vc.nearest.name, "A");
  EXPECT_TRUE(vc.ambiguous);
}

TEST(Classify, Errors) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("A", {{1, 0}}), cls("B", {{0, 1}})}, CenterKind::mean);
  EXPECT_THROW(classify("s", emb({1, 0}), IntentLabel{"Z"}, cs, Metric::cosine), DataError);
  EXPECT_THROW(classify("s", emb({0, 0}), IntentLabel{"A"}, cs, Metric::cosine), DataError);
  EXPECT_THROW(classify("s", emb({1, 0, 0}), IntentLabel{"A"}, cs, Metric::cosine), DataError);
}

TEST(Classify, SelfConsistencyOfIclEmbeddings) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ClassEmbeddings> classes;
    for (int c = 0; c < 6; ++c) {
      std::vector<double> v(8);
      for (auto& x : v) x = g(rng);
      classes.push_back(cls("L" + std::to_string(c), {v}));
    }
    for (auto metric : {Metric::cosine, Metric::euclidean}) {
      const auto cs = build_centers(classes, CenterKind::mean, metric);
      for (const auto& c : classes) EXPECT_FALSE(classify("x", c.embeddings[0], c.label, cs, metric).ambiguous);
    }
  }
}

TEST(Classify, MatchesStraightLineRecomputation) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng() % 9;
    const std::size_t d = 1 + rng() % 16;
    std::vector<ClassEmbeddings> classes;
    std::vector<std::vector<double>> centers;
    for (std::size_t c = 0; c < m; ++c) {
      std::vector<double> v(d);
      for (auto& x : v) x = g(rng);
      centers.push_back(v);
      classes.push_back(cls("L" + std::to_string(c), {v}));
    }
    const auto metric = trial % 2 ? Metric::cosine : Metric::euclidean;
    const auto cs = build_centers(classes, CenterKind::mean, metric);
    for (int s = 0; s < 20; ++s) {
      std::vector<double> x(d);
      for (auto& xi : x) xi = g(rng);
      const std::size_t target = rng() % m;
      const auto v = classify("s", emb(x), classes[target].label, cs, metric);
      double lo = 1e300;
      for (std::size_t c = 0; c < m; ++c) lo = std::min(lo, ref_distance(metric, x, centers[c]));
      std::size_t best = target;
      if (ref_distance(metric, x, centers[target]) > lo + 1e-12) {
        best = 0;
        while (ref_distance(metric, x, centers[best]) > lo + 1e-12) ++best;
      }
      for (std::size_t c = 0; c < m; ++c) EXPECT_NEAR(v.distances[c].second, ref_distance(metric, x, centers[c]), 1e-9);
      EXPECT_EQ(v.nearest, classes[best].label);
      EXPECT_EQ(v.ambiguous, best != target);
    }
  }
}

TEST(AmbiguityRatio, Counting) {
  std::vector<AmbiguityVerdict> vs(10, verdict(false));
  EXPECT_EQ(ambiguity_ratio(vs), 0.0);
  for (int i = 0; i < 3; ++i) vs[i].ambiguous = true;
  EXPECT_DOUBLE_EQ(ambiguity_ratio(vs), 0.3);
  for (auto& v : vs) v.ambiguous = true;
  EXPECT_EQ(ambiguity_ratio(vs), 1.0);
  EXPECT_THROW(ambiguity_ratio(std::vector<AmbiguityVerdict>{}), DataError);
}

TEST(Verdict, LedgerForm) {
  const auto cs = build_centers(std::vector<ClassEmbeddings>{cls("A", {{1, 0}}), cls("B", {{0, 1}})}, CenterKind::mean);
  const auto j = to_json(classify("s1", emb({0, 1}), IntentLabel{"A"}, cs, Metric::cosine), 2);
  EXPECT_EQ(j["type"], "verdict");
  EXPECT_EQ(j["iteration"], 2);
  EXPECT_EQ(j["nearest"], "B");
  EXPECT_EQ(j["ambiguous"], true);
  EXPECT_EQ(j["distances"]["B"], 0.0);
}
