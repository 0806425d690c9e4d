#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pasl;

namespace {

CandidateSet candidates(std::vector<BoundingBox> boxes, std::uint32_t w = 100, std::uint32_t h = 100) {
  CandidateSet m;
  m.boxes = std::move(boxes);
  m.img_w = w;
  m.img_h = h;
  return m;
}

CandidateSet random_candidates(Rng& rng, std::size_t n, std::uint32_t w, std::uint32_t h) {
  auto l = oracle::random_layout(rng, w, h, n);
  return candidates(l.regions, w, h);
}

SceneLayout layout_of(std::vector<BoundingBox> regions, std::uint32_t w, std::uint32_t h) {
  SceneLayout l;
  l.regions = std::move(regions);
  l.img_w = w;
  l.img_h = h;
  l.n_regions = static_cast<std::uint32_t>(l.regions.size());
  return l;
}

}  // namespace

TEST(Cluster, DuplicatesCollapseToOneCluster) {
  auto m = candidates(std::vector<BoundingBox>(10, BoundingBox{3, 4, 20, 30}));
  for (auto method : {ClusterMethod::kmeans, ClusterMethod::agglomerative}) {
    const auto a = cluster_boxes(m, 4, method, 7);
    EXPECT_EQ(a.k, 1u);
    EXPECT_EQ(a.labels, std::vector<std::uint32_t>(10, 0));
  }
}

TEST(Cluster, TwoSeparatedGroups) {
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 5; ++i) {
    boxes.push_back({0, 0, 10, 10});
    boxes.push_back({80, 80, 95, 99});
  }
  auto m = candidates(boxes);
  for (auto method : {ClusterMethod::kmeans, ClusterMethod::agglomerative}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = cluster_boxes(m, 2, method, seed);
      ASSERT_EQ(a.k, 2u);
      for (std::size_t i = 0; i < boxes.size(); ++i) EXPECT_EQ(a.labels[i] == a.labels[0], i % 2 == 0);
    }
  }
}

TEST(Cluster, KIsBoundedByDistinctBoxes) {
  auto m = candidates({{0, 0, 5, 5}, {0, 0, 5, 5}, {50, 50, 60, 60}});
  EXPECT_EQ(cluster_boxes(m, 8, ClusterMethod::kmeans, 1).k, 2u);
  EXPECT_EQ(cluster_boxes(m, 8, ClusterMethod::agglomerative, 1).k, 2u);
  EXPECT_THROW(cluster_boxes(candidates({}), 4, ClusterMethod::kmeans, 1), std::invalid_argument);
}

TEST(Cluster, KmeansInertiaNonIncreasingAndFixedPoint) {
  Rng rng(99);
  for (int run = 0; run < 200; ++run) {
    const std::size_t n = 10 + rng.below(60);
    auto m = random_candidates(rng, n, 224, 224);
    const std::size_t N = 2 + rng.below(12);
    const auto a = cluster_boxes(m, N, ClusterMethod::kmeans, rng.next());
    for (std::size_t i = 1; i < a.inertia_trace.size(); ++i)
      ASSERT_LE(a.inertia_trace[i], a.inertia_trace[i - 1] * (1 + 1e-12)) << "run " << run;
    // every cluster nonempty
    std::vector<int> count(a.k, 0);
    for (auto l : a.labels) ++count[l];
    for (int c : count) EXPECT_GT(c, 0);
    // each point sits with its nearest cluster mean
    std::vector<BoxPoint> mean(a.k, BoxPoint{0, 0, 0, 0});
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 4; ++d) mean[a.labels[i]][d] += to_point(m.boxes[i])[d] / count[a.labels[i]];
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = to_point(m.boxes[i]);
      double best = INFINITY;
      for (const auto& c : mean) best = std::min(best, squared_distance(p, c));
      EXPECT_LE(squared_distance(p, mean[a.labels[i]]), best + 1e-9);
    }
  }
}

TEST(Cluster, AgglomerativeMatchesNaiveOracle) {
  Rng rng(31337);
  for (int run = 0; run < 150; ++run) {
    const std::size_t n = 2 + rng.below(29);
    auto m = random_candidates(rng, n, 1000, 1000);
    std::vector<std::array<double, 4>> pts;
    for (const auto& b : m.boxes) pts.push_back(to_point(b));
    const std::size_t N = 1 + rng.below(n);
    const auto a = cluster_boxes(m, N, ClusterMethod::agglomerative, 0);
    ASSERT_EQ(a.labels, oracle::naive_average_linkage(pts, a.k)) << "run " << run << " n=" << n;
  }
}

TEST(Cluster, Deterministic) {
  Rng rng(1);
  auto m = random_candidates(rng, 80, 224, 224);
  for (auto method : {ClusterMethod::kmeans, ClusterMethod::agglomerative}) {
    const auto a = cluster_boxes(m, 16, method, 42);
    const auto b = cluster_boxes(m, 16, method, 42);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(aggregate(m, a), aggregate(m, b));
  }
}

TEST(Aggregate, MeanOfMembers) {
  auto m = candidates({{0, 0, 10, 10}, {10, 10, 20, 20}, {40, 41, 50, 52}});
  ClusterAssignment a;
  a.k = 2;
  a.labels = {0, 0, 1};
  const auto l = aggregate(m, a);
  ASSERT_EQ(l.regions.size(), 2u);
  EXPECT_EQ(l.regions[0], (BoundingBox{5, 5, 15, 15}));
  EXPECT_EQ(l.regions[1], (BoundingBox{40, 41, 50, 52}));  // singleton
}

TEST(Aggregate, RoundsHalfAwayFromZero) {
  auto m = candidates({{0, 0, 3, 3}, {1, 1, 4, 4}});
  ClusterAssignment a{{0, 0}, 1, {}, 0};
  EXPECT_EQ(aggregate(m, a).regions[0], (BoundingBox{1, 1, 4, 4}));  // 0.5 → 1, 3.5 → 4
}

TEST(Aggregate, DegenerateSideWidenedTowardInterior) {
  // zero-width inputs can only arrive through an injected candidate set
  auto m = candidates({{5, 0, 5, 4}, {100, 20, 100, 30}}, 100, 100);
  ClusterAssignment a{{0, 1}, 2, {}, 0};
  const auto l = aggregate(m, a);
  EXPECT_EQ(l.regions[0], (BoundingBox{5, 0, 6, 4}));
  EXPECT_EQ(l.regions[1], (BoundingBox{99, 20, 100, 30}));
  for (const auto& r : l.regions) EXPECT_TRUE(r.valid_in(100, 100));
}

TEST(Coverage, Examples) {
  EXPECT_DOUBLE_EQ(coverage_ratio(layout_of({{0, 0, 100, 100}}, 100, 100)), 1.0);
  EXPECT_DOUBLE_EQ(coverage_ratio(layout_of({{0, 0, 10, 10}, {50, 50, 60, 60}}, 100, 100)), 0.02);
  const double one = coverage_ratio(layout_of({{3, 4, 30, 40}}, 100, 100));
  EXPECT_DOUBLE_EQ(coverage_ratio(layout_of({{3, 4, 30, 40}, {3, 4, 30, 40}}, 100, 100)), one);
}

TEST(Coverage, MatchesRasterization) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto w = static_cast<std::uint32_t>(20 + rng.below(200));
    const auto h = static_cast<std::uint32_t>(20 + rng.below(200));
    const auto l = oracle::random_layout(rng, w, h, 1 + rng.below(32));
    ASSERT_NEAR(coverage_ratio(l), oracle::raster_coverage(l), 1e-12);
  }
}

TEST(Layout, FallbackOnEmptyCandidateSet) {
  const auto l = layout_from_candidates(candidates({}, 64, 48), 32, ClusterMethod::kmeans, 7);
  EXPECT_TRUE(l.fallback);
  ASSERT_EQ(l.regions.size(), 1u);
  EXPECT_EQ(l.regions[0], (BoundingBox{0, 0, 64, 48}));
  EXPECT_DOUBLE_EQ(coverage_ratio(l), 1.0);
}

TEST(Layout, UnionContainsDominantBlob) {
  // one strong blob around feature cell (4, 9) on a 14×14 grid
  auto t = oracle::make_tensor(6, 14, 14, 224, 224, std::vector<float>(6 * 196, 0.f));
  for (std::uint32_t c = 0; c < 6; ++c)
    for (int y = 0; y < 14; ++y)
      for (int x = 0; x < 14; ++x)
        t.data[(c * 14 + y) * 14 + x] = float((c < 3 ? 1.0 : 0.2) * std::exp(-((x - 4) * (x - 4) + (y - 9) * (y - 9)) / 2.0));
  const auto l = build_layout(t, 32, ClusterMethod::kmeans, 7);
  EXPECT_FALSE(l.fallback);
  // the blob peak pixel region (cell centre → pixel 72, 152) is covered
  bool covered = false;
  for (const auto& r : l.regions) covered |= r.x_min <= 72 && 72 < r.x_max && r.y_min <= 152 && 152 < r.y_max;
  EXPECT_TRUE(covered);
  for (const auto& r : l.regions) EXPECT_TRUE(r.valid_in(224, 224));
}

TEST(Layout, DeterministicAndInsideImage) {
  SyntheticSpec spec;
  const auto world = make_world(spec);
  for (std::uint32_t i = 0; i < 5; ++i) {
    const auto t = synthesize(spec, world, i, i);
    for (auto method : {ClusterMethod::kmeans, ClusterMethod::agglomerative}) {
      const auto a = build_layout(t, 16, method, 3);
      EXPECT_EQ(a, build_layout(t, 16, method, 3));
      EXPECT_LE(a.regions.size(), 16u);
      for (const auto& r : a.regions) EXPECT_TRUE(r.valid_in(224, 224));
    }
  }
}

TEST(Layout, JsonRoundTrip) {
  Rng rng(2);
  const auto l = oracle::random_layout(rng, 224, 160, 9);
  const auto j = layout_to_json(l);
  EXPECT_DOUBLE_EQ(j.at("coverage_ratio").get<double>(), coverage_ratio(l));
  const auto back = layout_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.regions, l.regions);
  EXPECT_EQ(back.img_w, 224u);
  EXPECT_THROW(layout_from_json(nlohmann::json{{"img_w", 10}}), FormatError);
}
