#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace pasl;

namespace {

// One channel per maximum; each plane is zero except its maximum at (0,0).
ActivationTensor with_maxima(const std::vector<float>& maxima) {
  const auto c = static_cast<std::uint32_t>(maxima.size());
  auto t = oracle::make_tensor(c, 2, 2, 8, 8, std::vector<float>(c * 4, 0.f));
  for (std::uint32_t i = 0; i < c; ++i) t.data[i * 4] = maxima[i];
  return t;
}

ActivationTensor blob_tensor(Rng& rng, std::uint32_t c, std::uint32_t h, std::uint32_t w) {
  auto t = oracle::make_tensor(c, h, w, w * 8, h * 8, std::vector<float>(std::size_t(c) * h * w));
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    const double bx = rng.uniform(0, w), by = rng.uniform(0, h), amp = rng.uniform(0.2, 1.0);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) {
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        t.data[(ch * h + y) * w + x] = float(amp * std::exp(-d2 / 3.0) + 0.1 * rng.uniform());
      }
  }
  return t;
}

BinaryMap map_from(const std::vector<std::string>& rows) {
  BinaryMap b(rows[0].size(), rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x) b(x, y) = rows[y][x] == '#';
  return b;
}

}  // namespace

TEST(Threshold, MeanOfChannelMaxima) {
  EXPECT_DOUBLE_EQ(adaptive_threshold(with_maxima({4.f, 6.f})), 5.0);
  EXPECT_DOUBLE_EQ(adaptive_threshold(with_maxima({3.f, 3.f, 3.f})), 3.0);
  EXPECT_DOUBLE_EQ(adaptive_threshold(with_maxima({7.25f})), 7.25);
}

TEST(Threshold, BetweenMinAndMaxOfMaxima) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto t = blob_tensor(rng, 1 + rng.below(16), 3, 3);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t c = 0; c < t.channels; ++c) {
      lo = std::min(lo, channel_max(t, c));
      hi = std::max(hi, channel_max(t, c));
    }
    const double T = adaptive_threshold(t);
    EXPECT_LE(T, hi * (1 + 1e-15));
    EXPECT_GE(T, lo * (1 - 1e-15));
  }
}

TEST(SelectChannels, Examples) {
  EXPECT_EQ(select_channels(with_maxima({4.f, 6.f}), 5.0), (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(select_channels(with_maxima({2.f, 2.f, 2.f}), 2.0),
            (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(select_channels(with_maxima({1.f, 5.f, 9.f}), 5.0), (std::vector<std::uint32_t>{1, 2}));
}

TEST(Upscale, HalfPixelExample) {
  // x = (i + 0.5)·2/4 − 0.5 → −0.25, 0.25, 0.75, 1.25 → clamp → 0, 0.25, 0.75, 1
  auto t = oracle::make_tensor(1, 2, 2, 4, 4, {0.f, 1.f, 0.f, 1.f});
  const auto g = upscale_channel(t, 0);
  ASSERT_EQ(g.width, 4u);
  ASSERT_EQ(g.height, 4u);
  for (std::size_t y = 0; y < 4; ++y) {
    EXPECT_DOUBLE_EQ(g(0, y), 0.0);
    EXPECT_DOUBLE_EQ(g(1, y), 0.25);
    EXPECT_DOUBLE_EQ(g(2, y), 0.75);
    EXPECT_DOUBLE_EQ(g(3, y), 1.0);
  }
}

TEST(Upscale, ConstantAndSingleCell) {
  auto t = oracle::make_tensor(1, 3, 5, 17, 9, std::vector<float>(15, 0.375f));
  for (double v : upscale_channel(t, 0).values) EXPECT_DOUBLE_EQ(v, 0.375);
  auto one = oracle::make_tensor(1, 1, 1, 6, 4, {-2.5f});
  const auto g = upscale_channel(one, 0);
  EXPECT_EQ(g.values.size(), 24u);
  for (double v : g.values) EXPECT_DOUBLE_EQ(v, -2.5);
}

TEST(Binarize, BoundaryConvention) {
  Grid g{3, 1, {0.5, 1.0, 1.5}};
  EXPECT_EQ(binarize(g, 2.0).bits, (std::vector<std::uint8_t>{0, 0, 0}));
  EXPECT_EQ(binarize(g, 0.5).bits, (std::vector<std::uint8_t>{1, 1, 1}));
  EXPECT_EQ(binarize(g, 1.0).bits, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Components, TwoCornerBlocks) {
  const auto b = map_from({"##...", "##...", ".....", "...##", "...##"});
  const auto boxes = connected_components(b);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0], (BoundingBox{0, 0, 2, 2}));
  EXPECT_EQ(boxes[1], (BoundingBox{3, 3, 5, 5}));
  EXPECT_EQ(boxes, oracle::flood_fill_boxes(b));
}

TEST(Components, SinglePixelAndDiagonal) {
  BinaryMap b(5, 5);
  b(3, 2) = 1;  // row 2, column 3
  EXPECT_EQ(connected_components(b), (std::vector<BoundingBox>{{3, 2, 4, 3}}));
  const auto d = map_from({"#.", ".#"});
  EXPECT_EQ(connected_components(d), (std::vector<BoundingBox>{{0, 0, 2, 2}}));
  EXPECT_TRUE(connected_components(BinaryMap(4, 4)).empty());
}

TEST(Components, UShapeMergesLabels) {
  // the two arms only meet on the last row; a second pass must merge them
  const auto b = map_from({"#...#", "#...#", "#####", ".....", "..#.."});
  EXPECT_EQ(connected_components(b), oracle::flood_fill_boxes(b));
  EXPECT_EQ(connected_components(b).size(), 2u);
}

TEST(Components, MatchesFloodFillOnRandomMaps) {
  Rng rng(2024);
  for (int i = 0; i < 500; ++i) {
    const auto b = oracle::random_map(rng, 32, 32, rng.uniform(0.05, 0.7));
    ASSERT_EQ(connected_components(b), oracle::flood_fill_boxes(b)) << "map " << i;
  }
}

TEST(Components, BoxesAreTight) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto b = oracle::random_map(rng, 24, 20, 0.2);
    for (const auto& box : connected_components(b)) {
      auto any_in_row = [&](int y) {
        for (int x = box.x_min; x < box.x_max; ++x)
          if (b(x, y)) return true;
        return false;
      };
      auto any_in_col = [&](int x) {
        for (int y = box.y_min; y < box.y_max; ++y)
          if (b(x, y)) return true;
        return false;
      };
      EXPECT_TRUE(any_in_row(box.y_min) && any_in_row(box.y_max - 1));
      EXPECT_TRUE(any_in_col(box.x_min) && any_in_col(box.x_max - 1));
    }
  }
}

TEST(Discover, OneBlobPerKeptChannel) {
  // 4 flat 2×2 bumps far apart plus an all-zero channel: T = 0.8, the four
  // bump channels are kept and each yields one box. (A single-cell bump would
  // peak at 0.875² after upscaling and stay below T.)
  auto t = oracle::make_tensor(5, 8, 8, 32, 32, std::vector<float>(5 * 64, 0.f));
  const int cells[4][2] = {{1, 1}, {5, 1}, {1, 5}, {5, 5}};
  for (int c = 0; c < 4; ++c)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) t.data[c * 64 + (cells[c][1] + dy) * 8 + cells[c][0] + dx] = 1.f;
  const auto m = discover_candidates(t);
  EXPECT_DOUBLE_EQ(m.threshold, 0.8);
  EXPECT_EQ(m.kept_channels, (std::vector<std::uint32_t>{0, 1, 2, 3}));
  EXPECT_EQ(m.boxes.size(), 4u);
  for (const auto& b : m.boxes) EXPECT_TRUE(b.valid_in(32, 32));
}

TEST(Discover, SingleDominantChannel) {
  auto t = oracle::make_tensor(3, 4, 4, 16, 16, std::vector<float>(48, 0.5f));
  t.data[5] = 10.f;  // channel 0, cell (1,1)
  const auto m = discover_candidates(t);
  EXPECT_DOUBLE_EQ(m.threshold, (10.0 + 0.5 + 0.5) / 3.0);
  EXPECT_EQ(m.kept_channels, (std::vector<std::uint32_t>{0}));
  ASSERT_EQ(m.boxes.size(), 1u);
  EXPECT_FALSE(m.no_region());
}

TEST(Discover, DuplicatesKept) {
  auto t = oracle::make_tensor(3, 3, 3, 9, 9, std::vector<float>(27, 0.f));
  t.data[4] = 1.f;
  t.data[13] = 1.f;
  const auto m = discover_candidates(t);
  ASSERT_EQ(m.boxes.size(), 2u);
  EXPECT_EQ(m.boxes[0], m.boxes[1]);
}

TEST(Discover, ScaleInvariance) {
  Rng rng(77);
  for (int i = 0; i < 30; ++i) {
    auto t = blob_tensor(rng, 12, 7, 7);
    const auto base = discover_candidates(t);
    for (float k : {0.25f, 2.f, 1024.f, 3.f, 0.1f}) {
      auto s = t;
      for (auto& x : s.data) x *= k;
      const auto m = discover_candidates(s);
      EXPECT_EQ(m.kept_channels, base.kept_channels) << "k=" << k;
      EXPECT_EQ(m.boxes, base.boxes) << "k=" << k;
      EXPECT_NEAR(m.threshold, k * base.threshold, 1e-6 * k * base.threshold);
    }
  }
}

TEST(Discover, VggLikeTensorHasHundredsOfCandidates) {
  SyntheticSpec spec;
  spec.channels = 512;
  const auto world = make_world(spec);
  for (std::uint32_t i = 0; i < 3; ++i) {
    const auto m = discover_candidates(synthesize(spec, world, i, i));
    EXPECT_GE(m.boxes.size(), 100u);
    EXPECT_LT(m.boxes.size(), 1000u);
  }
}
