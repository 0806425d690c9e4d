#pragma once

// Candidate region discovery: adaptive threshold over channel maxima, channel
// selection, bilinear upscaling to image resolution, binarization and
// 8-connected component labeling.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include "pasl/act_io.hpp"
#include "pasl/core.hpp"

namespace pasl {

/// Pixel-space rectangle: inclusive min, exclusive max.
struct BoundingBox {
  std::int32_t x_min = 0;
  std::int32_t y_min = 0;
  std::int32_t x_max = 0;
  std::int32_t y_max = 0;

  std::int64_t width() const { return std::int64_t(x_max) - x_min; }
  std::int64_t height() const { return std::int64_t(y_max) - y_min; }
  std::int64_t area() const { return width() * height(); }

  bool valid_in(std::uint32_t img_w, std::uint32_t img_h) const {
    return 0 <= x_min && x_min < x_max && std::int64_t(x_max) <= img_w && 0 <= y_min &&
           y_min < y_max && std::int64_t(y_max) <= img_h;
  }

  bool contains(const BoundingBox& o) const {
    return x_min <= o.x_min && y_min <= o.y_min && o.x_max <= x_max && o.y_max <= y_max;
  }

  static BoundingBox full(std::uint32_t img_w, std::uint32_t img_h) {
    return {0, 0, static_cast<std::int32_t>(img_w), static_cast<std::int32_t>(img_h)};
  }

  auto operator<=>(const BoundingBox&) const = default;
};

/// Ascending by y_min, then x_min, then area; remaining fields break ties.
inline bool box_order(const BoundingBox& a, const BoundingBox& b) {
  return std::make_tuple(a.y_min, a.x_min, a.area(), a.x_max, a.y_max) <
         std::make_tuple(b.y_min, b.x_min, b.area(), b.x_max, b.y_max);
}

struct CandidateSet {
  std::vector<BoundingBox> boxes;
  double threshold = 0.0;
  std::vector<std::uint32_t> kept_channels;
  std::uint32_t img_w = 0;
  std::uint32_t img_h = 0;

  /// No component was found in any kept channel.
  bool no_region() const { return boxes.empty(); }

  bool operator==(const CandidateSet&) const = default;
};

struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double operator()(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

struct BinaryMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMap() = default;
  BinaryMap(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

  std::uint8_t operator()(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::uint8_t& operator()(std::size_t x, std::size_t y) { return bits[y * width + x]; }
};

inline double channel_max(const ActivationTensor& t, std::size_t c) {
  const auto ch = t.channel(c);
  return static_cast<double>(*std::max_element(ch.begin(), ch.end()));
}

/// Mean over channels of the per-channel maximum.
inline double adaptive_threshold(const ActivationTensor& t) {
  if (t.channels == 0) throw std::invalid_argument("adaptive_threshold: tensor has no channels");
  double sum = 0.0;
  for (std::size_t c = 0; c < t.channels; ++c) sum += channel_max(t, c);
  return sum / static_cast<double>(t.channels);
}

/// Channels whose maximum reaches the threshold (ties kept).
inline std::vector<std::uint32_t> select_channels(const ActivationTensor& t, double threshold) {
  std::vector<std::uint32_t> kept;
  for (std::uint32_t c = 0; c < t.channels; ++c)
    if (channel_max(t, c) >= threshold) kept.push_back(c);
  return kept;
}

namespace detail {

// Half-pixel sampling: output index i maps to source coordinate
// (i + 0.5)·src/dst − 0.5, clamped to [0, src−1].
struct AxisSample {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

inline std::vector<AxisSample> axis_samples(std::size_t src, std::size_t dst) {
  std::vector<AxisSample> out(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  const double max_coord = static_cast<double>(src - 1);
  for (std::size_t i = 0; i < dst; ++i) {
    double f = (static_cast<double>(i) + 0.5) * scale - 0.5;
    f = std::clamp(f, 0.0, max_coord);
    const auto lo = static_cast<std::size_t>(std::floor(f));
    out[i].lo = lo;
    out[i].hi = std::min(lo + 1, src - 1);
    out[i].frac = f - static_cast<double>(lo);
  }
  return out;
}

}  // namespace detail

/// Bilinear upscale of one channel to img_h×img_w.
inline Grid upscale_channel(const ActivationTensor& t, std::size_t c) {
  if (c >= t.channels) throw std::out_of_range("upscale_channel: channel out of range");
  const auto xs = detail::axis_samples(t.width, t.img_w);
  const auto ys = detail::axis_samples(t.height, t.img_h);
  const auto ch = t.channel(c);
  Grid g{t.img_w, t.img_h, std::vector<double>(std::size_t(t.img_w) * t.img_h)};
  for (std::size_t y = 0; y < t.img_h; ++y) {
    const auto& sy = ys[y];
    const float* r0 = ch.data() + sy.lo * t.width;
    const float* r1 = ch.data() + sy.hi * t.width;
    double* out = g.values.data() + y * g.width;
    for (std::size_t x = 0; x < t.img_w; ++x) {
      const auto& sx = xs[x];
      const double top = (1.0 - sx.frac) * r0[sx.lo] + sx.frac * r0[sx.hi];
      const double bot = (1.0 - sx.frac) * r1[sx.lo] + sx.frac * r1[sx.hi];
      out[x] = (1.0 - sy.frac) * top + sy.frac * bot;
    }
  }
  return g;
}

inline BinaryMap binarize(const Grid& g, double threshold) {
  BinaryMap b(g.width, g.height);
  for (std::size_t i = 0; i < g.values.size(); ++i) b.bits[i] = g.values[i] >= threshold ? 1 : 0;
  return b;
}

namespace detail {

struct UnionFind {
  std::vector<std::uint32_t> parent;

  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }

  std::uint32_t find(std::uint32_t x) {
    std::uint32_t root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const auto next = parent[x];
      parent[x] = root;
      x = next;
    }
    return root;
  }

  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent[b] = a;
    else
      parent[a] = b;
  }
};

}  // namespace detail

/// Tight boxes of the 8-connected components of 1-pixels, sorted by box_order.
/// Two-pass labeling with a union-find equivalence table.
inline std::vector<BoundingBox> connected_components(const BinaryMap& b) {
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  const std::size_t w = b.width;
  const std::size_t h = b.height;
  std::vector<std::uint32_t> labels(w * h, kNone);
  detail::UnionFind uf;

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!b(x, y)) continue;
      std::uint32_t label = kNone;
      auto visit = [&](std::size_t nx, std::size_t ny) {
        const auto l = labels[ny * w + nx];
        if (l == kNone) return;
        if (label == kNone)
          label = l;
        else
          uf.unite(label, l);
      };
      if (x > 0) visit(x - 1, y);
      if (y > 0) {
        if (x > 0) visit(x - 1, y - 1);
        visit(x, y - 1);
        if (x + 1 < w) visit(x + 1, y - 1);
      }
      labels[y * w + x] = label == kNone ? uf.make() : label;
    }
  }

  std::vector<std::int32_t> slot(uf.parent.size(), -1);
  std::vector<BoundingBox> boxes;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto l = labels[y * w + x];
      if (l == kNone) continue;
      const auto root = uf.find(l);
      const auto xi = static_cast<std::int32_t>(x);
      const auto yi = static_cast<std::int32_t>(y);
      if (slot[root] < 0) {
        slot[root] = static_cast<std::int32_t>(boxes.size());
        boxes.push_back({xi, yi, xi + 1, yi + 1});
      } else {
        auto& bb = boxes[slot[root]];
        bb.x_min = std::min(bb.x_min, xi);
        bb.y_min = std::min(bb.y_min, yi);
        bb.x_max = std::max(bb.x_max, xi + 1);
        bb.y_max = std::max(bb.y_max, yi + 1);
      }
    }
  }
  std::sort(boxes.begin(), boxes.end(), box_order);
  return boxes;
}

/// Candidate set M: components of every kept channel, binarized with the one
/// global threshold, concatenated in channel order. Duplicates are kept.
inline CandidateSet discover_candidates(const ActivationTensor& t) {
  t.validate();
  CandidateSet m;
  m.img_w = t.img_w;
  m.img_h = t.img_h;
  m.threshold = adaptive_threshold(t);
  m.kept_channels = select_channels(t, m.threshold);
  if (m.kept_channels.empty())
    throw std::logic_error("discover_candidates: no channel reaches the mean of channel maxima");
  for (auto c : m.kept_channels) {
    auto comps = connected_components(binarize(upscale_channel(t, c), m.threshold));
    m.boxes.insert(m.boxes.end(), comps.begin(), comps.end());
  }
  return m;
}

}  // namespace pasl
