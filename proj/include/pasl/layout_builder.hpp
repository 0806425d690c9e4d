#pragma once

// Scene layout construction: cluster candidate boxes into N discriminative
// regions, aggregate each cluster by mean pooling, and measure how much of
// the image the layout covers.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/core.hpp"
#include "pasl/region_discovery.hpp"

namespace pasl {

enum class ClusterMethod { kmeans, agglomerative };

inline ClusterMethod parse_cluster_method(const std::string& s) {
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "agglomerative") return ClusterMethod::agglomerative;
  throw std::invalid_argument("unknown clustering method '" + s + "' (kmeans|agglomerative)");
}

inline const char* to_string(ClusterMethod m) {
  return m == ClusterMethod::kmeans ? "kmeans" : "agglomerative";
}

struct ClusterAssignment {
  std::vector<std::uint32_t> labels;
  std::uint32_t k = 0;
  /// k-means only: inertia after each assignment step.
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;
};

struct SceneLayout {
  std::vector<BoundingBox> regions;
  std::uint32_t img_w = 0;
  std::uint32_t img_h = 0;
  std::uint32_t n_regions = 0;
  /// Set when the candidate set was empty and the full image stands in.
  bool fallback = false;

  bool operator==(const SceneLayout&) const = default;
};

using BoxPoint = std::array<double, 4>;

inline BoxPoint to_point(const BoundingBox& b) {
  return {double(b.x_min), double(b.y_min), double(b.x_max), double(b.y_max)};
}

inline double squared_distance(const BoxPoint& a, const BoxPoint& b) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::size_t count_distinct(std::vector<BoundingBox> boxes) {
  std::sort(boxes.begin(), boxes.end());
  return static_cast<std::size_t>(std::unique(boxes.begin(), boxes.end()) - boxes.begin());
}

namespace detail {

inline ClusterAssignment kmeans(const std::vector<BoxPoint>& pts, std::size_t k,
                                std::uint64_t seed, std::size_t max_iter = 100) {
  const std::size_t n = pts.size();
  Rng rng(seed);
  std::vector<BoxPoint> centers;
  centers.reserve(k);
  centers.push_back(pts[rng.below(n)]);

  // k-means++: sample proportional to squared distance to the nearest center
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts[i], centers[0]);
  while (centers.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    const double r = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > r) break;
    }
    if (pick == n) throw std::logic_error("kmeans++: fewer distinct points than clusters");
    centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(pts[i], centers.back()));
  }

  ClusterAssignment out;
  out.k = static_cast<std::uint32_t>(k);
  std::vector<std::uint32_t> labels(n, 0);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::vector<std::uint32_t> next(n);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      double best_d = squared_distance(pts[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(pts[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      next[i] = best;
      inertia += best_d;
    }
    out.inertia_trace.push_back(inertia);
    out.iterations = iter + 1;
    const bool converged = iter > 0 && next == labels;
    labels = std::move(next);
    if (converged) break;

    std::vector<BoxPoint> sums(k, BoxPoint{0, 0, 0, 0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (int d = 0; d < 4; ++d) sums[labels[i]][d] += pts[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // empty cluster: reseed with the point farthest from its center
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double d = squared_distance(pts[i], centers[labels[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const auto from = labels[far];
      --counts[from];
      for (int d = 0; d < 4; ++d) sums[from][d] -= pts[far][d];
      labels[far] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
      sums[c] = pts[far];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (int d = 0; d < 4; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
  }
  out.labels = std::move(labels);
  return out;
}

/// Merge step (slot_a, slot_b, distance); slots are member point indices.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
};

/// Average-linkage merges via the nearest-neighbor chain algorithm over a
/// full Lance-Williams distance matrix. O(n²) time and memory.
inline std::vector<Merge> average_linkage_merges(const std::vector<BoxPoint>& pts) {
  const std::size_t n = pts.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::sqrt(squared_distance(pts[i], pts[j]));
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  merges.reserve(n > 0 ? n - 1 : 0);
  std::vector<std::size_t> chain;
  std::size_t first_active = 0;

  while (merges.size() + 1 < n) {
    if (chain.empty()) {
      while (!active[first_active]) ++first_active;
      chain.push_back(first_active);
    }
    for (;;) {
      const std::size_t a = chain.back();
      std::size_t b = n;
      double best = std::numeric_limits<double>::infinity();
      if (chain.size() >= 2) {
        b = chain[chain.size() - 2];
        best = d(a, b);
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!active[j] || j == a) continue;
        if (d(a, j) < best) {
          best = d(a, j);
          b = j;
        }
      }
      if (chain.size() >= 2 && b == chain[chain.size() - 2]) {
        chain.pop_back();
        chain.pop_back();
        const std::size_t keep = std::min(a, b);
        const std::size_t drop = std::max(a, b);
        merges.push_back({keep, drop, best});
        const double na = double(size[keep]);
        const double nb = double(size[drop]);
        for (std::size_t j = 0; j < n; ++j) {
          if (!active[j] || j == keep || j == drop) continue;
          const double v = (na * d(keep, j) + nb * d(drop, j)) / (na + nb);
          d(keep, j) = d(j, keep) = v;
        }
        size[keep] += size[drop];
        active[drop] = false;
        break;
      }
      chain.push_back(b);
    }
  }
  std::stable_sort(merges.begin(), merges.end(),
                   [](const Merge& x, const Merge& y) { return x.distance < y.distance; });
  return merges;
}

/// Labels in order of first appearance among the points.
inline std::vector<std::uint32_t> canonical_labels(const std::vector<std::size_t>& roots) {
  std::map<std::size_t, std::uint32_t> ids;
  std::vector<std::uint32_t> out(roots.size());
  for (std::size_t i = 0; i < roots.size(); ++i) {
    auto [it, inserted] = ids.emplace(roots[i], static_cast<std::uint32_t>(ids.size()));
    out[i] = it->second;
  }
  return out;
}

inline ClusterAssignment agglomerative(const std::vector<BoxPoint>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  const auto merges = average_linkage_merges(pts);
  UnionFind uf;
  for (std::size_t i = 0; i < n; ++i) uf.make();
  for (std::size_t m = 0; m + k < n; ++m)
    uf.unite(static_cast<std::uint32_t>(merges[m].a), static_cast<std::uint32_t>(merges[m].b));
  std::vector<std::size_t> roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = uf.find(static_cast<std::uint32_t>(i));
  ClusterAssignment out;
  out.labels = canonical_labels(roots);
  out.k = static_cast<std::uint32_t>(k);
  out.iterations = n - k;
  return out;
}

}  // namespace detail

/// Partitions candidate boxes into k = min(N, #distinct boxes) clusters.
inline ClusterAssignment cluster_boxes(const CandidateSet& m, std::size_t n_clusters,
                                       ClusterMethod method, std::uint64_t seed) {
  if (m.boxes.empty()) throw std::invalid_argument("cluster_boxes: empty candidate set");
  if (n_clusters == 0) throw std::invalid_argument("cluster_boxes: N must be positive");
  const std::size_t k = std::min(n_clusters, count_distinct(m.boxes));
  std::vector<BoxPoint> pts;
  pts.reserve(m.boxes.size());
  for (const auto& b : m.boxes) pts.push_back(to_point(b));
  return method == ClusterMethod::kmeans ? detail::kmeans(pts, k, seed)
                                         : detail::agglomerative(pts, k);
}

/// Coordinate-wise mean per cluster, rounded and clamped into the image.
/// A side that collapses to zero width is widened by one pixel toward the
/// interior.
inline SceneLayout aggregate(const CandidateSet& m, const ClusterAssignment& a) {
  if (a.labels.size() != m.boxes.size())
    throw std::invalid_argument("aggregate: assignment size does not match candidate set");
  std::vector<BoxPoint> sums(a.k, BoxPoint{0, 0, 0, 0});
  std::vector<std::size_t> counts(a.k, 0);
  for (std::size_t i = 0; i < m.boxes.size(); ++i) {
    const auto l = a.labels[i];
    if (l >= a.k) throw std::invalid_argument("aggregate: label out of range");
    ++counts[l];
    const auto p = to_point(m.boxes[i]);
    for (int d = 0; d < 4; ++d) sums[l][d] += p[d];
  }
  SceneLayout out;
  out.img_w = m.img_w;
  out.img_h = m.img_h;
  out.n_regions = a.k;
  const auto W = static_cast<std::int64_t>(m.img_w);
  const auto H = static_cast<std::int64_t>(m.img_h);
  auto fix = [](std::int64_t& lo, std::int64_t& hi, std::int64_t limit) {
    lo = std::clamp<std::int64_t>(lo, 0, limit);
    hi = std::clamp<std::int64_t>(hi, 0, limit);
    if (lo >= hi) {
      if (lo < limit) {
        hi = lo + 1;
      } else {
        lo = limit - 1;
        hi = limit;
      }
    }
  };
  for (std::size_t c = 0; c < a.k; ++c) {
    if (counts[c] == 0) throw std::invalid_argument("aggregate: empty cluster");
    std::array<std::int64_t, 4> r{};
    for (int d = 0; d < 4; ++d) r[d] = std::llround(sums[c][d] / static_cast<double>(counts[c]));
    fix(r[0], r[2], W);
    fix(r[1], r[3], H);
    out.regions.push_back({static_cast<std::int32_t>(r[0]), static_cast<std::int32_t>(r[1]),
                           static_cast<std::int32_t>(r[2]), static_cast<std::int32_t>(r[3])});
  }
  return out;
}

/// Union area of the regions over the image area, by coordinate compression.
inline double coverage_ratio(const SceneLayout& layout) {
  if (layout.img_w == 0 || layout.img_h == 0)
    throw std::invalid_argument("coverage_ratio: empty image");
  std::vector<std::int64_t> xs, ys;
  for (const auto& r : layout.regions) {
    xs.insert(xs.end(), {r.x_min, r.x_max});
    ys.insert(ys.end(), {r.y_min, r.y_max});
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  if (xs.size() < 2 || ys.size() < 2) return 0.0;
  const std::size_t nx = xs.size() - 1;
  const std::size_t ny = ys.size() - 1;
  std::vector<std::uint8_t> covered(nx * ny, 0);
  for (const auto& r : layout.regions) {
    const auto x0 = std::lower_bound(xs.begin(), xs.end(), r.x_min) - xs.begin();
    const auto x1 = std::lower_bound(xs.begin(), xs.end(), r.x_max) - xs.begin();
    const auto y0 = std::lower_bound(ys.begin(), ys.end(), r.y_min) - ys.begin();
    const auto y1 = std::lower_bound(ys.begin(), ys.end(), r.y_max) - ys.begin();
    for (auto y = y0; y < y1; ++y)
      for (auto x = x0; x < x1; ++x) covered[y * nx + x] = 1;
  }
  std::int64_t area = 0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      if (covered[y * nx + x]) area += (xs[x + 1] - xs[x]) * (ys[y + 1] - ys[y]);
  return static_cast<double>(area) /
         (static_cast<double>(layout.img_w) * static_cast<double>(layout.img_h));
}

/// Clusters an already discovered candidate set; an empty set yields a single
/// full-image region.
inline SceneLayout layout_from_candidates(const CandidateSet& m, std::size_t n_regions,
                                          ClusterMethod method, std::uint64_t seed) {
  if (m.no_region()) {
    SceneLayout out;
    out.img_w = m.img_w;
    out.img_h = m.img_h;
    out.n_regions = 1;
    out.regions = {BoundingBox::full(m.img_w, m.img_h)};
    out.fallback = true;
    return out;
  }
  return aggregate(m, cluster_boxes(m, n_regions, method, seed));
}

inline SceneLayout build_layout(const ActivationTensor& t, std::size_t n_regions,
                                ClusterMethod method, std::uint64_t seed) {
  return layout_from_candidates(discover_candidates(t), n_regions, method, seed);
}

// ---------------------------------------------------------------------------
// JSON: {img_w, img_h, regions: [[x_min, y_min, x_max, y_max], ...], coverage_ratio}

inline nlohmann::json boxes_to_json(const std::vector<BoundingBox>& boxes) {
  auto arr = nlohmann::json::array();
  for (const auto& b : boxes) arr.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  return arr;
}

inline nlohmann::json layout_to_json(const SceneLayout& l) {
  return {{"img_w", l.img_w},
          {"img_h", l.img_h},
          {"regions", boxes_to_json(l.regions)},
          {"coverage_ratio", coverage_ratio(l)}};
}

inline SceneLayout layout_from_json(const nlohmann::json& j) {
  SceneLayout l;
  try {
    l.img_w = j.at("img_w").get<std::uint32_t>();
    l.img_h = j.at("img_h").get<std::uint32_t>();
    for (const auto& r : j.at("regions")) {
      if (!r.is_array() || r.size() != 4) throw FormatError("layout region must have 4 coordinates");
      BoundingBox b{r[0].get<std::int32_t>(), r[1].get<std::int32_t>(), r[2].get<std::int32_t>(),
                    r[3].get<std::int32_t>()};
      if (!b.valid_in(l.img_w, l.img_h)) throw FormatError("layout region outside the image");
      l.regions.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("layout JSON: ") + e.what());
  }
  if (l.regions.empty()) throw FormatError("layout JSON: no regions");
  l.n_regions = static_cast<std::uint32_t>(l.regions.size());
  return l;
}

}  // namespace pasl
