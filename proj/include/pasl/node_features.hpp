#pragma once

// Initial node states: RoIAlign pooling per layout region, average pooling for
// the global node, then parameter-free LayerNorm followed by ℓ2 normalization.
//
// NDM1 layout (little-endian): "NDM1" | u32 n_nodes | u32 h0 | n_nodes·h0 f32.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pasl/act_io.hpp"
#include "pasl/core.hpp"
#include "pasl/layout_builder.hpp"

namespace pasl {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::size_t kDefaultRoiGrid = 3;

struct NodeMatrix {
  Matrix v;  // n_nodes × h0
  bool has_global = false;
  /// Rows that were exactly constant before normalization.
  std::size_t degenerate_rows = 0;

  std::size_t n_nodes() const { return v.rows; }
  std::size_t dim() const { return v.cols; }
  std::size_t n_local() const { return v.rows - (has_global ? 1 : 0); }
};

namespace detail {

struct BilinearTap {
  std::size_t idx[4];
  double w[4];
};

// Sample at feature coordinate (x, y), clamped to the grid.
inline BilinearTap bilinear_tap(double x, double y, std::size_t width, std::size_t height) {
  x = std::clamp(x, 0.0, double(width - 1));
  y = std::clamp(y, 0.0, double(height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x1 = std::min(x0 + 1, width - 1);
  const auto y1 = std::min(y0 + 1, height - 1);
  const double fx = x - double(x0);
  const double fy = y - double(y0);
  return {{y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1},
          {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx}};
}

}  // namespace detail

/// RoIAlign with a G×G bin grid and 2×2 samples per bin, averaged over all
/// bins into one value per channel.
inline std::vector<double> roi_align(const ActivationTensor& t, const BoundingBox& box,
                                     std::size_t grid = kDefaultRoiGrid) {
  if (grid == 0) throw std::invalid_argument("roi_align: grid must be positive");
  if (!box.valid_in(t.img_w, t.img_h)) throw std::invalid_argument("roi_align: box outside image");
  const double sx = double(t.width) / double(t.img_w);
  const double sy = double(t.height) / double(t.img_h);
  const double x0 = box.x_min * sx - 0.5;
  const double y0 = box.y_min * sy - 0.5;
  const double bin_w = (box.x_max - box.x_min) * sx / double(grid);
  const double bin_h = (box.y_max - box.y_min) * sy / double(grid);

  std::vector<detail::BilinearTap> taps;
  taps.reserve(grid * grid * 4);
  for (std::size_t by = 0; by < grid; ++by)
    for (std::size_t bx = 0; bx < grid; ++bx)
      for (int iy = 0; iy < 2; ++iy)
        for (int ix = 0; ix < 2; ++ix)
          taps.push_back(detail::bilinear_tap(x0 + (double(bx) + (ix + 0.5) / 2.0) * bin_w,
                                              y0 + (double(by) + (iy + 0.5) / 2.0) * bin_h,
                                              t.width, t.height));

  std::vector<double> out(t.channels);
  const double inv = 1.0 / double(taps.size());
  for (std::size_t c = 0; c < t.channels; ++c) {
    const auto ch = t.channel(c);
    double s = 0.0;
    for (const auto& tap : taps)
      for (int k = 0; k < 4; ++k) s += tap.w[k] * ch[tap.idx[k]];
    out[c] = s * inv;
  }
  return out;
}

/// Per-channel mean over the feature grid.
inline std::vector<double> global_vector(const ActivationTensor& t) {
  std::vector<double> out(t.channels);
  for (std::size_t c = 0; c < t.channels; ++c) {
    double s = 0.0;
    for (float v : t.channel(c)) s += v;
    out[c] = s / double(t.plane_size());
  }
  return out;
}

/// LayerNorm (no affine, ε = 1e-5) then ℓ2 per row. Exactly constant rows
/// become zero rows and are counted in degenerate_rows.
inline NodeMatrix normalize(NodeMatrix m) {
  m.degenerate_rows = 0;
  const std::size_t h = m.v.cols;
  for (std::size_t r = 0; r < m.v.rows; ++r) {
    auto row = m.v.row(r);
    for (double x : row)
      if (!std::isfinite(x)) throw std::invalid_argument("normalize: non-finite node value");
    const bool constant = std::all_of(row.begin(), row.end(), [&](double x) { return x == row[0]; });
    if (constant) {
      std::fill(row.begin(), row.end(), 0.0);
      ++m.degenerate_rows;
      continue;
    }
    double mean = 0.0;
    for (double x : row) mean += x;
    mean /= double(h);
    double var = 0.0;
    for (double x : row) var += (x - mean) * (x - mean);
    var /= double(h);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (double& x : row) x = (x - mean) * inv_std;
    const double norm = l2_norm(row);
    if (norm > 0.0)
      for (double& x : row) x /= norm;
  }
  return m;
}

inline NodeMatrix build_nodes(const ActivationTensor& t, const SceneLayout& layout,
                              bool with_global, std::size_t grid = kDefaultRoiGrid) {
  if (layout.regions.empty()) throw std::invalid_argument("build_nodes: layout has no regions");
  if (layout.img_w != t.img_w || layout.img_h != t.img_h)
    throw std::invalid_argument("build_nodes: layout and tensor image sizes differ");
  NodeMatrix m;
  m.has_global = with_global;
  const std::size_t offset = with_global ? 1 : 0;
  m.v = Matrix(layout.regions.size() + offset, t.channels);
  if (with_global) {
    const auto g = global_vector(t);
    std::copy(g.begin(), g.end(), m.v.row(0).begin());
  }
  for (std::size_t i = 0; i < layout.regions.size(); ++i) {
    const auto f = roi_align(t, layout.regions[i], grid);
    std::copy(f.begin(), f.end(), m.v.row(i + offset).begin());
  }
  return normalize(std::move(m));
}

inline std::string encode_node_matrix(const Matrix& v) {
  std::string out("NDM1");
  bytes::put_u32(out, static_cast<std::uint32_t>(v.rows));
  bytes::put_u32(out, static_cast<std::uint32_t>(v.cols));
  for (double x : v.data) {
    if (!std::isfinite(x)) throw std::invalid_argument("NDM1: non-finite value");
    bytes::put_f32(out, static_cast<float>(x));
  }
  return out;
}

inline Matrix decode_node_matrix(std::string_view buf, const std::string& what = "NDM1") {
  if (buf.size() < 4 || buf.substr(0, 4) != "NDM1")
    throw FormatError(what + ": bad magic (expected \"NDM1\")");
  bytes::Reader r(buf, what);
  r.take(4);
  const std::uint32_t n = r.u32();
  const std::uint32_t h = r.u32();
  if (n == 0 || h == 0) throw FormatError(what + ": zero dimension in header");
  const std::uint64_t count = std::uint64_t(n) * h;
  if (r.remaining() != count * 4)
    throw FormatError(what + ": payload is " + std::to_string(r.remaining()) +
                      " bytes, header declares " + std::to_string(count * 4));
  Matrix v(n, h);
  for (auto& x : v.data) {
    const float f = r.f32();
    if (!std::isfinite(f)) throw FormatError(what + ": non-finite value");
    x = f;
  }
  return v;
}

inline void write_node_matrix(const Matrix& v, const std::string& path) {
  bytes::write_file(path, encode_node_matrix(v));
}

inline Matrix read_node_matrix(const std::string& path) {
  return decode_node_matrix(bytes::read_file(path), path);
}

}  // namespace pasl
