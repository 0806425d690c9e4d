#pragma once

// Layout graph adjacencies.
//
// Spatial:    e_ij = w·[d_i ; d_j] + b over normalized box geometry d.
// Similarity: e_ij = φ(v_i)·φ(v_j), φ(v) = Wv / ‖Wv‖.
// Both are turned into adjacencies by a softmax over j ≠ i, diagonal 0.
// The *_backward functions take dL/dA and return parameter (and node)
// gradients.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "pasl/core.hpp"
#include "pasl/layout_builder.hpp"

namespace pasl {

using SpatialFeature = std::array<double, 5>;

class GraphTooSmall : public std::invalid_argument {
 public:
  GraphTooSmall() : std::invalid_argument("graph too small: adjacency needs at least 2 nodes") {}
};

enum class AdjacencyKind { spatial, similarity };

struct AdjacencyMatrix {
  Matrix a;
  AdjacencyKind kind = AdjacencyKind::spatial;
};

/// One fully connected layer from a concatenated pair feature (10) to a logit.
struct EdgeFunctionParams {
  Matrix weight{1, 10};
  Matrix bias{1, 1};
};

/// (h0/2)×h0 projection used before the cosine similarity.
struct SimilarityParams {
  Matrix weight;
};

inline SpatialFeature spatial_feature(const BoundingBox& b, std::uint32_t img_w, std::uint32_t img_h) {
  if (!b.valid_in(img_w, img_h)) throw std::invalid_argument("spatial_feature: box outside image");
  const double w = img_w;
  const double h = img_h;
  return {b.x_min / w, b.y_min / h, b.x_max / w, b.y_max / h, double(b.area()) / (w * h)};
}

/// Spatial features of all graph nodes; the global node, when present, is
/// node 0 with the full-image box.
inline std::vector<SpatialFeature> node_spatial_features(const SceneLayout& layout, bool with_global) {
  std::vector<SpatialFeature> out;
  if (with_global)
    out.push_back(spatial_feature(BoundingBox::full(layout.img_w, layout.img_h), layout.img_w,
                                  layout.img_h));
  for (const auto& r : layout.regions) out.push_back(spatial_feature(r, layout.img_w, layout.img_h));
  return out;
}

namespace detail {

/// Row-wise softmax over off-diagonal logits.
inline Matrix offdiag_softmax(const Matrix& e) {
  const std::size_t n = e.rows;
  if (n < 2) throw GraphTooSmall();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, e(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      a(i, j) = std::exp(e(i, j) - mx);
      sum += a(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= sum;
  }
  return a;
}

/// dL/de from dL/dA for the off-diagonal softmax.
inline Matrix offdiag_softmax_backward(const Matrix& a, const Matrix& da) {
  const std::size_t n = a.rows;
  Matrix de(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += a(i, j) * da(i, j);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) de(i, j) = a(i, j) * (da(i, j) - s);
  }
  return de;
}

}  // namespace detail

inline Matrix spatial_logits(const std::vector<SpatialFeature>& f, const EdgeFunctionParams& p) {
  const std::size_t n = f.size();
  std::vector<double> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 5; ++k) {
      src[i] += p.weight(0, k) * f[i][k];
      dst[i] += p.weight(0, 5 + k) * f[i][k];
    }
  }
  Matrix e(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) e(i, j) = src[i] + dst[j] + p.bias(0, 0);
  return e;
}

inline AdjacencyMatrix spatial_adjacency(const std::vector<SpatialFeature>& f,
                                         const EdgeFunctionParams& p) {
  return {detail::offdiag_softmax(spatial_logits(f, p)), AdjacencyKind::spatial};
}

inline EdgeFunctionParams spatial_adjacency_backward(const std::vector<SpatialFeature>& f,
                                                     const AdjacencyMatrix& a, const Matrix& da) {
  const Matrix de = detail::offdiag_softmax_backward(a.a, da);
  EdgeFunctionParams g;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = de(i, j);
      for (int k = 0; k < 5; ++k) {
        g.weight(0, k) += d * f[i][k];
        g.weight(0, 5 + k) += d * f[j][k];
      }
      g.bias(0, 0) += d;
    }
  }
  return g;
}

/// Intermediates of the similarity adjacency kept for the backward pass.
struct SimilarityForward {
  Matrix projected;           // n × h0/2, rows Wv
  std::vector<double> norms;  // ‖Wv‖ per row
  Matrix phi;                 // rows φ(v), zero where the norm is zero
  Matrix logits;              // cosine similarities
  AdjacencyMatrix adjacency;
};

inline SimilarityForward similarity_forward(const Matrix& v, const SimilarityParams& p) {
  if (v.cols % 2 != 0) throw std::invalid_argument("similarity: node dimension must be even");
  if (p.weight.rows * 2 != v.cols || p.weight.cols != v.cols)
    throw std::invalid_argument("similarity: projection must be (h0/2)×h0");
  if (v.rows < 2) throw GraphTooSmall();
  SimilarityForward s;
  s.projected = matmul_nt(v, p.weight);
  s.phi = s.projected;
  s.norms.resize(v.rows);
  for (std::size_t i = 0; i < v.rows; ++i) {
    auto row = s.phi.row(i);
    s.norms[i] = l2_norm(row);
    if (s.norms[i] > 0.0)
      for (double& x : row) x /= s.norms[i];
  }
  s.logits = matmul_nt(s.phi, s.phi);
  s.adjacency = {detail::offdiag_softmax(s.logits), AdjacencyKind::similarity};
  return s;
}

inline AdjacencyMatrix similarity_adjacency(const Matrix& v, const SimilarityParams& p) {
  return similarity_forward(v, p).adjacency;
}

struct SimilarityGradients {
  SimilarityParams params;
  Matrix nodes;  // dL/dV
};

inline SimilarityGradients similarity_adjacency_backward(const Matrix& v, const SimilarityParams& p,
                                                         const SimilarityForward& s,
                                                         const Matrix& da) {
  const std::size_t n = v.rows;
  Matrix de = detail::offdiag_softmax_backward(s.adjacency.a, da);
  // e = ΦΦᵀ ⇒ dΦ = (dE + dEᵀ)Φ
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = de(i, j) + de(j, i);
  Matrix dphi = matmul(sym, s.phi);
  // φ = u/‖u‖ ⇒ du = (dφ − φ(φ·dφ)) / ‖u‖
  Matrix du(n, s.phi.cols);
  for (std::size_t i = 0; i < n; ++i) {
    if (s.norms[i] <= 0.0) continue;
    const auto phi = s.phi.row(i);
    const auto d = dphi.row(i);
    const double proj = dot(phi, d);
    auto out = du.row(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (d[k] - phi[k] * proj) / s.norms[i];
  }
  SimilarityGradients g;
  g.params.weight = matmul_tn(du, v);  // u = Wv
  g.nodes = matmul(du, p.weight);
  return g;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace pasl
