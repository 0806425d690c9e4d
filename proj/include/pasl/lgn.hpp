#pragma once

// Layout Graph Network: one graph-convolution layer per subgraph, subgraph
// combination, image and node classifier heads, joint loss, exact reverse-mode
// gradients, Adam with global-norm clipping, and LGN1 checkpoints.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/core.hpp"
#include "pasl/layout_graph.hpp"
#include "pasl/node_features.hpp"

namespace pasl {

enum class Combine { add, max, product };

inline Combine parse_combine(const std::string& s) {
  if (s == "add") return Combine::add;
  if (s == "max") return Combine::max;
  if (s == "product") return Combine::product;
  throw std::invalid_argument("unknown combine mode '" + s + "' (add|max|product)");
}

inline const char* to_string(Combine c) {
  switch (c) {
    case Combine::add: return "add";
    case Combine::max: return "max";
    case Combine::product: return "product";
  }
  return "?";
}

struct LgnConfig {
  std::size_t input_dim = 0;  // h0
  std::size_t hidden = 0;     // h1
  std::size_t num_classes = 0;
  double lambda = 1.0;
  Combine combine = Combine::product;
  bool with_global = true;
  bool use_spatial = true;
  bool use_similarity = true;
  double dropout = 0.2;

  void validate() const {
    if (input_dim == 0 || hidden == 0 || num_classes == 0)
      throw std::invalid_argument("LgnConfig: dimensions must be positive");
    if (input_dim % 2 != 0) throw std::invalid_argument("LgnConfig: input dimension h0 must be even");
    if (!(lambda >= 0.0)) throw std::invalid_argument("LgnConfig: lambda must be >= 0");
    if (!use_spatial && !use_similarity)
      throw std::invalid_argument("LgnConfig: at least one subgraph must be enabled");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("LgnConfig: dropout in [0,1)");
  }
};

/// All trainable tensors, in declaration (and checkpoint) order.
struct LgnParams {
  EdgeFunctionParams edge;
  SimilarityParams similarity;
  Matrix gc_spatial;     // h0 × h1
  Matrix gc_similarity;  // h0 × h1
  Matrix image_w;        // h1 × K
  Matrix image_b;        // 1 × K
  Matrix node_w;         // h1 × K
  Matrix node_b;         // 1 × K

  static LgnParams zeros(const LgnConfig& c) {
    LgnParams p;
    p.edge.weight = Matrix(1, 10);
    p.edge.bias = Matrix(1, 1);
    p.similarity.weight = Matrix(c.input_dim / 2, c.input_dim);
    p.gc_spatial = Matrix(c.input_dim, c.hidden);
    p.gc_similarity = Matrix(c.input_dim, c.hidden);
    p.image_w = Matrix(c.hidden, c.num_classes);
    p.image_b = Matrix(1, c.num_classes);
    p.node_w = Matrix(c.hidden, c.num_classes);
    p.node_b = Matrix(1, c.num_classes);
    return p;
  }

  struct Entry {
    const char* name;
    Matrix* tensor;
    bool is_bias;
  };

  std::vector<Entry> entries() {
    return {{"edge.weight", &edge.weight, false},
            {"edge.bias", &edge.bias, true},
            {"similarity.weight", &similarity.weight, false},
            {"gc_spatial.weight", &gc_spatial, false},
            {"gc_similarity.weight", &gc_similarity, false},
            {"image_head.weight", &image_w, false},
            {"image_head.bias", &image_b, true},
            {"node_head.weight", &node_w, false},
            {"node_head.bias", &node_b, true}};
  }

  std::vector<const Matrix*> tensors() const {
    auto& self = const_cast<LgnParams&>(*this);
    std::vector<const Matrix*> out;
    for (auto& e : self.entries()) out.push_back(e.tensor);
    return out;
  }

  void add_scaled(const LgnParams& o, double s) {
    auto mine = entries();
    const auto theirs = o.tensors();
    for (std::size_t i = 0; i < mine.size(); ++i) {
      auto& dst = mine[i].tensor->data;
      const auto& src = theirs[i]->data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += s * src[k];
    }
  }

  bool operator==(const LgnParams& o) const {
    const auto a = tensors();
    const auto b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(*a[i] == *b[i])) return false;
    return true;
  }
};

/// Adam moments and step count.
struct AdamState {
  LgnParams m;
  LgnParams v;
  std::uint64_t step = 0;
};

struct LgnModel {
  LgnConfig config;
  LgnParams params;
  AdamState adam;
};

/// Xavier-uniform weights (bound √(6/(fan_in+fan_out))), zero biases.
inline LgnModel init_model(const LgnConfig& config, std::uint64_t seed) {
  config.validate();
  LgnModel m;
  m.config = config;
  m.params = LgnParams::zeros(config);
  m.adam = {LgnParams::zeros(config), LgnParams::zeros(config), 0};
  Rng rng(seed);
  auto xavier = [&](Matrix& w, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (auto& x : w.data) x = rng.uniform(-bound, bound);
  };
  xavier(m.params.edge.weight, 10, 1);
  xavier(m.params.similarity.weight, config.input_dim, config.input_dim / 2);
  xavier(m.params.gc_spatial, config.input_dim, config.hidden);
  xavier(m.params.gc_similarity, config.input_dim, config.hidden);
  xavier(m.params.image_w, config.hidden, config.num_classes);
  xavier(m.params.node_w, config.hidden, config.num_classes);
  return m;
}

/// One image as the network sees it.
struct GraphSample {
  Matrix nodes;  // normalized node states, global node first when present
  std::vector<SpatialFeature> spatial;
  bool has_global = false;
  std::uint32_t label = 0;

  std::size_t n_local() const { return nodes.rows - (has_global ? 1 : 0); }
};

// ---------------------------------------------------------------------------
// Graph convolution

/// Z = Λ⁻¹(A + I) with Λ_ii = Σ_j (A + I)_ij.
inline Matrix propagation_matrix(const Matrix& a) {
  const std::size_t n = a.rows;
  Matrix z = a;
  for (std::size_t i = 0; i < n; ++i) {
    z(i, i) += 1.0;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += z(i, j);
    for (std::size_t j = 0; j < n; ++j) z(i, j) /= s;
  }
  return z;
}

/// V¹ = ReLU(Z V⁰ Ω).
inline Matrix graph_convolve(const Matrix& v0, const Matrix& a, const Matrix& omega) {
  if (a.rows != a.cols || a.rows != v0.rows || v0.cols != omega.rows)
    throw std::invalid_argument("graph_convolve: dimension mismatch");
  Matrix out = matmul(matmul(propagation_matrix(a), v0), omega);
  for (auto& x : out.data) x = std::max(x, 0.0);
  return out;
}

inline Matrix combine(const Matrix& sim, const Matrix& sp, Combine mode) {
  if (sim.rows != sp.rows || sim.cols != sp.cols)
    throw std::invalid_argument("combine: shape mismatch");
  Matrix out(sim.rows, sim.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double a = sim.data[i];
    const double b = sp.data[i];
    switch (mode) {
      case Combine::add: out.data[i] = a + b; break;
      case Combine::max: out.data[i] = std::max(a, b); break;
      case Combine::product: out.data[i] = a * b; break;
    }
  }
  return out;
}

/// Row-wise ℓ2 normalization; zero rows stay zero.
inline Matrix normalize_rows(const Matrix& h, std::vector<double>* norms = nullptr) {
  Matrix r = h;
  if (norms) norms->assign(h.rows, 0.0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    auto row = r.row(i);
    const double n = l2_norm(row);
    if (norms) (*norms)[i] = n;
    if (n > 0.0)
      for (double& x : row) x /= n;
  }
  return r;
}

/// Global node row when present, otherwise the mean of all rows.
inline std::vector<double> image_representation(const Matrix& normalized, bool with_global) {
  std::vector<double> out(normalized.cols, 0.0);
  if (with_global) {
    const auto r = normalized.row(0);
    std::copy(r.begin(), r.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < normalized.rows; ++i)
    for (std::size_t k = 0; k < normalized.cols; ++k) out[k] += normalized(i, k);
  for (double& x : out) x /= double(normalized.rows);
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct BranchCache {
  Matrix adjacency;
  Matrix propagated;  // Z V⁰
  Matrix pre;         // Z V⁰ Ω
  Matrix out;         // ReLU(pre)
  SimilarityForward similarity;
};

struct GraphCache {
  bool use_spatial = false;
  bool use_similarity = false;
  BranchCache spatial;
  BranchCache similarity;
  Matrix combined;
  std::vector<double> row_norms;
  Matrix normalized;
  std::vector<double> dropout_mask;  // empty when not training
  std::vector<double> representation;
  std::vector<double> image_logits;
  std::vector<double> image_probs;
  Matrix node_probs;  // n_local × K
  double image_loss = 0.0;
  double node_loss = 0.0;
  double loss = 0.0;
};

namespace detail {

inline void softmax_inplace(std::span<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : x) v /= s;
}

/// −log softmax(logits)[label]
inline double cross_entropy(std::span<const double> logits, std::uint32_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  return std::log(s) + mx - logits[label];
}

inline BranchCache branch_forward(const Matrix& a, const Matrix& v0, const Matrix& omega) {
  BranchCache b;
  b.adjacency = a;
  const Matrix z = propagation_matrix(a);
  b.propagated = matmul(z, v0);
  b.pre = matmul(b.propagated, omega);
  b.out = b.pre;
  for (auto& x : b.out.data) x = std::max(x, 0.0);
  return b;
}

/// Returns dL/dA given dL/d(out); accumulates dL/dΩ.
inline Matrix branch_backward(const BranchCache& b, const Matrix& v0, const Matrix& omega,
                              const Matrix& dout, Matrix& domega) {
  Matrix dpre = dout;
  for (std::size_t i = 0; i < dpre.data.size(); ++i)
    if (b.pre.data[i] <= 0.0) dpre.data[i] = 0.0;
  const Matrix dw = matmul_tn(b.propagated, dpre);
  for (std::size_t i = 0; i < dw.data.size(); ++i) domega.data[i] += dw.data[i];
  const Matrix dprop = matmul_nt(dpre, omega);  // d(Z V⁰)
  const Matrix dz = matmul_nt(dprop, v0);
  // Z_ij = Ã_ij / s_i, s_i = Σ_k Ã_ik
  const std::size_t n = b.adjacency.rows;
  Matrix da(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (std::size_t j = 0; j < n; ++j) s += b.adjacency(i, j);
    double coupled = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double at = b.adjacency(i, j) + (i == j ? 1.0 : 0.0);
      coupled += dz(i, j) * at;
    }
    for (std::size_t j = 0; j < n; ++j) da(i, j) = dz(i, j) / s - coupled / (s * s);
  }
  return da;
}

}  // namespace detail

inline void check_sample(const LgnConfig& c, const GraphSample& g) {
  if (g.nodes.cols != c.input_dim)
    throw std::invalid_argument("sample node dimension " + std::to_string(g.nodes.cols) +
                                " != model h0 " + std::to_string(c.input_dim));
  if (g.spatial.size() != g.nodes.rows)
    throw std::invalid_argument("sample spatial features do not match node count");
  if (g.has_global != c.with_global)
    throw std::invalid_argument("sample global-node flag does not match the model");
  if (g.n_local() == 0) throw std::invalid_argument("sample has no local nodes");
  if (g.label >= c.num_classes)
    throw std::invalid_argument("label " + std::to_string(g.label) + " out of range");
}

/// Forward pass for one graph. When `dropout_rng` is given, inverted dropout
/// is applied to the image representation.
inline GraphCache forward_graph(const LgnModel& model, const GraphSample& g, Rng* dropout_rng) {
  const auto& c = model.config;
  const auto& p = model.params;
  check_sample(c, g);
  const std::size_t n = g.nodes.rows;
  GraphCache k;
  k.use_spatial = c.use_spatial;
  k.use_similarity = c.use_similarity;

  // A lone node has no neighbours: A = 0 so Z = I.
  if (c.use_spatial) {
    const Matrix a = n >= 2 ? spatial_adjacency(g.spatial, p.edge).a : Matrix(1, 1);
    k.spatial = detail::branch_forward(a, g.nodes, p.gc_spatial);
  }
  if (c.use_similarity) {
    SimilarityForward sf;
    if (n >= 2) sf = similarity_forward(g.nodes, p.similarity);
    k.similarity = detail::branch_forward(n >= 2 ? sf.adjacency.a : Matrix(1, 1), g.nodes,
                                          p.gc_similarity);
    k.similarity.similarity = std::move(sf);
  }
  if (c.use_spatial && c.use_similarity)
    k.combined = combine(k.similarity.out, k.spatial.out, c.combine);
  else
    k.combined = c.use_spatial ? k.spatial.out : k.similarity.out;

  k.normalized = normalize_rows(k.combined, &k.row_norms);
  k.representation = image_representation(k.normalized, g.has_global);

  std::vector<double> rep = k.representation;
  if (dropout_rng && c.dropout > 0.0) {
    k.dropout_mask.resize(rep.size());
    const double keep = 1.0 - c.dropout;
    for (std::size_t i = 0; i < rep.size(); ++i) {
      k.dropout_mask[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      rep[i] *= k.dropout_mask[i];
    }
  }

  const std::size_t K = c.num_classes;
  k.image_logits.assign(K, 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    double s = p.image_b(0, j);
    for (std::size_t h = 0; h < rep.size(); ++h) s += rep[h] * p.image_w(h, j);
    k.image_logits[j] = s;
  }
  k.image_loss = detail::cross_entropy(k.image_logits, g.label);
  k.image_probs = k.image_logits;
  detail::softmax_inplace(k.image_probs);

  const std::size_t first = g.has_global ? 1 : 0;
  const std::size_t n_local = n - first;
  k.node_probs = Matrix(n_local, K);
  double node_loss = 0.0;
  for (std::size_t i = 0; i < n_local; ++i) {
    auto logits = k.node_probs.row(i);
    const auto r = k.normalized.row(first + i);
    for (std::size_t j = 0; j < K; ++j) {
      double s = p.node_b(0, j);
      for (std::size_t h = 0; h < r.size(); ++h) s += r[h] * p.node_w(h, j);
      logits[j] = s;
    }
    node_loss += detail::cross_entropy(logits, g.label);
    detail::softmax_inplace(logits);
  }
  k.node_loss = node_loss / double(n_local);
  k.loss = k.image_loss + c.lambda * k.node_loss;
  if (!std::isfinite(k.loss))
    throw std::runtime_error("non-finite loss (image " + std::to_string(k.image_loss) + ", node " +
                             std::to_string(k.node_loss) + ")");
  return k;
}

/// Accumulates scale·dL/dθ for one graph into `grad`.
inline void backward_graph(const LgnModel& model, const GraphSample& g, const GraphCache& k,
                           double scale, LgnParams& grad) {
  const auto& c = model.config;
  const auto& p = model.params;
  const std::size_t n = g.nodes.rows;
  const std::size_t K = c.num_classes;
  const std::size_t h1 = c.hidden;

  // image head
  std::vector<double> dlogits(K);
  for (std::size_t j = 0; j < K; ++j)
    dlogits[j] = scale * (k.image_probs[j] - (j == g.label ? 1.0 : 0.0));
  std::vector<double> drep(h1, 0.0);
  for (std::size_t h = 0; h < h1; ++h) {
    const double r = k.representation[h] * (k.dropout_mask.empty() ? 1.0 : k.dropout_mask[h]);
    double acc = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      grad.image_w(h, j) += r * dlogits[j];
      acc += p.image_w(h, j) * dlogits[j];
    }
    drep[h] = k.dropout_mask.empty() ? acc : acc * k.dropout_mask[h];
  }
  for (std::size_t j = 0; j < K; ++j) grad.image_b(0, j) += dlogits[j];

  Matrix dnorm(n, h1);
  if (g.has_global) {
    for (std::size_t h = 0; h < h1; ++h) dnorm(0, h) += drep[h];
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < h1; ++h) dnorm(i, h) += drep[h] / double(n);
  }

  // node head
  const std::size_t first = g.has_global ? 1 : 0;
  const std::size_t n_local = n - first;
  if (c.lambda != 0.0) {
    const double s = scale * c.lambda / double(n_local);
    for (std::size_t i = 0; i < n_local; ++i) {
      const auto r = k.normalized.row(first + i);
      for (std::size_t j = 0; j < K; ++j) {
        const double d = s * (k.node_probs(i, j) - (j == g.label ? 1.0 : 0.0));
        if (d == 0.0) continue;
        grad.node_b(0, j) += d;
        for (std::size_t h = 0; h < h1; ++h) {
          grad.node_w(h, j) += r[h] * d;
          dnorm(first + i, h) += p.node_w(h, j) * d;
        }
      }
    }
  }

  // row ℓ2 normalization
  Matrix dcomb(n, h1);
  for (std::size_t i = 0; i < n; ++i) {
    if (k.row_norms[i] <= 0.0) continue;
    const auto r = k.normalized.row(i);
    const auto d = dnorm.row(i);
    const double proj = dot(r, d);
    for (std::size_t h = 0; h < h1; ++h) dcomb(i, h) = (d[h] - r[h] * proj) / k.row_norms[i];
  }

  Matrix dsp, dsim;
  if (c.use_spatial && c.use_similarity) {
    dsp = Matrix(n, h1);
    dsim = Matrix(n, h1);
    for (std::size_t i = 0; i < dcomb.data.size(); ++i) {
      const double a = k.similarity.out.data[i];
      const double b = k.spatial.out.data[i];
      const double d = dcomb.data[i];
      switch (c.combine) {
        case Combine::add:
          dsim.data[i] = d;
          dsp.data[i] = d;
          break;
        case Combine::max:
          (a >= b ? dsim.data[i] : dsp.data[i]) = d;
          break;
        case Combine::product:
          dsim.data[i] = d * b;
          dsp.data[i] = d * a;
          break;
      }
    }
  } else if (c.use_spatial) {
    dsp = std::move(dcomb);
  } else {
    dsim = std::move(dcomb);
  }

  if (c.use_spatial) {
    const Matrix da = detail::branch_backward(k.spatial, g.nodes, p.gc_spatial, dsp, grad.gc_spatial);
    if (n >= 2) {
      const auto ge = spatial_adjacency_backward(g.spatial, {k.spatial.adjacency, AdjacencyKind::spatial}, da);
      for (std::size_t i = 0; i < 10; ++i) grad.edge.weight.data[i] += ge.weight.data[i];
      grad.edge.bias(0, 0) += ge.bias(0, 0);
    }
  }
  if (c.use_similarity) {
    const Matrix da =
        detail::branch_backward(k.similarity, g.nodes, p.gc_similarity, dsim, grad.gc_similarity);
    if (n >= 2) {
      const auto gs = similarity_adjacency_backward(g.nodes, p.similarity, k.similarity.similarity, da);
      for (std::size_t i = 0; i < gs.params.weight.data.size(); ++i)
        grad.similarity.weight.data[i] += gs.params.weight.data[i];
    }
  }
}

struct BatchResult {
  double loss = 0.0;
  double image_loss = 0.0;
  double node_loss = 0.0;
  LgnParams grad;
  std::vector<std::vector<double>> image_logits;
};

/// Mean loss over the batch and its gradient. Per-image work is spread over
/// `threads` and reduced in sample order. `dropout_seed` enables dropout;
/// image i draws its mask from mix_seed(*dropout_seed, i).
inline BatchResult forward_backward(const LgnModel& model, std::span<const GraphSample* const> batch,
                                    std::optional<std::uint64_t> dropout_seed,
                                    std::size_t threads = 1, bool want_grad = true) {
  if (batch.empty()) throw std::invalid_argument("forward_backward: empty batch");
  const double scale = 1.0 / double(batch.size());
  std::vector<GraphCache> caches(batch.size());
  std::vector<LgnParams> grads(want_grad ? batch.size() : 0);
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(mix_seed(*dropout_seed, i));
    caches[i] = forward_graph(model, *batch[i], rng ? &*rng : nullptr);
    if (want_grad) {
      grads[i] = LgnParams::zeros(model.config);
      backward_graph(model, *batch[i], caches[i], scale, grads[i]);
    }
  });
  BatchResult out;
  if (want_grad) out.grad = LgnParams::zeros(model.config);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += caches[i].loss * scale;
    out.image_loss += caches[i].image_loss * scale;
    out.node_loss += caches[i].node_loss * scale;
    out.image_logits.push_back(std::move(caches[i].image_logits));
    if (want_grad) out.grad.add_scaled(grads[i], 1.0);
  }
  return out;
}

inline std::vector<double> predict_logits(const LgnModel& model, const GraphSample& g) {
  return forward_graph(model, g, nullptr).image_logits;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  double clip_norm = 0.25;
};

inline double global_norm(const LgnParams& g) {
  double s = 0.0;
  for (const Matrix* t : g.tensors())
    for (double x : t->data) s += x * x;
  return std::sqrt(s);
}

/// Scales g so that its global ℓ2 norm is at most max_norm; returns the norm
/// before clipping.
inline double clip_gradients(LgnParams& g, double max_norm) {
  const double norm = global_norm(g);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& e : g.entries())
      for (double& x : e.tensor->data) x *= s;
  }
  return norm;
}

/// Clip, add weight decay to weight matrices (not biases), then one Adam step.
inline double optimizer_step(LgnModel& model, LgnParams grad, double lr,
                             const OptimizerConfig& opt = {}) {
  const double norm = clip_gradients(grad, opt.clip_norm);
  ++model.adam.step;
  const double t = double(model.adam.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  auto params = model.params.entries();
  auto grads = grad.entries();
  auto ms = model.adam.m.entries();
  auto vs = model.adam.v.entries();
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& theta = params[e].tensor->data;
    const auto& gr = grads[e].tensor->data;
    auto& m = ms[e].tensor->data;
    auto& v = vs[e].tensor->data;
    const double wd = params[e].is_bias ? 0.0 : opt.weight_decay;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = gr[i] + wd * theta[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
  return norm;
}

/// Step-decay schedule: base · factor^(number of milestones ≤ epoch), epochs
/// counted from 0.
struct LrSchedule {
  double base = 1e-3;
  double factor = 0.1;
  std::vector<std::size_t> milestones{10, 15, 18};

  double at(std::size_t epoch) const {
    double lr = base;
    for (auto m : milestones)
      if (epoch >= m) lr *= factor;
    return lr;
  }

  void validate() const {
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw std::invalid_argument("lr schedule milestones must be strictly increasing");
  }
};

// ---------------------------------------------------------------------------
// LGN1 checkpoints:
//   "LGN1" | u64 header length | JSON header | tensors
// Each tensor: u32 name length | name | u32 rows | u32 cols | rows·cols f64.
// Parameters come first in declaration order, then Adam first and second
// moments named "<param>.adam_m" / "<param>.adam_v".

inline nlohmann::json config_to_json(const LgnConfig& c) {
  return {{"input_dim", c.input_dim},   {"hidden", c.hidden},
          {"num_classes", c.num_classes}, {"lambda", c.lambda},
          {"combine", to_string(c.combine)}, {"with_global", c.with_global},
          {"use_spatial", c.use_spatial}, {"use_similarity", c.use_similarity},
          {"dropout", c.dropout}};
}

inline LgnConfig config_from_json(const nlohmann::json& j) {
  LgnConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.combine = parse_combine(j.at("combine").get<std::string>());
  c.with_global = j.at("with_global").get<bool>();
  c.use_spatial = j.at("use_spatial").get<bool>();
  c.use_similarity = j.at("use_similarity").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

inline std::string encode_checkpoint(const LgnModel& model, const nlohmann::json& extra = {}) {
  nlohmann::json header{{"format", "LGN1"}, {"config", config_to_json(model.config)},
                        {"step", model.adam.step}};
  if (!extra.is_null()) header["extra"] = extra;
  const std::string hs = header.dump();
  std::string out("LGN1");
  bytes::put_u64(out, hs.size());
  out += hs;
  auto put = [&](const std::string& name, const Matrix& m) {
    bytes::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    bytes::put_u32(out, static_cast<std::uint32_t>(m.rows));
    bytes::put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double x : m.data) bytes::put_f64(out, x);
  };
  auto& self = const_cast<LgnModel&>(model);
  for (auto& e : self.params.entries()) put(e.name, *e.tensor);
  auto ms = self.adam.m.entries();
  auto vs = self.adam.v.entries();
  for (std::size_t i = 0; i < ms.size(); ++i) put(std::string(ms[i].name) + ".adam_m", *ms[i].tensor);
  for (std::size_t i = 0; i < vs.size(); ++i) put(std::string(vs[i].name) + ".adam_v", *vs[i].tensor);
  return out;
}

inline LgnModel decode_checkpoint(std::string_view buf, const std::string& what = "LGN1",
                                  nlohmann::json* extra = nullptr) {
  if (buf.size() < 4 || buf.substr(0, 4) != "LGN1")
    throw FormatError(what + ": bad magic (expected \"LGN1\")");
  bytes::Reader r(buf, what);
  r.take(4);
  const std::uint64_t hlen = r.u64();
  if (hlen > r.remaining()) throw FormatError(what + ": header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed header JSON: " + e.what());
  }
  LgnModel m;
  try {
    m.config = config_from_json(header.at("config"));
    m.adam.step = header.at("step").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw FormatError(what + ": invalid header: " + e.what());
  }
  if (extra && header.contains("extra")) *extra = header["extra"];
  m.params = LgnParams::zeros(m.config);
  m.adam.m = LgnParams::zeros(m.config);
  m.adam.v = LgnParams::zeros(m.config);
  auto get = [&](const std::string& name, Matrix& dst) {
    const std::uint32_t len = r.u32();
    const std::string got(r.take(len));
    if (got != name) throw FormatError(what + ": expected tensor '" + name + "', found '" + got + "'");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows != dst.rows || cols != dst.cols)
      throw FormatError(what + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + std::to_string(dst.rows) + "x" +
                        std::to_string(dst.cols));
    for (auto& x : dst.data) x = r.f64();
  };
  for (auto& e : m.params.entries()) get(e.name, *e.tensor);
  for (auto& e : m.adam.m.entries()) get(std::string(e.name) + ".adam_m", *e.tensor);
  for (auto& e : m.adam.v.entries()) get(std::string(e.name) + ".adam_v", *e.tensor);
  if (r.remaining() != 0)
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return m;
}

inline void save_checkpoint(const LgnModel& model, const std::string& path,
                            const nlohmann::json& extra = {}) {
  bytes::write_file(path, encode_checkpoint(model, extra));
}

inline LgnModel load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr) {
  return decode_checkpoint(bytes::read_file(path), path, extra);
}

}  // namespace pasl
