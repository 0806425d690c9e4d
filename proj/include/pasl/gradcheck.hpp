#pragma once

// Finite-difference verification of the LGN gradients on tiny random graphs.
//
// Group error = max_i |analytic_i − numeric_i| / max(group scale, 1e-3 ·
// model scale, 1e-12), where a scale is the largest |analytic| or |numeric|
// entry. Groups whose true gradient vanishes (the edge bias is invisible to a
// per-row softmax) are thereby judged against the model's gradient magnitude
// rather than against finite-difference round-off. Two exactly-zero gradients
// report 0.

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/lgn.hpp"

namespace pasl {

enum class Ablation { spatial_only, similarity_only, both, both_global };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::spatial_only: return "spatial";
    case Ablation::similarity_only: return "similarity";
    case Ablation::both: return "both";
    case Ablation::both_global: return "both+global";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "spatial") return Ablation::spatial_only;
  if (s == "similarity") return Ablation::similarity_only;
  if (s == "both") return Ablation::both;
  if (s == "both+global") return Ablation::both_global;
  throw std::invalid_argument("unknown ablation '" + s + "' (spatial|similarity|both|both+global)");
}

struct GradcheckOptions {
  std::size_t n_local = 4;
  std::size_t input_dim = 8;
  std::size_t hidden = 16;
  std::size_t num_classes = 3;
  std::size_t batch = 2;
  double lambda = 4.0;
  Combine combine = Combine::product;
  Ablation ablation = Ablation::both_global;
  bool dropout = true;
  double step = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(LgnParams&)> corrupt;
};

struct GroupError {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t count = 0;
};

struct GradcheckReport {
  std::vector<GroupError> groups;
  double worst = 0.0;
  bool passed = true;
};

inline LgnConfig gradcheck_config(const GradcheckOptions& o) {
  LgnConfig c;
  c.input_dim = o.input_dim;
  c.hidden = o.hidden;
  c.num_classes = o.num_classes;
  c.lambda = o.lambda;
  c.combine = o.combine;
  c.with_global = o.ablation == Ablation::both_global;
  c.use_spatial = o.ablation != Ablation::similarity_only;
  c.use_similarity = o.ablation != Ablation::spatial_only;
  c.dropout = 0.2;
  return c;
}

/// Random normalized nodes and random boxes in a 64×48 image.
inline std::vector<GraphSample> random_graphs(const LgnConfig& c, std::size_t count,
                                              std::size_t n_local, Rng& rng) {
  std::vector<GraphSample> out;
  const std::uint32_t img_w = 64, img_h = 48;
  for (std::size_t b = 0; b < count; ++b) {
    SceneLayout layout;
    layout.img_w = img_w;
    layout.img_h = img_h;
    for (std::size_t i = 0; i < n_local; ++i) {
      const auto x0 = static_cast<std::int32_t>(rng.below(img_w - 1));
      const auto y0 = static_cast<std::int32_t>(rng.below(img_h - 1));
      const auto x1 = x0 + 1 + static_cast<std::int32_t>(rng.below(img_w - x0));
      const auto y1 = y0 + 1 + static_cast<std::int32_t>(rng.below(img_h - y0));
      layout.regions.push_back({x0, y0, std::min<std::int32_t>(x1, img_w), std::min<std::int32_t>(y1, img_h)});
    }
    NodeMatrix nm;
    nm.has_global = c.with_global;
    nm.v = Matrix(n_local + (c.with_global ? 1 : 0), c.input_dim);
    for (auto& x : nm.v.data) x = rng.uniform(0.0, 1.0);
    nm = normalize(std::move(nm));
    GraphSample s;
    s.nodes = nm.v;
    s.has_global = c.with_global;
    s.spatial = node_spatial_features(layout, c.with_global);
    s.label = static_cast<std::uint32_t>(rng.below(c.num_classes));
    out.push_back(std::move(s));
  }
  return out;
}

inline GradcheckReport gradcheck(const GradcheckOptions& o) {
  const LgnConfig cfg = gradcheck_config(o);
  LgnModel model = init_model(cfg, o.seed);
  Rng rng(mix_seed(o.seed, 0x6AD));
  // Heads start non-trivial so every path carries signal.
  for (auto* t : {&model.params.image_b, &model.params.node_b, &model.params.edge.bias})
    for (double& x : t->data) x = rng.uniform(-0.5, 0.5);
  const auto graphs = random_graphs(cfg, o.batch, o.n_local, rng);
  std::vector<const GraphSample*> batch;
  for (const auto& g : graphs) batch.push_back(&g);
  const std::optional<std::uint64_t> drop =
      o.dropout ? std::optional<std::uint64_t>(mix_seed(o.seed, 0xD20)) : std::nullopt;

  LgnParams analytic = forward_backward(model, batch, drop).grad;
  if (o.corrupt) o.corrupt(analytic);

  GradcheckReport report;
  auto params = model.params.entries();
  const auto grads = analytic.tensors();
  std::vector<double> max_diff(params.size(), 0.0), scale(params.size(), 0.0);
  double model_scale = 0.0;
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& theta = params[e].tensor->data;
    const auto& a = grads[e]->data;
    GroupError ge;
    ge.name = params[e].name;
    ge.count = theta.size();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double orig = theta[i];
      theta[i] = orig + o.step;
      const double up = forward_backward(model, batch, drop, 1, false).loss;
      theta[i] = orig - o.step;
      const double down = forward_backward(model, batch, drop, 1, false).loss;
      theta[i] = orig;
      const double numeric = (up - down) / (2.0 * o.step);
      max_diff[e] = std::max(max_diff[e], std::abs(a[i] - numeric));
      scale[e] = std::max({scale[e], std::abs(a[i]), std::abs(numeric)});
      ge.max_abs_analytic = std::max(ge.max_abs_analytic, std::abs(a[i]));
    }
    model_scale = std::max(model_scale, scale[e]);
    report.groups.push_back(ge);
  }
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& ge = report.groups[e];
    ge.max_rel_error =
        max_diff[e] == 0.0 ? 0.0 : max_diff[e] / std::max({scale[e], 1e-3 * model_scale, 1e-12});
    report.worst = std::max(report.worst, ge.max_rel_error);
    if (!(ge.max_rel_error < o.tolerance)) report.passed = false;
  }
  return report;
}

inline nlohmann::json gradcheck_to_json(const GradcheckOptions& o, const GradcheckReport& r) {
  auto groups = nlohmann::json::array();
  for (const auto& g : r.groups)
    groups.push_back({{"group", g.name},
                      {"max_rel_error", g.max_rel_error},
                      {"max_abs_grad", g.max_abs_analytic},
                      {"size", g.count}});
  return {{"combine", to_string(o.combine)}, {"ablation", to_string(o.ablation)},
          {"lambda", o.lambda},              {"passed", r.passed},
          {"worst", r.worst},                {"groups", groups}};
}

}  // namespace pasl
