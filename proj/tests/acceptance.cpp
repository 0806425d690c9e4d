// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// hard criterion fails. Criterion 6 is informational.

#include <chrono>
#include <cstdio>
#include <sstream>

#include "oracles.hpp"

using namespace pasl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o, bool hard = true) {
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass && hard) ++failures;
}

template <class F>
Outcome guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

std::vector<const GraphSample*> pointers(const std::vector<GraphSample>& v) {
  std::vector<const GraphSample*> out;
  for (const auto& g : v) out.push_back(&g);
  return out;
}

// 1 ---------------------------------------------------------------------------
Outcome gradients() {
  const auto t0 = Clock::now();
  int configs = 0, ok = 0;
  double worst = 0.0;
  std::string bad;
  for (auto ab : {Ablation::spatial_only, Ablation::similarity_only, Ablation::both, Ablation::both_global})
    for (auto mode : {Combine::add, Combine::max, Combine::product})
      for (double lambda : {0.0, 4.0}) {
        GradcheckOptions o;
        o.ablation = ab;
        o.combine = mode;
        o.lambda = lambda;
        const auto r = gradcheck(o);
        ++configs;
        ok += r.passed;
        worst = std::max(worst, r.worst);
        if (!r.passed) bad += std::string(" ") + to_string(ab) + "/" + to_string(mode);
      }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << ok << "/" << configs << " configurations, worst rel error " << worst << ", " << secs << " s" << bad;
  return {ok == configs && secs < 120.0, s.str()};
}

// 2 ---------------------------------------------------------------------------
Outcome adjacency_contracts() {
  Rng rng(2);
  double worst_sum = 0.0, worst_z = 0.0;
  bool diag_ok = true, sign_ok = true;
  for (int it = 0; it < 1000; ++it) {
    const std::size_t n = 2 + rng.below(63);
    SceneLayout l;
    l.img_w = 64 + static_cast<std::uint32_t>(rng.below(400));
    l.img_h = 64 + static_cast<std::uint32_t>(rng.below(400));
    l = oracle::random_layout(rng, l.img_w, l.img_h, n);
    const auto feats = node_spatial_features(l, false);
    EdgeFunctionParams ep;
    ep.weight = oracle::random_matrix(rng, 1, 10, -3, 3);
    ep.bias = oracle::random_matrix(rng, 1, 1, -3, 3);
    const std::size_t d = 2 * (1 + rng.below(8));
    SimilarityParams sp;
    sp.weight = oracle::random_matrix(rng, d / 2, d, -1, 1);
    const auto v = oracle::random_matrix(rng, n, d, -1, 1);
    for (const auto& a : {spatial_adjacency(feats, ep).a, similarity_adjacency(v, sp).a}) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          s += a(i, j);
          sign_ok &= a(i, j) >= 0.0;
        }
        diag_ok &= a(i, i) == 0.0;
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
      const auto z = propagation_matrix(a);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += z(i, j);
        worst_z = std::max(worst_z, std::abs(s - 1.0));
      }
    }
  }
  std::ostringstream s;
  s << "1000 graphs, max |row sum - 1| " << worst_sum << " (A), " << worst_z << " (Z)";
  return {diag_ok && sign_ok && worst_sum <= 1e-9 && worst_z <= 1e-9, s.str()};
}

// 3 ---------------------------------------------------------------------------
Outcome discovery_and_layout_oracles() {
  Rng rng(3);
  int ccl_bad = 0;
  for (int i = 0; i < 500; ++i) {
    const auto b = oracle::random_map(rng, 32, 32, rng.uniform(0.05, 0.7));
    ccl_bad += connected_components(b) != oracle::flood_fill_boxes(b);
  }
  double cov_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto w = static_cast<std::uint32_t>(20 + rng.below(300));
    const auto h = static_cast<std::uint32_t>(20 + rng.below(300));
    const auto l = oracle::random_layout(rng, w, h, 1 + rng.below(32));
    cov_err = std::max(cov_err, std::abs(coverage_ratio(l) - oracle::raster_coverage(l)));
  }
  int inertia_bad = 0, agglo_bad = 0;
  for (int i = 0; i < 200; ++i) {
    CandidateSet m;
    m.img_w = m.img_h = 224;
    m.boxes = oracle::random_layout(rng, 224, 224, 5 + rng.below(80)).regions;
    const auto a = cluster_boxes(m, 2 + rng.below(32), ClusterMethod::kmeans, rng.next());
    for (std::size_t t = 1; t < a.inertia_trace.size(); ++t)
      if (a.inertia_trace[t] > a.inertia_trace[t - 1] * (1 + 1e-12)) {
        ++inertia_bad;
        break;
      }
    if (m.boxes.size() <= 30) {
      std::vector<std::array<double, 4>> pts;
      for (const auto& b : m.boxes) pts.push_back(to_point(b));
      const auto g = cluster_boxes(m, 1 + rng.below(m.boxes.size()), ClusterMethod::agglomerative, 0);
      agglo_bad += g.labels != oracle::naive_average_linkage(pts, g.k);
    }
  }
  std::ostringstream s;
  s << "CCL mismatches " << ccl_bad << "/500, coverage max error " << cov_err
    << ", inertia violations " << inertia_bad << ", agglomerative mismatches " << agglo_bad;
  return {ccl_bad == 0 && cov_err <= 1e-12 && inertia_bad == 0 && agglo_bad == 0, s.str()};
}

// 4 ---------------------------------------------------------------------------
Outcome invariances() {
  Rng rng(4);
  bool norms_ok = true;
  for (int i = 0; i < 300; ++i) {
    NodeMatrix m;
    m.v = oracle::random_matrix(rng, 1 + rng.below(12), 2 + rng.below(64), -3, 3);
    if (i % 5 == 0) std::fill(m.v.row(0).begin(), m.v.row(0).end(), rng.uniform());
    const auto out = normalize(m);
    for (std::size_t r = 0; r < out.v.rows; ++r) {
      const double n = l2_norm(out.v.row(r));
      norms_ok &= n == 0.0 || std::abs(n - 1.0) <= 1e-9;
    }
  }
  SyntheticSpec spec;
  const auto world = make_world(spec);
  int scale_bad = 0;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const auto t = synthesize(spec, world, i % spec.num_classes, i);
    const auto base = discover_candidates(t);
    for (float k : {0.5f, 2.f, 8.f}) {
      auto s = t;
      for (auto& x : s.data) x *= k;
      const auto m = discover_candidates(s);
      scale_bad += m.boxes != base.boxes || m.kept_channels != base.kept_channels;
    }
  }
  double sim_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(30), d = 2 * (1 + rng.below(16));
    SimilarityParams p;
    p.weight = oracle::random_matrix(rng, d / 2, d);
    const auto v = oracle::random_matrix(rng, n, d);
    auto scaled = v;
    const double k = std::pow(10.0, rng.uniform(-3, 3));
    for (auto& x : scaled.data) x *= k;
    const auto a = similarity_adjacency(v, p).a, b = similarity_adjacency(scaled, p).a;
    for (std::size_t e = 0; e < a.data.size(); ++e) sim_err = std::max(sim_err, std::abs(a.data[e] - b.data[e]));
  }
  double perm_err = 0.0;
  for (auto mode : {Combine::add, Combine::max, Combine::product})
    for (bool glob : {true, false}) {
      LgnConfig c;
      c.input_dim = 16;
      c.hidden = 24;
      c.num_classes = 5;
      c.combine = mode;
      c.with_global = glob;
      const auto model = init_model(c, 11);
      auto graphs = random_graphs(c, 4, 2 + rng.below(20), rng);
      const double before = forward_backward(model, pointers(graphs), std::nullopt, 1, false).loss;
      for (auto& g : graphs) {
        const std::size_t first = glob ? 1 : 0;
        std::vector<std::size_t> perm(g.n_local());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        GraphSample p = g;
        for (std::size_t i = 0; i < perm.size(); ++i) {
          const auto src = g.nodes.row(first + perm[i]);
          std::copy(src.begin(), src.end(), p.nodes.row(first + i).begin());
          p.spatial[first + i] = g.spatial[first + perm[i]];
        }
        g = std::move(p);
      }
      const double after = forward_backward(model, pointers(graphs), std::nullopt, 1, false).loss;
      perm_err = std::max(perm_err, std::abs(after - before));
    }
  std::ostringstream s;
  s << "norms in {0,1}: " << (norms_ok ? "yes" : "no") << ", candidate scale mismatches " << scale_bad
    << "/60, A_sim scale error " << sim_err << ", loss permutation error " << perm_err;
  return {norms_ok && scale_bad == 0 && sim_err <= 1e-9 && perm_err <= 1e-9, s.str()};
}

// 5 and 6 ---------------------------------------------------------------------
struct RunResult {
  double lgn = 0.0;
  double baseline = 0.0;
  double secs = 0.0;
  std::vector<EpochRecord> epochs;
};

TrainConfig synthetic_config(Combine mode, std::uint64_t seed) {
  TrainConfig c;
  c.pipeline.n_regions = 16;
  c.hidden = 256;
  c.combine = mode;
  c.lambda = 1.0;
  c.epochs = 20;
  c.seed = seed;
  return c;
}

RunResult run_synthetic(const SplitSamples& split, std::size_t K, Combine mode, std::uint64_t seed,
                        bool with_baseline) {
  const auto t0 = Clock::now();
  const auto cfg = synthetic_config(mode, seed);
  RunResult r;
  const auto res = train_on_samples(cfg, split.train, split.test, K);
  r.lgn = res.final_eval.accuracy;
  r.epochs = res.epochs;
  if (with_baseline) r.baseline = baseline_on_samples(split.train, split.test, K, cfg).test_accuracy;
  r.secs = seconds_since(t0);
  return r;
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  const auto m = generate_synthetic(spec, oracle::scratch_dir("acceptance_synth"));
  const auto split = prepare_split(m, synthetic_config(Combine::product, 1).pipeline);
  const auto a = run_synthetic(split, spec.num_classes, Combine::product, 1, true);
  const double secs = seconds_since(t0);
  const auto again = run_synthetic(split, spec.num_classes, Combine::product, 1, false);
  bool same = again.lgn == a.lgn && again.epochs.size() == a.epochs.size();
  for (std::size_t e = 0; same && e < a.epochs.size(); ++e)
    same = again.epochs[e].train_loss == a.epochs[e].train_loss && again.epochs[e].test_acc == a.epochs[e].test_acc;
  std::ostringstream s;
  s << "LGN " << a.lgn << ", baseline " << a.baseline << ", gap " << a.lgn - a.baseline << ", " << secs
    << " s, repeat identical: " << (same ? "yes" : "no");
  return {a.lgn >= 0.90 && a.lgn >= a.baseline + 0.15 && secs < 600.0 && same, s.str()};
}

Outcome combine_ordering() {
  const std::array<Combine, 3> modes{Combine::add, Combine::max, Combine::product};
  std::array<double, 3> mean{};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto m = generate_synthetic(spec, oracle::scratch_dir("acceptance_combine_" + std::to_string(seed)));
    const auto split = prepare_split(m, synthetic_config(Combine::product, seed).pipeline);
    for (std::size_t i = 0; i < 3; ++i)
      mean[i] += run_synthetic(split, spec.num_classes, modes[i], seed, false).lgn / 3.0;
  }
  std::ostringstream s;
  s << "mean accuracy add " << mean[0] << ", max " << mean[1] << ", product " << mean[2]
    << "; product best: " << (mean[2] >= mean[0] && mean[2] >= mean[1] ? "yes" : "no");
  return {mean[2] >= mean[0] && mean[2] >= mean[1], s.str()};
}

// 7 ---------------------------------------------------------------------------
Outcome formats() {
  Rng rng(7);
  const auto dir = oracle::scratch_dir("acceptance_formats");
  int bad = 0;
  auto expect_rejected = [&](auto&& decode) {
    try {
      decode();
      ++bad;
    } catch (const FormatError&) {
    }
  };
  for (int i = 0; i < 20; ++i) {
    std::vector<float> data(3 * 5 * 4);
    for (auto& x : data) x = float(rng.uniform(-2, 2));
    auto t = oracle::make_tensor(3, 5, 4, 40, 50, data);
    if (i % 2) t.label = static_cast<std::uint32_t>(i);
    write_activation(t, dir + "/t.act");
    const auto raw = bytes::read_file(dir + "/t.act");
    const auto back = read_activation(dir + "/t.act");
    bad += back.data != t.data || back.label != t.label || encode_activation(back) != raw;
    auto corrupt = raw;
    corrupt[0] = 'B';
    expect_rejected([&] { decode_activation(corrupt); });
    expect_rejected([&] { decode_activation(raw.substr(0, raw.size() - 2)); });

    Matrix v = oracle::random_matrix(rng, 1 + rng.below(10), 2 + rng.below(20));
    for (auto& x : v.data) x = double(float(x));
    write_node_matrix(v, dir + "/v.ndm");
    const auto nraw = bytes::read_file(dir + "/v.ndm");
    bad += read_node_matrix(dir + "/v.ndm") != v || encode_node_matrix(v) != nraw;
    corrupt = nraw;
    corrupt[1] = 'X';
    expect_rejected([&] { decode_node_matrix(corrupt); });
    expect_rejected([&] { decode_node_matrix(nraw + "x"); });

    LgnConfig c;
    c.input_dim = 6;
    c.hidden = 5;
    c.num_classes = 3;
    const auto model = init_model(c, rng.next());
    save_checkpoint(model, dir + "/m.lgn");
    const auto lraw = bytes::read_file(dir + "/m.lgn");
    const auto mb = load_checkpoint(dir + "/m.lgn");
    bad += !(mb.params == model.params) || encode_checkpoint(mb) != lraw;
    corrupt = lraw;
    corrupt[2] = 'M';
    expect_rejected([&] { decode_checkpoint(corrupt); });
    expect_rejected([&] { decode_checkpoint(lraw.substr(0, lraw.size() - 8)); });
  }
  return {bad == 0, std::to_string(bad) + " round-trip or rejection failures over ACT1, NDM1, LGN1"};
}

}  // namespace

int main() {
  report(1, "analytic gradients match central differences", guarded(gradients));
  report(2, "adjacency and propagation matrices are row-stochastic", guarded(adjacency_contracts));
  report(3, "discovery and layout agree with reference implementations", guarded(discovery_and_layout_oracles));
  report(4, "normalization and invariance properties", guarded(invariances));
  report(5, "synthetic layout task: LGN beats pooled baseline", guarded(synthetic_end_to_end));
  report(6, "combine-mode ordering over 3 seeds (reported only)", guarded(combine_ordering), false);
  report(7, "file formats round-trip and reject corruption", guarded(formats));
  std::printf("%d hard criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
