// pasl: command-line front end for scene-layout discovery and the layout
// graph network.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pasl/pasl.hpp"

using nlohmann::json;

namespace {

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  pasl::bytes::write_file(path, j.dump(2) + "\n");
}

/// P6 image of the channel-max activation, upscaled, with layout boxes drawn.
void write_overlay_ppm(const pasl::ActivationTensor& t, const pasl::SceneLayout& layout,
                       const std::string& path) {
  const std::size_t w = t.img_w, h = t.img_h;
  std::vector<double> heat(w * h, 0.0);
  for (std::size_t c = 0; c < t.channels; ++c) {
    const auto g = pasl::upscale_channel(t, c);
    for (std::size_t i = 0; i < heat.size(); ++i) heat[i] = std::max(heat[i], g.values[i]);
  }
  const double mx = *std::max_element(heat.begin(), heat.end());
  std::string img = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> rgb(w * h * 3);
  for (std::size_t i = 0; i < heat.size(); ++i) {
    const auto v = static_cast<unsigned char>(mx > 0 ? 255.0 * heat[i] / mx : 0.0);
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = v;
  }
  for (const auto& r : layout.regions) {
    auto paint = [&](std::int32_t x, std::int32_t y) {
      const std::size_t i = (std::size_t(y) * w + std::size_t(x)) * 3;
      rgb[i] = 255;
      rgb[i + 1] = 40;
      rgb[i + 2] = 40;
    };
    for (auto x = r.x_min; x < r.x_max; ++x) {
      paint(x, r.y_min);
      paint(x, r.y_max - 1);
    }
    for (auto y = r.y_min; y < r.y_max; ++y) {
      paint(r.x_min, y);
      paint(r.x_max - 1, y);
    }
  }
  img.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  pasl::bytes::write_file(path, img);
}

struct PipelineFlags {
  std::size_t n = 32;
  std::string method = "kmeans";
  std::uint64_t seed = 7;
  std::size_t grid = pasl::kDefaultRoiGrid;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-agnostic scene layouts and layout graph networks"};
  app.require_subcommand(1);

  // discover ---------------------------------------------------------------
  std::string in_path, out_path;
  auto* discover = app.add_subcommand("discover", "Candidate boxes from an ACT1 tensor");
  discover->add_option("--input", in_path, "ACT1 file")->required();
  discover->add_option("--out", out_path, "output JSON (default stdout)");
  discover->callback([&] {
    const auto t = pasl::read_activation(in_path);
    const auto m = pasl::discover_candidates(t);
    if (m.no_region()) std::cerr << "warning: no candidate regions\n";
    write_json(out_path, {{"threshold", m.threshold},
                          {"kept_channels", m.kept_channels},
                          {"boxes", pasl::boxes_to_json(m.boxes)}});
  });

  // layout -----------------------------------------------------------------
  PipelineFlags pf;
  std::string ppm_path;
  auto* layout = app.add_subcommand("layout", "Cluster candidates into a scene layout");
  layout->add_option("--input", in_path, "ACT1 file")->required();
  layout->add_option("--n", pf.n, "number of regions N");
  layout->add_option("--method", pf.method, "kmeans | agglomerative");
  layout->add_option("--seed", pf.seed, "clustering seed");
  layout->add_option("--out", out_path, "output JSON (default stdout)");
  layout->add_option("--ppm", ppm_path, "optional PPM overlay of the layout");
  layout->callback([&] {
    const auto t = pasl::read_activation(in_path);
    const auto l = pasl::build_layout(t, pf.n, pasl::parse_cluster_method(pf.method), pf.seed);
    if (l.fallback) std::cerr << "warning: no candidate regions, using the full image\n";
    write_json(out_path, pasl::layout_to_json(l));
    if (!ppm_path.empty()) write_overlay_ppm(t, l, ppm_path);
  });

  // features ---------------------------------------------------------------
  std::string layout_path;
  bool with_global = false;
  auto* features = app.add_subcommand("features", "Node feature matrix (NDM1) for a layout");
  features->add_option("--input", in_path, "ACT1 file")->required();
  features->add_option("--layout", layout_path, "layout JSON")->required();
  features->add_option("--grid", pf.grid, "RoIAlign grid size");
  features->add_flag("--global", with_global, "prepend the global node");
  features->add_option("--out", out_path, "output NDM1 file")->required();
  features->callback([&] {
    const auto t = pasl::read_activation(in_path);
    const auto l = pasl::layout_from_json(json::parse(pasl::bytes::read_file(layout_path)));
    const auto nodes = pasl::build_nodes(t, l, with_global, pf.grid);
    if (nodes.degenerate_rows) std::cerr << "warning: " << nodes.degenerate_rows << " constant node rows\n";
    pasl::write_node_matrix(nodes.v, out_path);
  });

  // synth ------------------------------------------------------------------
  pasl::SyntheticSpec spec;
  std::string out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic layout-coded dataset");
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->add_option("--classes", spec.num_classes);
  synth->add_option("--train", spec.train_per_class, "training images per class");
  synth->add_option("--test", spec.test_per_class, "test images per class");
  synth->add_option("--channels", spec.channels);
  synth->add_option("--height", spec.height);
  synth->add_option("--width", spec.width);
  synth->add_option("--img-w", spec.img_w);
  synth->add_option("--img-h", spec.img_h);
  synth->add_option("--blobs", spec.blobs_per_class);
  synth->add_option("--sigma", spec.blob_sigma);
  synth->add_option("--jitter", spec.jitter);
  synth->add_option("--noise", spec.noise);
  synth->add_option("--seed", spec.seed);
  synth->callback([&] {
    const auto m = pasl::generate_synthetic(spec, out_dir);
    std::cout << "wrote " << m.entries.size() << " tensors and "
              << (std::filesystem::path(out_dir) / "manifest.jsonl").string() << "\n";
  });

  // train / baseline share config handling -----------------------------------
  std::string manifest_path, config_path;
  std::size_t threads = pasl::default_threads();
  std::vector<std::string> overrides;
  auto add_train_options = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest_path, "manifest JSONL")->required();
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "key=value config override (repeatable)");
    sub->add_option("--threads", threads, "worker threads");
  };
  auto load_config = [&] {
    json j = json::object();
    if (!config_path.empty()) j = json::parse(pasl::bytes::read_file(config_path));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + kv);
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      try {
        j[key] = json::parse(val);
      } catch (const json::exception&) {
        j[key] = val;
      }
    }
    auto cfg = pasl::train_config_from_json(j);
    cfg.pipeline.threads = threads;
    cfg.pipeline.cache_dir = pasl::cache_dir_from_env();
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return cfg;
  };

  auto* train = app.add_subcommand("train", "Train a layout graph network");
  add_train_options(train);
  train->add_option("--out-dir", out_dir, "checkpoint and metrics directory");
  train->callback([&] {
    auto cfg = load_config();
    cfg.verbose = true;
    const auto manifest = pasl::load_manifest(manifest_path);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = pasl::train(cfg, manifest);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json summary{{"epochs", pasl::metrics_to_json(res.epochs)}, {"seconds", secs}};
    if (!res.final_eval.per_class.empty()) summary["final"] = pasl::eval_to_json(res.final_eval);
    std::cout << summary.dump(2) << "\n";
  });

  auto* baseline = app.add_subcommand("baseline", "Pooled region features + softmax regression");
  add_train_options(baseline);
  baseline->callback([&] {
    const auto cfg = load_config();
    const auto manifest = pasl::load_manifest(manifest_path);
    const auto split = pasl::prepare_split(manifest, cfg.pipeline);
    const auto r = pasl::baseline_on_samples(split.train, split.test, manifest.num_classes, cfg);
    std::cout << json{{"train_accuracy", r.train_accuracy}, {"test_accuracy", r.test_accuracy}}.dump(2)
              << "\n";
  });

  // eval -------------------------------------------------------------------
  std::string ckpt_path, split_name = "test";
  std::vector<std::size_t> topk{1, 5};
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  eval->add_option("--checkpoint", ckpt_path, "LGN1 checkpoint")->required();
  eval->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  eval->add_option("--split", split_name, "train | test");
  eval->add_option("--topk", topk, "top-k values to report");
  eval->add_option("--threads", threads, "worker threads");
  eval->add_option("--out", out_path, "output JSON (default stdout)");
  eval->callback([&] {
    json extra;
    const auto model = pasl::load_checkpoint(ckpt_path, &extra);
    auto pc = pasl::PipelineConfig::from_json(extra.at("pipeline"));
    pc.threads = threads;
    pc.cache_dir = pasl::cache_dir_from_env();
    const auto manifest = pasl::load_manifest(manifest_path);
    if (manifest.num_classes != model.config.num_classes)
      throw std::invalid_argument("manifest has " + std::to_string(manifest.num_classes) +
                                  " classes, checkpoint expects " +
                                  std::to_string(model.config.num_classes));
    const auto wanted = split_name == "train" ? pasl::Split::train : pasl::Split::test;
    if (split_name != "train" && split_name != "test")
      throw std::invalid_argument("--split must be train or test");
    const auto split = pasl::prepare_split(manifest, pc);
    const auto& samples = wanted == pasl::Split::train ? split.train : split.test;
    write_json(out_path, pasl::eval_to_json(pasl::evaluate(model, samples, threads, topk)));
  });

  // gradcheck ----------------------------------------------------------------
  std::string gc_combine = "all", gc_ablation = "all";
  std::vector<double> gc_lambdas{0.0, 4.0};
  pasl::GradcheckOptions gco;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--combine", gc_combine, "add | max | product | all");
  grad->add_option("--ablation", gc_ablation, "spatial | similarity | both | both+global | all");
  grad->add_option("--lambda", gc_lambdas, "lambda values");
  grad->add_option("--nodes", gco.n_local, "local nodes per graph (<= 6)");
  grad->add_option("--h0", gco.input_dim, "input dimension (even, <= 16)");
  grad->add_option("--h1", gco.hidden, "hidden size (<= 32)");
  grad->add_option("--classes", gco.num_classes);
  grad->add_option("--seed", gco.seed);
  grad->add_option("--out", out_path, "output JSON report");
  grad->callback([&] {
    if (gco.n_local > 6 || gco.input_dim > 16 || gco.hidden > 32)
      throw std::invalid_argument("gradcheck dims must satisfy nodes <= 6, h0 <= 16, h1 <= 32");
    std::vector<pasl::Combine> combines;
    if (gc_combine == "all")
      combines = {pasl::Combine::add, pasl::Combine::max, pasl::Combine::product};
    else
      combines = {pasl::parse_combine(gc_combine)};
    std::vector<pasl::Ablation> ablations;
    if (gc_ablation == "all")
      ablations = {pasl::Ablation::spatial_only, pasl::Ablation::similarity_only, pasl::Ablation::both,
                   pasl::Ablation::both_global};
    else
      ablations = {pasl::parse_ablation(gc_ablation)};
    json runs = json::array();
    bool ok = true;
    for (auto c : combines)
      for (auto a : ablations)
        for (double lam : gc_lambdas) {
          auto o = gco;
          o.combine = c;
          o.ablation = a;
          o.lambda = lam;
          const auto r = pasl::gradcheck(o);
          ok = ok && r.passed;
          std::cout << (r.passed ? "PASS" : "FAIL") << "  combine=" << pasl::to_string(c)
                    << " ablation=" << pasl::to_string(a) << " lambda=" << lam
                    << " worst=" << r.worst << "\n";
          for (const auto& g : r.groups)
            std::cout << "      " << g.name << " rel_err=" << g.max_rel_error << "\n";
          runs.push_back(pasl::gradcheck_to_json(o, r));
        }
    if (!out_path.empty()) write_json(out_path, {{"passed", ok}, {"runs", runs}});
    if (!ok) throw CLI::RuntimeError(1);
  });

  // inspect ------------------------------------------------------------------
  std::uint64_t init_seed = 1;
  auto* inspect = app.add_subcommand("inspect", "Dump layout and both adjacencies as JSON");
  inspect->add_option("--input", in_path, "ACT1 file")->required();
  inspect->add_option("--checkpoint", ckpt_path, "LGN1 checkpoint (default: fresh Xavier init)");
  inspect->add_option("--n", pf.n, "number of regions N (without checkpoint)");
  inspect->add_option("--method", pf.method, "kmeans | agglomerative (without checkpoint)");
  inspect->add_option("--seed", pf.seed, "clustering seed (without checkpoint)");
  inspect->add_option("--grid", pf.grid, "RoIAlign grid (without checkpoint)");
  inspect->add_flag("--global", with_global, "include the global node (without checkpoint)");
  inspect->add_option("--init-seed", init_seed, "model init seed (without checkpoint)");
  inspect->add_option("--out", out_path, "output JSON (default stdout)");
  inspect->add_option("--ppm", ppm_path, "optional PPM overlay of the layout");
  inspect->callback([&] {
    const auto t = pasl::read_activation(in_path);
    pasl::PipelineConfig pc;
    pc.n_regions = pf.n;
    pc.method = pasl::parse_cluster_method(pf.method);
    pc.cluster_seed = pf.seed;
    pc.roi_grid = pf.grid;
    pc.with_global = with_global;
    pasl::LgnModel model;
    if (!ckpt_path.empty()) {
      json extra;
      model = pasl::load_checkpoint(ckpt_path, &extra);
      pc = pasl::PipelineConfig::from_json(extra.at("pipeline"));
    } else {
      pasl::LgnConfig c;
      c.input_dim = t.channels;
      c.hidden = 16;
      c.num_classes = 2;
      c.with_global = with_global;
      model = pasl::init_model(c, init_seed);
    }
    const auto l = pasl::build_layout(t, pc.n_regions, pc.method, pc.cluster_seed);
    const auto sample = pasl::make_sample(t, l, pc, 0);
    json out{{"layout", pasl::layout_to_json(l)}, {"with_global", pc.with_global}};
    if (sample.nodes.rows >= 2) {
      out["spatial_adjacency"] =
          pasl::matrix_to_json(pasl::spatial_adjacency(sample.spatial, model.params.edge).a);
      out["similarity_adjacency"] =
          pasl::matrix_to_json(pasl::similarity_adjacency(sample.nodes, model.params.similarity).a);
    }
    write_json(out_path, out);
    if (!ppm_path.empty()) write_overlay_ppm(t, l, ppm_path);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
