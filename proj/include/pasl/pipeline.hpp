#pragma once

// Turns manifest entries into graph samples: discovery → layout → node
// features → spatial features. Layouts can be cached on disk, keyed by the
// tensor file content and the layout settings.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/act_io.hpp"
#include "pasl/layout_builder.hpp"
#include "pasl/lgn.hpp"
#include "pasl/node_features.hpp"

namespace pasl {

inline constexpr const char* kCacheDirEnv = "PASL_CACHE_DIR";

struct PipelineConfig {
  std::size_t n_regions = 32;
  ClusterMethod method = ClusterMethod::kmeans;
  std::uint64_t cluster_seed = 7;
  std::size_t roi_grid = kDefaultRoiGrid;
  bool with_global = true;
  std::string cache_dir;  // empty: no disk cache
  std::size_t threads = 1;

  nlohmann::json to_json() const {
    return {{"n_regions", n_regions}, {"method", to_string(method)}, {"cluster_seed", cluster_seed},
            {"roi_grid", roi_grid},   {"with_global", with_global}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.n_regions = j.at("n_regions").get<std::size_t>();
    c.method = parse_cluster_method(j.at("method").get<std::string>());
    c.cluster_seed = j.at("cluster_seed").get<std::uint64_t>();
    c.roi_grid = j.at("roi_grid").get<std::size_t>();
    c.with_global = j.at("with_global").get<bool>();
    return c;
  }
};

inline std::string cache_dir_from_env() {
  const char* v = std::getenv(kCacheDirEnv);
  return v ? std::string(v) : std::string();
}

/// Per-image clustering seed: base seed xor image index.
inline std::uint64_t image_seed(std::uint64_t base, std::size_t index) { return base ^ index; }

inline std::string layout_cache_key(std::string_view tensor_bytes, std::size_t n_regions,
                                    ClusterMethod method, std::uint64_t seed) {
  std::uint64_t h = bytes::fnv1a(tensor_bytes);
  const std::string params = std::to_string(n_regions) + "/" + to_string(method) + "/" + std::to_string(seed);
  h = bytes::fnv1a(params, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct PreparedImage {
  ActivationTensor tensor;
  SceneLayout layout;
  GraphSample sample;
  bool cache_hit = false;
};

inline GraphSample make_sample(const ActivationTensor& t, const SceneLayout& layout,
                               const PipelineConfig& cfg, std::uint32_t label) {
  GraphSample s;
  const auto nodes = build_nodes(t, layout, cfg.with_global, cfg.roi_grid);
  if (nodes.degenerate_rows == nodes.n_nodes())
    throw std::invalid_argument("degenerate input: every node state is constant");
  s.nodes = nodes.v;
  s.has_global = cfg.with_global;
  s.spatial = node_spatial_features(layout, cfg.with_global);
  s.label = label;
  return s;
}

inline PreparedImage prepare_image(const std::string& path, std::uint32_t label, std::size_t index,
                                   const PipelineConfig& cfg) {
  PreparedImage out;
  const std::string raw = bytes::read_file(path);
  out.tensor = decode_activation(raw, path);
  const auto seed = image_seed(cfg.cluster_seed, index);
  std::filesystem::path cache_file;
  if (!cfg.cache_dir.empty()) {
    cache_file = std::filesystem::path(cfg.cache_dir) /
                 (layout_cache_key(raw, cfg.n_regions, cfg.method, seed) + ".layout.json");
    if (std::filesystem::exists(cache_file)) {
      try {
        out.layout = layout_from_json(nlohmann::json::parse(bytes::read_file(cache_file.string())));
        out.cache_hit = true;
      } catch (const std::exception&) {
        out.cache_hit = false;  // unreadable entry: recompute and overwrite
      }
    }
  }
  if (!out.cache_hit) {
    out.layout = build_layout(out.tensor, cfg.n_regions, cfg.method, seed);
    if (out.layout.fallback)
      std::cerr << "warning: " << path << ": no candidate regions, using the full image\n";
    if (!cache_file.empty()) {
      std::filesystem::create_directories(cfg.cache_dir);
      const auto tmp = cache_file.string() + ".tmp" + std::to_string(index);
      bytes::write_file(tmp, layout_to_json(out.layout).dump());
      std::filesystem::rename(tmp, cache_file);
    }
  }
  out.sample = make_sample(out.tensor, out.layout, cfg, label);
  return out;
}

/// Samples for the given entries, in order. An entry's position in the list
/// is its image index for clustering seeds.
inline std::vector<GraphSample> prepare_samples(const std::vector<ManifestEntry>& entries,
                                                const PipelineConfig& cfg,
                                                std::size_t* cache_hits = nullptr) {
  std::vector<GraphSample> samples(entries.size());
  std::vector<char> hits(entries.size(), 0);
  parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
    auto p = prepare_image(entries[i].path, entries[i].label, i, cfg);
    samples[i] = std::move(p.sample);
    hits[i] = p.cache_hit;
  });
  if (cache_hits) *cache_hits = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1));
  return samples;
}

}  // namespace pasl
