#pragma once

// Synthetic activation tensors whose class is encoded only by where a fixed
// set of blobs sits. Every class uses the same blobs (same channels, same
// amplitudes); classes differ in the blob arrangement.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pasl/act_io.hpp"
#include "pasl/core.hpp"

namespace pasl {

struct SyntheticSpec {
  std::uint32_t num_classes = 8;
  std::uint32_t train_per_class = 60;
  std::uint32_t test_per_class = 20;
  std::uint32_t channels = 64;
  std::uint32_t height = 14;
  std::uint32_t width = 14;
  std::uint32_t img_w = 224;
  std::uint32_t img_h = 224;
  std::uint32_t blobs_per_class = 8;
  double blob_sigma = 2.0;   // feature cells
  double jitter = 0.08;      // max per-image blob shift, fraction of the grid
  double noise = 0.05;       // std of additive half-normal noise
  double min_separation = 2.0;  // feature cells between any two class arrangements
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes == 0 || channels == 0 || height == 0 || width == 0 || img_w == 0 ||
        img_h == 0 || blobs_per_class == 0)
      throw std::invalid_argument("synthetic spec: counts must be positive");
    if (img_w < width || img_h < height)
      throw std::invalid_argument("synthetic spec: image smaller than feature grid");
    if (!(jitter >= 0.0 && jitter <= 0.1))
      throw std::invalid_argument("synthetic spec: jitter must be within [0, 0.1]");
    if (!(noise >= 0.0) || !(blob_sigma > 0.0))
      throw std::invalid_argument("synthetic spec: noise >= 0 and sigma > 0 required");
  }
};

struct BlobArrangement {
  std::vector<double> x;
  std::vector<double> y;
};

/// Shared content plus one arrangement per class, all derived from spec.seed.
struct SyntheticWorld {
  std::vector<std::uint32_t> blob_of_channel;  // which blob drives each channel
  std::vector<double> amplitude;               // per channel
  std::vector<BlobArrangement> classes;
  std::size_t redraws = 0;
};

namespace detail {

inline double arrangement_distance(const BlobArrangement& a, const BlobArrangement& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.x.size(); ++k)
    worst = std::max(worst, std::hypot(a.x[k] - b.x[k], a.y[k] - b.y[k]));
  return worst;
}

}  // namespace detail

inline SyntheticWorld make_world(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticWorld w;
  w.blob_of_channel.resize(spec.channels);
  w.amplitude.resize(spec.channels);
  for (std::uint32_t c = 0; c < spec.channels; ++c) {
    w.blob_of_channel[c] = c % spec.blobs_per_class;
    w.amplitude[c] = rng.uniform(0.4, 1.0);
  }
  const double margin = std::min(1.0, 0.5 * (spec.width - 1));
  auto draw = [&] {
    BlobArrangement a;
    for (std::uint32_t k = 0; k < spec.blobs_per_class; ++k) {
      a.x.push_back(rng.uniform(margin, spec.width - 1 - margin));
      a.y.push_back(rng.uniform(margin, spec.height - 1 - margin));
    }
    return a;
  };
  while (w.classes.size() < spec.num_classes) {
    auto a = draw();
    bool distinct = true;
    for (const auto& other : w.classes)
      if (detail::arrangement_distance(a, other) < spec.min_separation) distinct = false;
    if (!distinct) {
      if (++w.redraws > 100000)
        throw std::runtime_error("synthetic: cannot draw separable arrangements; lower min_separation");
      continue;
    }
    w.classes.push_back(std::move(a));
  }
  return w;
}

/// Image `index` of class `cls`; deterministic in (spec.seed, cls, index).
inline ActivationTensor synthesize(const SyntheticSpec& spec, const SyntheticWorld& w,
                                   std::uint32_t cls, std::uint64_t index) {
  Rng rng(mix_seed(mix_seed(spec.seed, cls + 1), index + 1));
  ActivationTensor t;
  t.channels = spec.channels;
  t.height = spec.height;
  t.width = spec.width;
  t.img_w = spec.img_w;
  t.img_h = spec.img_h;
  t.label = cls;
  t.data.assign(std::size_t(spec.channels) * spec.height * spec.width, 0.0f);

  const auto& base = w.classes[cls];
  const double max_shift_x = spec.jitter * spec.width;
  const double max_shift_y = spec.jitter * spec.height;
  std::vector<double> bx(spec.blobs_per_class), by(spec.blobs_per_class);
  for (std::uint32_t k = 0; k < spec.blobs_per_class; ++k) {
    bx[k] = base.x[k] + (max_shift_x > 0 ? rng.uniform(-max_shift_x, max_shift_x) : 0.0);
    by[k] = base.y[k] + (max_shift_y > 0 ? rng.uniform(-max_shift_y, max_shift_y) : 0.0);
  }
  const double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
  for (std::uint32_t c = 0; c < spec.channels; ++c) {
    const auto k = w.blob_of_channel[c];
    auto plane = t.channel(c);
    for (std::uint32_t y = 0; y < spec.height; ++y) {
      for (std::uint32_t x = 0; x < spec.width; ++x) {
        const double d2 = (x - bx[k]) * (x - bx[k]) + (y - by[k]) * (y - by[k]);
        double v = w.amplitude[c] * std::exp(-d2 * inv2s2);
        if (spec.noise > 0.0) v += spec.noise * std::abs(rng.normal());
        plane[y * spec.width + x] = static_cast<float>(v);
      }
    }
  }
  return t;
}

/// Writes one ACT1 file per image plus `manifest.jsonl` into `dir`; returns
/// the manifest. Within each class the first train_per_class images are the
/// training split.
inline DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& dir) {
  const auto world = make_world(spec);
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.num_classes = spec.num_classes;
  const std::uint32_t per_class = spec.train_per_class + spec.test_per_class;
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    for (std::uint32_t i = 0; i < per_class; ++i) {
      const auto t = synthesize(spec, world, c, i);
      const auto name = "c" + std::to_string(c) + "_" + std::to_string(i) + ".act";
      const auto path = (std::filesystem::path(dir) / name).string();
      write_activation(t, path);
      m.entries.push_back({path, c, i < spec.train_per_class ? Split::train : Split::test});
    }
  }
  save_manifest(m, (std::filesystem::path(dir) / "manifest.jsonl").string());
  return m;
}

}  // namespace pasl
