#pragma once

// Activation tensors and dataset manifests.
//
// ACT1 layout (all little-endian):
//   "ACT1" | u32 C | u32 H | u32 W | u32 img_w | u32 img_h | u32 label
//   | C planes of H×W row-major f32
// A label of 0xFFFFFFFF means "unlabeled".

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/core.hpp"

namespace pasl {

inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;
inline constexpr std::size_t kActHeaderBytes = 4 + 6 * 4;

/// C×H×W convolutional activations of one image plus source-image metadata.
struct ActivationTensor {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;
  std::uint32_t img_w = 0;
  std::uint32_t img_h = 0;
  std::optional<std::uint32_t> label;

  std::size_t plane_size() const { return std::size_t(height) * width; }

  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }
  std::span<float> channel(std::size_t c) { return {data.data() + c * plane_size(), plane_size()}; }

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[c * plane_size() + y * width + x];
  }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const {
    if (channels == 0 || height == 0 || width == 0)
      throw std::invalid_argument("activation tensor: C, H and W must be positive");
    if (img_w == 0 || img_h == 0)
      throw std::invalid_argument("activation tensor: image dimensions must be positive");
    if (data.size() != std::size_t(channels) * height * width)
      throw std::invalid_argument("activation tensor: data length " + std::to_string(data.size()) +
                                  " != C*H*W = " +
                                  std::to_string(std::size_t(channels) * height * width));
    if (width > img_w || height > img_h)
      throw std::invalid_argument("activation tensor: feature grid " + std::to_string(width) + "x" +
                                  std::to_string(height) + " exceeds image " +
                                  std::to_string(img_w) + "x" + std::to_string(img_h));
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!std::isfinite(data[i]))
        throw std::invalid_argument("activation tensor: non-finite value at index " +
                                    std::to_string(i));
    if (label && *label == kUnlabeled)
      throw std::invalid_argument("activation tensor: label collides with the unlabeled sentinel");
  }

  bool operator==(const ActivationTensor& o) const {
    if (channels != o.channels || height != o.height || width != o.width || img_w != o.img_w ||
        img_h != o.img_h || label != o.label || data.size() != o.data.size())
      return false;
    // bitwise, so that -0.0f and 0.0f are distinguished
    return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
  }
};

inline std::string encode_activation(const ActivationTensor& t) {
  t.validate();
  std::string out;
  out.reserve(kActHeaderBytes + t.data.size() * 4);
  out.append("ACT1");
  for (std::uint32_t v : {t.channels, t.height, t.width, t.img_w, t.img_h})
    bytes::put_u32(out, v);
  bytes::put_u32(out, t.label.value_or(kUnlabeled));
  for (float f : t.data) bytes::put_f32(out, f);
  return out;
}

inline ActivationTensor decode_activation(std::string_view buf, const std::string& what = "ACT1") {
  bytes::Reader r(buf, what);
  if (buf.size() < 4 || buf.substr(0, 4) != "ACT1")
    throw FormatError(what + ": bad magic (expected \"ACT1\")");
  r.take(4);
  ActivationTensor t;
  t.channels = r.u32();
  t.height = r.u32();
  t.width = r.u32();
  t.img_w = r.u32();
  t.img_h = r.u32();
  const std::uint32_t label = r.u32();
  if (label != kUnlabeled) t.label = label;
  if (t.channels == 0 || t.height == 0 || t.width == 0)
    throw FormatError(what + ": zero dimension in header");
  const std::uint64_t count = std::uint64_t(t.channels) * t.height * t.width;
  if (r.remaining() < count * 4)
    throw FormatError(what + ": truncated payload (header declares " + std::to_string(count * 4) +
                      " bytes, found " + std::to_string(r.remaining()) + ")");
  if (r.remaining() > count * 4)
    throw FormatError(what + ": " + std::to_string(r.remaining() - count * 4) +
                      " trailing bytes after payload");
  t.data.resize(count);
  for (auto& f : t.data) f = r.f32();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
  return t;
}

inline void write_activation(const ActivationTensor& t, const std::string& path) {
  bytes::write_file(path, encode_activation(t));
}

inline ActivationTensor read_activation(const std::string& path) {
  return decode_activation(bytes::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Manifests: JSON lines. First record {"num_classes": k}, then one
// {"path": ..., "label": ..., "split": "train"|"test"} per tensor file.
// Relative paths are resolved against the manifest's directory.

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestEntry {
  std::string path;
  std::uint32_t label = 0;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint32_t num_classes = 0;

  std::vector<ManifestEntry> subset(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(e);
    return out;
  }
};

inline DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                                      const std::string& what = "manifest") {
  using nlohmann::json;
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError(what + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) fail("record is not a JSON object");
    if (!have_header) {
      if (!rec.contains("num_classes") || !rec["num_classes"].is_number_unsigned() ||
          rec["num_classes"].get<std::uint64_t>() == 0)
        fail("first record must be {\"num_classes\": k} with k > 0");
      m.num_classes = rec["num_classes"].get<std::uint32_t>();
      have_header = true;
      continue;
    }
    if (!rec.contains("path") || !rec["path"].is_string()) fail("missing string key \"path\"");
    if (!rec.contains("label") || !rec["label"].is_number_unsigned())
      fail("missing non-negative integer key \"label\"");
    if (!rec.contains("split") || !rec["split"].is_string()) fail("missing string key \"split\"");
    ManifestEntry e;
    const auto split = rec["split"].get<std::string>();
    if (split == "train")
      e.split = Split::train;
    else if (split == "test")
      e.split = Split::test;
    else
      fail("split must be \"train\" or \"test\", got \"" + split + "\"");
    const auto label = rec["label"].get<std::uint64_t>();
    if (label >= m.num_classes)
      fail("label " + std::to_string(label) + " >= num_classes " + std::to_string(m.num_classes));
    e.label = static_cast<std::uint32_t>(label);
    std::filesystem::path p = rec["path"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) fail("path does not exist: " + p.string());
    e.path = p.lexically_normal().string();
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  return parse_manifest(in, std::filesystem::path(path).parent_path(), path);
}

/// Writes entries with paths relative to the manifest directory when possible.
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  using nlohmann::json;
  const auto base = std::filesystem::path(path).parent_path();
  std::ostringstream os;
  os << json{{"num_classes", m.num_classes}}.dump() << '\n';
  for (const auto& e : m.entries) {
    std::filesystem::path p = e.path;
    // Stored relative to the manifest so the dataset directory can move.
    if (!base.empty()) p = std::filesystem::relative(std::filesystem::absolute(p), std::filesystem::absolute(base));
    os << json{{"path", p.generic_string()}, {"label", e.label}, {"split", to_string(e.split)}}.dump()
       << '\n';
  }
  bytes::write_file(path, os.str());
}

}  // namespace pasl
