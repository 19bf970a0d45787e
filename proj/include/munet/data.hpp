#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "munet/core.hpp"
#include "munet/interp.hpp"
#include "munet/rng.hpp"

namespace munet {

// ---------------------------------------------------------------------------
// Patch grids
// ---------------------------------------------------------------------------

struct PatchSpec {
  int window = 256;
  int stride = 256;
  int jitter = 0;  // max per-image grid offset, drawn per epoch

  void validate() const {
    if (window < 1) throw ConfigError("PatchSpec: window must be positive");
    if (stride < 1) throw ConfigError("PatchSpec: stride must be positive");
    if (jitter < 0 || jitter > stride)
      throw ConfigError("PatchSpec: jitter must be in [0, stride]");
  }
};

// Origins along one axis: {0} plus the jittered stride grid plus a flush
// origin at extent - window, deduplicated and sorted.
inline std::vector<int> patch_axis_origins(int extent, int window, int stride,
                                           int jitter_offset) {
  if (extent < window)
    throw DataError("image extent " + std::to_string(extent) +
                    " smaller than patch window " + std::to_string(window));
  std::set<int> origins;
  origins.insert(0);
  for (int o = jitter_offset; o <= extent - window; o += stride) origins.insert(o);
  origins.insert(extent - window);
  return {origins.begin(), origins.end()};
}

struct Patch {
  int x0 = 0, y0 = 0;
  Mosaic image;
  LabelMap labels;
};

inline Patch crop_patch(const Mosaic& img, const LabelMap& lab, int x0, int y0,
                        int window) {
  Patch p;
  p.x0 = x0;
  p.y0 = y0;
  p.image = Mosaic(window, window);
  p.image.resolution_um = img.resolution_um;
  p.labels = LabelMap(window, window);
  for (int y = 0; y < window; ++y)
    for (int x = 0; x < window; ++x) {
      p.image.at(x, y) = img.at(x0 + x, y0 + y);
      p.labels.at(x, y) = lab.at(x0 + x, y0 + y);
    }
  return p;
}

// All window x window patches of one image for a given jitter offset. The
// same offset applies to both axes; a fresh offset is drawn per image per
// epoch by the trainer.
inline std::vector<Patch> extract_patches(const Mosaic& img, const LabelMap& lab,
                                          const PatchSpec& spec, int jitter_offset) {
  spec.validate();
  if (img.width != lab.width || img.height != lab.height)
    throw DataError("extract_patches: image/label dimensions differ");
  if (jitter_offset < 0 || jitter_offset > spec.jitter)
    throw ConfigError("extract_patches: jitter offset out of range");
  auto xs = patch_axis_origins(img.width, spec.window, spec.stride, jitter_offset);
  auto ys = patch_axis_origins(img.height, spec.window, spec.stride, jitter_offset);
  std::vector<Patch> out;
  out.reserve(xs.size() * ys.size());
  for (int y0 : ys)
    for (int x0 : xs) out.push_back(crop_patch(img, lab, x0, y0, spec.window));
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation. Geometry is restricted to operations that can only grow the
// unlabeled set: right-angle rotations and flips permute pixels, and the
// axis shears translate whole rows/columns by integer amounts under
// nearest-neighbor label resampling, voiding anything shifted in from
// outside the patch.
// ---------------------------------------------------------------------------

struct AugmentSpec {
  bool rot90 = true;
  bool flip_h = true;
  bool flip_v = true;
  double max_shear = 0.08;            // max |slope| (pixels of drift per pixel)
  double max_intensity_shift = 0.05;  // additive, clipped to [0,1]

  void validate() const {
    if (max_shear < 0.0 || max_shear >= 1.0)
      throw ConfigError("AugmentSpec: max_shear must be in [0, 1)");
    if (max_intensity_shift < 0.0 || max_intensity_shift > 1.0)
      throw ConfigError("AugmentSpec: max_intensity_shift must be in [0, 1]");
  }
};

// A sampled transform; applying the default-constructed draw is a bitwise
// identity.
struct AugmentDraw {
  int rot_quarter = 0;         // CCW quarter turns, 0..3
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int shear_axis = 0;          // 0 none, 1 rows shift in x, 2 columns shift in y
  double shear_slope = 0.0;
  double intensity_shift = 0.0;
};

inline AugmentDraw draw_augment(const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  AugmentDraw d;
  if (spec.rot90) d.rot_quarter = static_cast<int>(rng.uniform_int(4));
  if (spec.flip_h) d.flip_horizontal = rng.bernoulli(0.5);
  if (spec.flip_v) d.flip_vertical = rng.bernoulli(0.5);
  if (spec.max_shear > 0.0) {
    d.shear_axis = static_cast<int>(rng.uniform_int(3));
    if (d.shear_axis != 0)
      d.shear_slope = rng.uniform(-spec.max_shear, spec.max_shear);
  }
  if (spec.max_intensity_shift > 0.0)
    d.intensity_shift = rng.uniform(-spec.max_intensity_shift, spec.max_intensity_shift);
  return d;
}

namespace detail {

// One CCW quarter turn: out(x, y) = in(W - 1 - y, x); out is H x W when in
// is W x H.
inline void rot90_once(const Mosaic& in, const LabelMap& lin, Mosaic& out,
                       LabelMap& lout) {
  out = Mosaic(in.height, in.width);
  out.resolution_um = in.resolution_um;
  lout = LabelMap(in.height, in.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = in.at(in.width - 1 - y, x);
      lout.at(x, y) = lin.at(in.width - 1 - y, x);
    }
}

}  // namespace detail

inline void apply_augment(Mosaic& img, LabelMap& lab, const AugmentDraw& d) {
  if (img.width != lab.width || img.height != lab.height)
    throw DataError("apply_augment: image/label dimensions differ");
  for (int r = 0; r < d.rot_quarter; ++r) {
    Mosaic tmp_img;
    LabelMap tmp_lab;
    detail::rot90_once(img, lab, tmp_img, tmp_lab);
    img = std::move(tmp_img);
    lab = std::move(tmp_lab);
  }
  if (d.flip_horizontal) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width / 2; ++x) {
        std::swap(img.at(x, y), img.at(img.width - 1 - x, y));
        std::swap(lab.at(x, y), lab.at(img.width - 1 - x, y));
      }
  }
  if (d.flip_vertical) {
    for (int y = 0; y < img.height / 2; ++y)
      for (int x = 0; x < img.width; ++x) {
        std::swap(img.at(x, y), img.at(x, img.height - 1 - y));
        std::swap(lab.at(x, y), lab.at(x, img.height - 1 - y));
      }
  }
  if (d.shear_axis == 1 && d.shear_slope != 0.0) {
    // Rows drift along x proportionally to their distance from the center
    // row. Labels move by the rounded offset; image samples linearly with
    // reflected borders.
    Mosaic src_img = img;
    LabelMap src_lab = lab;
    const double cy = (img.height - 1) / 2.0;
    for (int y = 0; y < img.height; ++y) {
      const double off = d.shear_slope * (y - cy);
      const long t = std::lround(off);
      for (int x = 0; x < img.width; ++x) {
        const long sx = x - t;
        lab.at(x, y) = (sx >= 0 && sx < lab.width)
                           ? src_lab.at(static_cast<int>(sx), y)
                           : kUnlabeled;
        const double xs = x - off;
        const int x0 = static_cast<int>(std::floor(xs));
        const double f = xs - x0;
        const float v0 = src_img.at(detail::reflect_index(x0, img.width), y);
        const float v1 = src_img.at(detail::reflect_index(x0 + 1, img.width), y);
        img.at(x, y) = static_cast<float>((1.0 - f) * v0 + f * v1);
      }
    }
  } else if (d.shear_axis == 2 && d.shear_slope != 0.0) {
    Mosaic src_img = img;
    LabelMap src_lab = lab;
    const double cx = (img.width - 1) / 2.0;
    for (int x = 0; x < img.width; ++x) {
      const double off = d.shear_slope * (x - cx);
      const long t = std::lround(off);
      for (int y = 0; y < img.height; ++y) {
        const long sy = y - t;
        lab.at(x, y) = (sy >= 0 && sy < lab.height)
                           ? src_lab.at(x, static_cast<int>(sy))
                           : kUnlabeled;
        const double ys = y - off;
        const int y0 = static_cast<int>(std::floor(ys));
        const double f = ys - y0;
        const float v0 = src_img.at(x, detail::reflect_index(y0, img.height));
        const float v1 = src_img.at(x, detail::reflect_index(y0 + 1, img.height));
        img.at(x, y) = static_cast<float>((1.0 - f) * v0 + f * v1);
      }
    }
  }
  if (d.intensity_shift != 0.0) {
    const float s = static_cast<float>(d.intensity_shift);
    for (auto& v : img.px) v = std::min(1.0f, std::max(0.0f, v + s));
  }
}

inline std::size_t count_unlabeled(const LabelMap& lab) {
  std::size_t n = 0;
  for (auto v : lab.lab)
    if (v == kUnlabeled) ++n;
  return n;
}

// Accumulates labeled-pixel counts per class; rejects indices >= k_classes.
inline void count_class_pixels(const LabelMap& lab, int k_classes,
                               std::vector<std::uint64_t>& counts) {
  if (static_cast<int>(counts.size()) != k_classes)
    counts.assign(k_classes, 0);
  for (auto v : lab.lab) {
    if (v == kUnlabeled) continue;
    if (v >= k_classes)
      throw DataError("label index " + std::to_string(int(v)) +
                      " outside class table of size " + std::to_string(k_classes));
    ++counts[v];
  }
}

// ---------------------------------------------------------------------------
// Dataset manifests: one "image<TAB>labels" pair per line, '#' comments and
// blank lines ignored, relative paths resolved against the manifest's
// directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string image;
  std::string labels;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": expected image<TAB>labels");
    auto resolve = [&](std::string s) {
      std::filesystem::path p(s);
      return p.is_absolute() ? p.string() : (base / p).string();
    };
    out.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
  }
  if (out.empty()) throw DataError("manifest has no entries: " + path);
  return out;
}

inline void write_manifest(const std::string& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot create manifest: " + path);
  for (const auto& e : entries) out << e.image << '\t' << e.labels << '\n';
  if (!out) throw DataError("manifest write failed: " + path);
}

}  // namespace munet
