#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "munet/core.hpp"
#include "munet/data.hpp"
#include "munet/imageio.hpp"
#include "munet/rng.hpp"

namespace munet {

// Procedural 6-class texture world used for pipeline verification: a
// jittered-grid Voronoi partition where each cell carries one of six visually
// distinct textures. Fully determined by (seed, image index), regardless of
// platform.
struct SynthSpec {
  int width = 512;
  int height = 512;
  int cell = 96;                 // Voronoi site lattice pitch
  double labeled_fraction = 0.7; // probability a pixel keeps its label
  double noise = 0.02;           // additive uniform noise amplitude

  void validate() const {
    if (width < 32 || height < 32) throw ConfigError("SynthSpec: image too small");
    if (cell < 16) throw ConfigError("SynthSpec: cell too small");
    if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
      throw ConfigError("SynthSpec: labeled_fraction must be in (0, 1]");
    if (noise < 0.0 || noise > 0.2) throw ConfigError("SynthSpec: noise out of range");
  }
};

struct SynthSample {
  Mosaic image;
  LabelMap labels;       // partially voided per labeled_fraction
  LabelMap full_labels;  // complete ground truth
};

namespace detail {

inline constexpr int kSynthClasses = 6;

struct TexParams {
  double streak_cos, streak_sin, streak_phase;  // class 1
  double weave_pa, weave_pb;                    // class 2
  double smooth_ax, smooth_ay, smooth_phase;    // class 0
  std::uint64_t salt;                           // lattice jitter + speckle
};

inline TexParams draw_tex_params(std::uint64_t seed, std::uint64_t index) {
  Rng rng(seed, hash_mix(0x7465787475726573ull, index));
  TexParams p;
  double theta = rng.uniform(20.0, 70.0) * M_PI / 180.0;
  p.streak_cos = std::cos(theta);
  p.streak_sin = std::sin(theta);
  p.streak_phase = rng.uniform(0.0, 2.0 * M_PI);
  p.weave_pa = rng.uniform(0.0, 2.0 * M_PI);
  p.weave_pb = rng.uniform(0.0, 2.0 * M_PI);
  double dir = rng.uniform(0.0, 2.0 * M_PI);
  p.smooth_ax = std::cos(dir) / 64.0;
  p.smooth_ay = std::sin(dir) / 64.0;
  p.smooth_phase = rng.uniform(0.0, 2.0 * M_PI);
  p.salt = hash_mix(seed, index ^ 0x1234abcdull);
  return p;
}

// Jittered lattice point for integer cell (cx, cy): cell center plus a
// hash-derived offset in [-jit, jit] on each axis.
inline void lattice_site(std::uint64_t salt, int pitch, int jit, int cx, int cy,
                         double& sx, double& sy) {
  std::uint64_t h =
      hash_mix(salt, (static_cast<std::uint64_t>(cx) * 0x9e3779b97f4a7c15ull) ^
                         (static_cast<std::uint64_t>(cy) + 0x632be59bd9b4e019ull));
  sx = cx * pitch + pitch / 2.0 + (hash_uniform(h) * 2.0 - 1.0) * jit;
  sy = cy * pitch + pitch / 2.0 + (hash_uniform(splitmix64(h)) * 2.0 - 1.0) * jit;
}

// Squared distance from (x, y) to the nearest jittered lattice site within a
// 3x3 cell neighborhood.
inline double nearest_lattice_d2(std::uint64_t salt, int pitch, int jit, double x,
                                 double y) {
  int cx = static_cast<int>(std::floor(x / pitch));
  int cy = static_cast<int>(std::floor(y / pitch));
  double best = 1e30;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      double sx, sy;
      lattice_site(salt, pitch, jit, cx + dx, cy + dy, sx, sy);
      double d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
      if (d2 < best) best = d2;
    }
  return best;
}

inline double texture_value(int cls, int x, int y, const TexParams& p) {
  switch (cls) {
    case 0: {  // dark, slowly varying
      double t = std::sin(2.0 * M_PI * (x * p.smooth_ax + y * p.smooth_ay) + p.smooth_phase);
      return 0.12 + 0.04 * t;
    }
    case 1: {  // oblique bright streaks on a dark base
      double t = std::sin(2.0 * M_PI * (x * p.streak_cos + y * p.streak_sin) / 9.0 +
                          p.streak_phase);
      return t > 0.8 ? 0.95 : 0.20;
    }
    case 2: {  // mid-gray plaid weave
      return 0.5 + 0.3 * std::sin(2.0 * M_PI * x / 12.0 + p.weave_pa) *
                       std::sin(2.0 * M_PI * y / 12.0 + p.weave_pb);
    }
    case 3: {  // bright filled discs
      double d2 = nearest_lattice_d2(p.salt ^ 0x11d, 20, 4, x, y);
      return d2 <= 7.5 * 7.5 ? 0.90 : 0.35;
    }
    case 4: {  // bright rings with dark interior on a dark base
      double d2 = nearest_lattice_d2(p.salt ^ 0x22d, 22, 4, x, y);
      if (d2 <= 5.5 * 5.5) return 0.40;
      if (d2 <= 8.0 * 8.0) return 0.95;
      return 0.15;
    }
    default: {  // per-pixel speckle
      std::uint64_t h = hash_mix(p.salt, (static_cast<std::uint64_t>(y) << 24) ^
                                             static_cast<std::uint64_t>(x));
      return 0.15 + 0.8 * hash_uniform(h);
    }
  }
}

}  // namespace detail

inline SynthSample generate_synthetic(const SynthSpec& spec, std::uint64_t seed,
                                      std::uint64_t index) {
  spec.validate();
  const int gw = (spec.width + spec.cell - 1) / spec.cell;
  const int gh = (spec.height + spec.cell - 1) / spec.cell;
  const int n_sites = gw * gh;
  if (n_sites < detail::kSynthClasses)
    throw ConfigError("generate_synthetic: image too small for six textures");

  Rng rng(seed, hash_mix(0x766f726f6e6f69ull, index));
  // Jittered-grid Voronoi sites. Classes are dealt round-robin onto a
  // shuffled site order, so every class owns at least one cell per image.
  std::vector<double> sx(n_sites), sy(n_sites);
  std::vector<std::uint8_t> site_class(n_sites);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      int i = gy * gw + gx;
      sx[i] = gx * spec.cell + spec.cell * rng.uniform(0.2, 0.8);
      sy[i] = gy * spec.cell + spec.cell * rng.uniform(0.2, 0.8);
    }
  std::vector<int> order(n_sites);
  for (int i = 0; i < n_sites; ++i) order[i] = i;
  rng.shuffle(order);
  for (int i = 0; i < n_sites; ++i)
    site_class[order[i]] = static_cast<std::uint8_t>(i % detail::kSynthClasses);

  detail::TexParams tex = detail::draw_tex_params(seed, index);
  std::uint64_t void_salt = hash_mix(seed, 0x756e6c6162ull ^ index);
  std::uint64_t noise_salt = hash_mix(seed, 0x6e6f697365ull ^ index);

  SynthSample out;
  out.image = Mosaic(spec.width, spec.height);
  out.labels = LabelMap(spec.width, spec.height);
  out.full_labels = LabelMap(spec.width, spec.height);

  for (int y = 0; y < spec.height; ++y) {
    int gy0 = y / spec.cell;
    for (int x = 0; x < spec.width; ++x) {
      int gx0 = x / spec.cell;
      // Nearest site among the 5x5 cell neighborhood (jitter keeps sites
      // inside their cells, so this neighborhood always contains the
      // nearest). Ties go to the lowest site index.
      int best = -1;
      double best_d2 = 1e30;
      for (int dy = -2; dy <= 2; ++dy) {
        int cy = gy0 + dy;
        if (cy < 0 || cy >= gh) continue;
        for (int dx = -2; dx <= 2; ++dx) {
          int cx = gx0 + dx;
          if (cx < 0 || cx >= gw) continue;
          int i = cy * gw + cx;
          double d2 = (x - sx[i]) * (x - sx[i]) + (y - sy[i]) * (y - sy[i]);
          if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best_d2 = d2;
            best = i;
          }
        }
      }
      std::uint8_t cls = site_class[best];
      double v = detail::texture_value(cls, x, y, tex);
      if (spec.noise > 0.0) {
        std::uint64_t h = hash_mix(noise_salt, (static_cast<std::uint64_t>(y) << 24) ^
                                                   static_cast<std::uint64_t>(x));
        v += (hash_uniform(h) * 2.0 - 1.0) * spec.noise;
      }
      out.image.at(x, y) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      out.full_labels.at(x, y) = cls;
      std::uint64_t hv = hash_mix(void_salt, (static_cast<std::uint64_t>(y) << 24) ^
                                                 static_cast<std::uint64_t>(x));
      out.labels.at(x, y) =
          hash_uniform(hv) < spec.labeled_fraction ? cls : kUnlabeled;
    }
  }
  return out;
}

// Writes a ready-to-train dataset: 16-bit grayscale images, indexed label
// maps, a class table, and a manifest. Returns the manifest path.
inline std::string materialize_synthetic_dataset(const std::string& dir, int count,
                                                 const SynthSpec& spec,
                                                 std::uint64_t seed,
                                                 const ClassTable& table) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "labels");
  std::vector<ManifestEntry> entries;
  char name[64];
  for (int i = 0; i < count; ++i) {
    SynthSample s = generate_synthetic(spec, seed, static_cast<std::uint64_t>(i));
    std::snprintf(name, sizeof name, "images/img_%04d.png", i);
    std::string img_rel = name;
    std::snprintf(name, sizeof name, "labels/lab_%04d.png", i);
    std::string lab_rel = name;
    write_mosaic_png16((fs::path(dir) / img_rel).string(), s.image);
    write_label_png((fs::path(dir) / lab_rel).string(), s.labels, table);
    entries.push_back({img_rel, lab_rel});
  }
  table.save((fs::path(dir) / "classes.txt").string());
  std::string manifest = (fs::path(dir) / "manifest.txt").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace munet
