#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace munet {

// Sentinel for pixels without ground-truth annotation. Lives in the same
// 8-bit space as class indices, well clear of any plausible class count.
inline constexpr std::uint8_t kUnlabeled = 255;

// Bad configuration (flags, config files, incompatible checkpoints).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad data (files, labels, shape mismatches).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Images and labels
// ---------------------------------------------------------------------------

// Single-channel intensity image, values in [0,1].
struct Mosaic {
  int width = 0;
  int height = 0;
  double resolution_um = 1.0;  // micrometers per pixel, metadata only
  std::vector<float> px;

  Mosaic() = default;
  Mosaic(int w, int h, float fill = 0.0f)
      : width(w), height(h), px(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return px.size(); }
};

// Per-pixel class index in {0..K-1} or kUnlabeled.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> lab;

  LabelMap() = default;
  LabelMap(int w, int h, std::uint8_t fill = kUnlabeled)
      : width(w), height(h), lab(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return lab[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return lab[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return lab.size(); }
};

// ---------------------------------------------------------------------------
// Class table
// ---------------------------------------------------------------------------

using Rgb = std::array<std::uint8_t, 3>;

// Names the K classes and assigns display colors. The palette carries one
// extra entry for the unlabeled sentinel.
struct ClassTable {
  std::vector<std::string> names;  // K entries
  std::vector<Rgb> palette;        // K+1 entries; last one is the unlabeled color

  int num_classes() const { return static_cast<int>(names.size()); }

  void validate() const {
    if (names.empty()) throw ConfigError("class table: no classes");
    if (palette.size() != names.size() + 1)
      throw ConfigError("class table: palette must have K+1 entries");
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j)
        if (names[i] == names[j])
          throw ConfigError("class table: duplicate name '" + names[i] + "'");
  }

  static ClassTable default_six() {
    ClassTable t;
    t.names = {"background", "artifact", "meshwork", "nested", "ring", "aspecific"};
    t.palette = {Rgb{40, 40, 48},   Rgb{160, 160, 160}, Rgb{64, 160, 64},
                 Rgb{200, 80, 64},  Rgb{72, 104, 208},  Rgb{176, 64, 176},
                 Rgb{255, 255, 0}};  // unlabeled: yellow
    return t;
  }

  // Placeholder table when only the class count is known; colors are spread
  // around the hue wheel.
  static ClassTable generic(int k) {
    if (k < 1) throw ConfigError("class table: K must be >= 1");
    ClassTable t;
    for (int i = 0; i < k; ++i) {
      t.names.push_back("class" + std::to_string(i));
      double h = 6.0 * i / k;
      int seg = static_cast<int>(h);
      double f = h - seg;
      auto b = [](double v) { return static_cast<std::uint8_t>(40 + 180 * v); };
      switch (seg % 6) {
        case 0: t.palette.push_back(Rgb{b(1), b(f), b(0)}); break;
        case 1: t.palette.push_back(Rgb{b(1 - f), b(1), b(0)}); break;
        case 2: t.palette.push_back(Rgb{b(0), b(1), b(f)}); break;
        case 3: t.palette.push_back(Rgb{b(0), b(1 - f), b(1)}); break;
        case 4: t.palette.push_back(Rgb{b(f), b(0), b(1)}); break;
        default: t.palette.push_back(Rgb{b(1), b(0), b(1 - f)}); break;
      }
    }
    t.palette.push_back(Rgb{255, 255, 0});
    return t;
  }

  // Text manifest: one "name #RRGGBB" line per class, then one final line
  // for the unlabeled color (its name is not a class).
  void save(const std::string& path) const;
  static ClassTable load(const std::string& path);
};

inline std::string to_hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", c[0], c[1], c[2]);
  return buf;
}

inline Rgb parse_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#')
    throw DataError("class table: bad color '" + s + "'");
  auto hex = [&](int i) {
    return static_cast<std::uint8_t>(std::stoi(s.substr(i, 2), nullptr, 16));
  };
  return Rgb{hex(1), hex(3), hex(5)};
}

inline void ClassTable::save(const std::string& path) const {
  validate();
  std::ofstream f(path);
  if (!f) throw DataError("cannot write class table: " + path);
  for (std::size_t i = 0; i < names.size(); ++i)
    f << names[i] << ' ' << to_hex(palette[i]) << '\n';
  f << "unlabeled " << to_hex(palette.back()) << '\n';
}

inline ClassTable ClassTable::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read class table: " + path);
  ClassTable t;
  std::string line;
  std::vector<std::pair<std::string, Rgb>> rows;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string name, color;
    if (!(is >> name >> color)) throw DataError("class table: bad line '" + line + "'");
    rows.emplace_back(name, parse_hex_color(color));
  }
  if (rows.size() < 2) throw DataError("class table: need at least one class plus unlabeled");
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    t.names.push_back(rows[i].first);
    t.palette.push_back(rows[i].second);
  }
  t.palette.push_back(rows.back().second);
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Channel fields and probability maps
// ---------------------------------------------------------------------------

// W x H x K real field, stored as K planes (k-major). General container for
// per-pixel channel data: probabilities, logits, gradients.
struct ChannelField {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> v;

  ChannelField() = default;
  ChannelField(int w, int h, int k, double fill = 0.0)
      : width(w), height(h), channels(k),
        v(static_cast<std::size_t>(w) * h * k, fill) {}

  double& at(int x, int y, int k) {
    return v[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  double at(int x, int y, int k) const {
    return v[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  double* plane(int k) { return v.data() + static_cast<std::size_t>(k) * height * width; }
  const double* plane(int k) const {
    return v.data() + static_cast<std::size_t>(k) * height * width;
  }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

// ChannelField that is supposed to hold a per-pixel simplex over classes.
struct ProbabilityMap : ChannelField {
  ProbabilityMap() = default;
  ProbabilityMap(int w, int h, int k, double fill = 0.0) : ChannelField(w, h, k, fill) {}
  explicit ProbabilityMap(ChannelField f) : ChannelField(std::move(f)) {}

  static ProbabilityMap constant(int w, int h, const std::vector<double>& p) {
    ProbabilityMap m(w, h, static_cast<int>(p.size()));
    for (int k = 0; k < m.channels; ++k) {
      double* pl = m.plane(k);
      std::fill(pl, pl + m.pixels(), p[k]);
    }
    return m;
  }

  // Largest violation of the simplex constraints (channel sum vs 1, range).
  double max_simplex_error() const {
    double worst = 0.0;
    for (std::size_t p = 0; p < pixels(); ++p) {
      double s = 0.0;
      for (int k = 0; k < channels; ++k) {
        double x = v[static_cast<std::size_t>(k) * pixels() + p];
        s += x;
        if (x < 0.0) worst = std::max(worst, -x);
        if (x > 1.0) worst = std::max(worst, x - 1.0);
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  }

  bool is_valid(double tol = 1e-5) const { return max_simplex_error() <= tol; }
};

// Aligned image/label pyramid, level m downsampled 2^m from level 0.
struct Pyramid {
  std::vector<Mosaic> images;
  std::vector<LabelMap> labels;

  int levels() const { return static_cast<int>(images.size()); }
};

// ---------------------------------------------------------------------------
// Configuration records
// ---------------------------------------------------------------------------

struct LossConfig {
  std::vector<double> alpha;  // K class weights, normalized to sum to 1
  std::vector<double> beta;   // M level weights, must sum to 1
  double epsilon = 1e-5;
  bool classic_factor2 = false;  // restore the factor 2 of the binary Dice form

  // Level-weight default: 0.8, then a fifth of the previous level, with the
  // remainder assigned to the deepest level so the weights sum to 1.
  static std::vector<double> default_beta(int levels) {
    if (levels < 1) throw ConfigError("loss: levels must be >= 1");
    std::vector<double> b(levels, 0.0);
    double used = 0.0, w = 0.8;
    for (int m = 0; m + 1 < levels; ++m, w *= 0.2) {
      b[m] = w;
      used += w;
    }
    b[levels - 1] = 1.0 - used;
    return b;
  }

  void validate() const {
    if (epsilon <= 0.0) throw ConfigError("loss: epsilon must be positive");
    if (alpha.empty() || beta.empty()) throw ConfigError("loss: alpha/beta unset");
    double sa = 0.0;
    for (double a : alpha) {
      if (a < 0.0) throw ConfigError("loss: negative class weight");
      sa += a;
    }
    if (std::abs(sa - 1.0) > 1e-9)
      throw ConfigError("loss: class weights must sum to 1");
    double sb = 0.0;
    for (double b : beta) {
      if (b < 0.0) throw ConfigError("loss: negative level weight");
      sb += b;
    }
    if (std::abs(sb - 1.0) > 1e-9)
      throw ConfigError("loss: level weights must sum to 1");
  }
};

struct ModelConfig {
  int levels = 3;         // nesting count M; 1 gives a plain U-Net
  int classes = 6;        // K
  int base_channels = 24; // width of the shallowest filter bank
  int max_depth = 4;      // encoder depth of the full-resolution subnetwork
  int input_window = 256;

  int depth_of_level(int m) const { return std::max(1, max_depth - m); }

  void validate() const {
    if (levels < 1) throw ConfigError("model: levels must be >= 1");
    if (classes < 2) throw ConfigError("model: need at least 2 classes");
    if (base_channels < 1) throw ConfigError("model: base_channels must be >= 1");
    if (max_depth < 1) throw ConfigError("model: max_depth must be >= 1");
    int div = 1 << max_depth;
    if (input_window <= 0 || input_window % div != 0)
      throw ConfigError("model: input_window must be a positive multiple of 2^max_depth");
    for (int m = 0; m < levels; ++m) {
      int w = input_window >> m;
      if (w < (1 << depth_of_level(m)) || (input_window % (1 << m)) != 0 ||
          w % (1 << depth_of_level(m)) != 0)
        throw ConfigError("model: level " + std::to_string(m) +
                          " window is incompatible with its encoder depth");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

// ---------------------------------------------------------------------------
// One-hot expansion
// ---------------------------------------------------------------------------

struct MaskGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> m;

  MaskGrid() = default;
  MaskGrid(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), m(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return m[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return m[static_cast<std::size_t>(y) * width + x]; }
};

struct OneHotExpansion {
  ChannelField target;  // one-hot rows; all-zero where unlabeled
  MaskGrid mask;        // 1 where labeled
};

// Expands a label map into the one-hot target tensor and the labeled-pixel
// mask. Labels >= K are rejected with the offending pixel named.
inline OneHotExpansion one_hot_expand(const LabelMap& labels, int k_classes) {
  if (k_classes < 1) throw ConfigError("one_hot_expand: K must be >= 1");
  OneHotExpansion out;
  out.target = ChannelField(labels.width, labels.height, k_classes);
  out.mask = MaskGrid(labels.width, labels.height);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      std::uint8_t l = labels.at(x, y);
      if (l == kUnlabeled) continue;
      if (l >= k_classes) {
        throw DataError("one_hot_expand: label " + std::to_string(int(l)) +
                        " at pixel (" + std::to_string(x) + "," + std::to_string(y) +
                        ") is outside K=" + std::to_string(k_classes));
      }
      out.target.at(x, y, l) = 1.0;
      out.mask.at(x, y) = 1;
    }
  }
  return out;
}

}  // namespace munet
