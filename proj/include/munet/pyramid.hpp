#pragma once

#include <string>
#include <vector>

#include "munet/core.hpp"
#include "munet/interp.hpp"

namespace munet {

// Dyadic image pyramid: level m is the input downsampled by 2^m, one 2x2
// mean-pooling step per level. Odd dimensions round up; the ragged border
// replicates the edge row/column.
inline std::vector<Mosaic> downsample_image(const Mosaic& img, int levels) {
  if (levels < 1) throw ConfigError("downsample_image: levels must be >= 1");
  int min_dim = 1 << (levels - 1);
  if (img.width < min_dim || img.height < min_dim)
    throw DataError("downsample_image: image " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + " too small for " +
                    std::to_string(levels) + " levels");
  std::vector<Mosaic> out;
  out.reserve(levels);
  out.push_back(img);
  for (int m = 1; m < levels; ++m) {
    const Mosaic& src = out.back();
    Mosaic dst((src.width + 1) / 2, (src.height + 1) / 2);
    dst.resolution_um = src.resolution_um * 2.0;
    for (int y = 0; y < dst.height; ++y) {
      int y0 = 2 * y, y1 = std::min(2 * y + 1, src.height - 1);
      for (int x = 0; x < dst.width; ++x) {
        int x0 = 2 * x, x1 = std::min(2 * x + 1, src.width - 1);
        dst.at(x, y) = 0.25f * (src.at(x0, y0) + src.at(x1, y0) +
                                src.at(x0, y1) + src.at(x1, y1));
      }
    }
    out.push_back(std::move(dst));
  }
  return out;
}

// Label pyramid by nearest-neighbor subsampling: level m+1 keeps the
// top-left pixel of each 2x2 block. Never invents a class; the unlabeled
// sentinel propagates like any other value.
inline std::vector<LabelMap> downsample_labels(const LabelMap& labels, int levels) {
  if (levels < 1) throw ConfigError("downsample_labels: levels must be >= 1");
  int min_dim = 1 << (levels - 1);
  if (labels.width < min_dim || labels.height < min_dim)
    throw DataError("downsample_labels: map too small for " +
                    std::to_string(levels) + " levels");
  std::vector<LabelMap> out;
  out.reserve(levels);
  out.push_back(labels);
  for (int m = 1; m < levels; ++m) {
    const LabelMap& src = out.back();
    LabelMap dst((src.width + 1) / 2, (src.height + 1) / 2);
    for (int y = 0; y < dst.height; ++y)
      for (int x = 0; x < dst.width; ++x)
        dst.at(x, y) = src.at(2 * x, 2 * y);
    out.push_back(std::move(dst));
  }
  return out;
}

inline Pyramid build_pyramid(const Mosaic& img, const LabelMap& labels, int levels) {
  if (img.width != labels.width || img.height != labels.height)
    throw DataError("build_pyramid: image and label dimensions differ");
  Pyramid p;
  p.images = downsample_image(img, levels);
  p.labels = downsample_labels(labels, levels);
  return p;
}

// Doubles a probability field with per-channel bilinear interpolation, then
// renormalizes each pixel onto the simplex (interpolation keeps it there up
// to rounding; the renormalization cleans that up).
inline ProbabilityMap upsample_probability(const ProbabilityMap& prob, int factor = 2) {
  if (factor != 2)
    throw ConfigError("upsample_probability: only factor 2 is supported");
  ProbabilityMap out(prob.width * 2, prob.height * 2, prob.channels);
  for (int k = 0; k < prob.channels; ++k)
    detail::upsample2x_plane(prob.plane(k), prob.width, prob.height, out.plane(k));
  std::size_t n = out.pixels();
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int k = 0; k < out.channels; ++k) s += out.v[k * n + p];
    if (s > 0.0) {
      double inv = 1.0 / s;
      for (int k = 0; k < out.channels; ++k) out.v[k * n + p] *= inv;
    }
  }
  return out;
}

}  // namespace munet
