#pragma once

#include <functional>
#include <vector>

#include "munet/core.hpp"
#include "munet/interp.hpp"
#include "munet/model.hpp"
#include "munet/pyramid.hpp"

namespace munet {

// Integer stride implied by a fractional window overlap. Rejects overlaps
// that do not land on a whole number of pixels.
inline int window_stride(int window, double overlap) {
  if (window < 1) throw ConfigError("window_stride: window must be positive");
  if (overlap < 0.0 || overlap >= 1.0)
    throw ConfigError("window_stride: overlap must be in [0, 1)");
  double s = window * (1.0 - overlap);
  long r = std::lround(s);
  if (r < 1 || std::abs(s - static_cast<double>(r)) > 1e-9)
    throw ConfigError("window_stride: overlap does not yield an integer stride");
  return static_cast<int>(r);
}

// Origins along one axis: the stride grid {0, s, 2s, ...} capped at
// extent - window, plus a flush origin at extent - window when the grid does
// not land there. Guarantees first == 0, last == extent - window, and
// consecutive gaps <= stride.
inline std::vector<int> window_axis_origins(int extent, int window, int stride) {
  if (extent < window)
    throw ConfigError("window_axis_origins: extent smaller than window");
  std::vector<int> out;
  for (int o = 0; o <= extent - window; o += stride) out.push_back(o);
  if (out.back() != extent - window) out.push_back(extent - window);
  return out;
}

// Full 2-D grid of window origins.
inline std::vector<std::pair<int, int>> window_grid(int width, int height, int window,
                                                    double overlap) {
  int stride = window_stride(window, overlap);
  auto xs = window_axis_origins(width, window, stride);
  auto ys = window_axis_origins(height, window, stride);
  std::vector<std::pair<int, int>> out;
  out.reserve(xs.size() * ys.size());
  for (int y0 : ys)
    for (int x0 : xs) out.emplace_back(x0, y0);
  return out;
}

// Per-pixel window multiplicity for the grid (how many windows average into
// each output pixel).
inline std::vector<std::uint32_t> stitch_coverage(int width, int height, int window,
                                                  double overlap) {
  std::vector<std::uint32_t> cnt(static_cast<std::size_t>(width) * height, 0);
  for (auto [x0, y0] : window_grid(width, height, window, overlap))
    for (int y = y0; y < y0 + window; ++y)
      for (int x = x0; x < x0 + window; ++x)
        ++cnt[static_cast<std::size_t>(y) * width + x];
  return cnt;
}

// Mirror-pads (reflect-101) an image so both dims reach at least the window.
inline Mosaic reflect_pad_to(const Mosaic& m, int min_w, int min_h) {
  int ow = std::max(m.width, min_w), oh = std::max(m.height, min_h);
  Mosaic out(ow, oh);
  out.resolution_um = m.resolution_um;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out.at(x, y) = m.at(detail::reflect_index(x, m.width),
                          detail::reflect_index(y, m.height));
  return out;
}

// Predicts class probabilities for one window-sized image crop.
using WindowPredictor = std::function<ProbabilityMap(const Mosaic&)>;

// Sliding-window inference: run the predictor on every grid window and
// average overlapping probabilities per pixel in double precision. Images
// smaller than the window are reflect-padded, predicted, and cropped back.
inline ProbabilityMap stitch_predict(const Mosaic& mosaic, int window, double overlap,
                                     int k_classes, const WindowPredictor& predict) {
  if (k_classes < 1) throw ConfigError("stitch_predict: need at least one class");
  if (mosaic.width < window || mosaic.height < window) {
    Mosaic padded = reflect_pad_to(mosaic, window, window);
    ProbabilityMap full = stitch_predict(padded, window, overlap, k_classes, predict);
    ProbabilityMap out(mosaic.width, mosaic.height, k_classes);
    for (int k = 0; k < k_classes; ++k)
      for (int y = 0; y < mosaic.height; ++y)
        for (int x = 0; x < mosaic.width; ++x)
          out.at(x, y, k) = full.at(x, y, k);
    return out;
  }

  ProbabilityMap acc(mosaic.width, mosaic.height, k_classes);
  std::vector<std::uint32_t> cnt(mosaic.size(), 0);
  for (auto [x0, y0] : window_grid(mosaic.width, mosaic.height, window, overlap)) {
    Mosaic crop(window, window);
    crop.resolution_um = mosaic.resolution_um;
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x) crop.at(x, y) = mosaic.at(x0 + x, y0 + y);
    ProbabilityMap p = predict(crop);
    if (p.width != window || p.height != window || p.channels != k_classes)
      throw DataError("stitch_predict: predictor returned wrong shape");
    for (int k = 0; k < k_classes; ++k)
      for (int y = 0; y < window; ++y)
        for (int x = 0; x < window; ++x)
          acc.at(x0 + x, y0 + y, k) += p.at(x, y, k);
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x)
        ++cnt[static_cast<std::size_t>(y0 + y) * mosaic.width + x0 + x];
  }
  for (int k = 0; k < k_classes; ++k) {
    double* pl = acc.plane(k);
    for (std::size_t i = 0; i < mosaic.size(); ++i) pl[i] /= cnt[i];
  }
  return acc;
}

// Runs the model on one window: build the image pyramid for the crop, feed
// all levels, return the finest-level probabilities.
template <typename T>
ProbabilityMap predict_window(MUNet<T>& model, const Mosaic& window_img) {
  if (window_img.width != model.cfg.input_window ||
      window_img.height != model.cfg.input_window)
    throw ConfigError("predict_window: crop does not match model input window");
  auto levels = downsample_image(window_img, model.cfg.levels);
  std::vector<Tensor<T>> images(levels.size());
  for (std::size_t m = 0; m < levels.size(); ++m)
    images[m] = mosaic_to_tensor<T>(levels[m]);
  model.forward(images, /*training=*/false);
  return ProbabilityMap(field_from_tensor(model.probs(0), 0));
}

// Whole-mosaic inference with overlap averaging.
template <typename T>
ProbabilityMap predict_mosaic(MUNet<T>& model, const Mosaic& mosaic, double overlap) {
  return stitch_predict(mosaic, model.cfg.input_window, overlap, model.cfg.classes,
                        [&](const Mosaic& crop) { return predict_window(model, crop); });
}

// Hard labels from probabilities; ties resolve to the lowest class index.
inline LabelMap argmax_labels(const ProbabilityMap& prob) {
  LabelMap out(prob.width, prob.height);
  const std::size_t px = prob.pixels();
  for (std::size_t i = 0; i < px; ++i) {
    int best = 0;
    double bv = prob.v[i];
    for (int k = 1; k < prob.channels; ++k) {
      double v = prob.plane(k)[i];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    out.lab[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace munet
