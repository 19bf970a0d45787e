#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "munet/data.hpp"
#include "munet/dice.hpp"
#include "munet/imageio.hpp"
#include "munet/metrics.hpp"
#include "munet/model.hpp"
#include "munet/pyramid.hpp"
#include "munet/stitch.hpp"

namespace munet {

template <typename T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Tensor<T>> m_state, v_state;

  explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

  void init(const std::vector<ParamRef<T>>& params) {
    m_state.clear();
    v_state.clear();
    t = 0;
    for (const auto& p : params) {
      m_state.emplace_back(p.value->n, p.value->c, p.value->h, p.value->w);
      v_state.emplace_back(p.value->n, p.value->c, p.value->h, p.value->w);
    }
  }

  void step(const std::vector<ParamRef<T>>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& val = *params[i].value;
      const Tensor<T>& grad = *params[i].grad;
      Tensor<T>& m = m_state[i];
      Tensor<T>& v = v_state[i];
      for (std::size_t j = 0; j < val.size(); ++j) {
        double g = grad.v[j];
        double mj = beta1 * m.v[j] + (1.0 - beta1) * g;
        double vj = beta2 * v.v[j] + (1.0 - beta2) * g * g;
        m.v[j] = static_cast<T>(mj);
        v.v[j] = static_cast<T>(vj);
        val.v[j] -= static_cast<T>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    }
  }
};

struct Sample {
  Mosaic image;
  LabelMap labels;
};

inline std::vector<Sample> load_dataset(const std::vector<ManifestEntry>& entries) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Sample s;
    s.image = read_mosaic(e.image);
    s.labels = read_label_png(e.labels);
    if (s.image.width != s.labels.width || s.image.height != s.labels.height)
      throw DataError("image/label dimensions differ: " + e.image);
    out.push_back(std::move(s));
  }
  return out;
}

// Deterministic split: shuffle indices with the seed, take the head as
// validation. With fewer than two images (or fraction 0) everything trains.
inline void split_train_val(int n, double val_fraction, std::uint64_t seed,
                            std::vector<int>& train_idx, std::vector<int>& val_idx) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed, 0x5ba1a5ull);
  rng.shuffle(idx);
  int n_val = 0;
  if (n >= 2 && val_fraction > 0.0)
    n_val = std::max(1, static_cast<int>(std::llround(val_fraction * n)));
  if (n_val >= n) n_val = n - 1;
  val_idx.assign(idx.begin(), idx.begin() + n_val);
  train_idx.assign(idx.begin() + n_val, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

// Window-sized crop from the image center; smaller images are reflect-padded
// (labels pad as unlabeled).
inline Patch center_window(const Sample& s, int window) {
  if (s.image.width >= window && s.image.height >= window) {
    int x0 = (s.image.width - window) / 2;
    int y0 = (s.image.height - window) / 2;
    return crop_patch(s.image, s.labels, x0, y0, window);
  }
  Mosaic img = reflect_pad_to(s.image, window, window);
  LabelMap lab(img.width, img.height, kUnlabeled);
  for (int y = 0; y < s.labels.height; ++y)
    for (int x = 0; x < s.labels.width; ++x) lab.at(x, y) = s.labels.at(x, y);
  int x0 = (img.width - window) / 2;
  int y0 = (img.height - window) / 2;
  return crop_patch(img, lab, x0, y0, window);
}

// Cheap validation protocol: one centered window per image, predictions
// pooled into a single confusion matrix, mean dice over defined classes.
// Returns -1 when there is nothing to validate.
template <typename T>
double validation_dice(MUNet<T>& model, const std::vector<Sample>& data,
                       const std::vector<int>& val_idx) {
  if (val_idx.empty()) return -1.0;
  ConfusionMatrix cm(model.cfg.classes);
  for (int i : val_idx) {
    Patch p = center_window(data[i], model.cfg.input_window);
    ProbabilityMap prob = predict_window(model, p.image);
    cm.add(p.labels, argmax_labels(prob));
  }
  MetricsReport rep = compute_metrics(cm);
  return rep.mean_dice ? *rep.mean_dice : -1.0;
}

struct TrainOptions {
  int epochs = 2;
  double lr = 1e-3;
  int batch = 4;
  double val_fraction = 0.1;
  int patch_stride = 256;
  int patch_jitter = 0;
  bool augment = true;
  AugmentSpec augment_spec;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  bool verbose = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainOptions: epochs must be >= 1");
    if (lr <= 0.0) throw ConfigError("TrainOptions: lr must be positive");
    if (batch < 1) throw ConfigError("TrainOptions: batch must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
      throw ConfigError("TrainOptions: val_fraction must be in [0, 1)");
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_dice;  // -1 when no validation split
  int best_epoch = -1;                 // 1-based
  double best_val_dice = -1.0;
  std::vector<double> alpha;
  std::string best_checkpoint, last_checkpoint, log_path;
};

template <typename T>
TrainResult train_model(MUNet<T>& model, const std::vector<Sample>& data,
                        const TrainOptions& opt, LossConfig loss) {
  namespace fs = std::filesystem;
  opt.validate();
  if (data.empty()) throw DataError("train: dataset is empty");
  const int levels = model.cfg.levels;
  const int k_classes = model.cfg.classes;
  const int window = model.cfg.input_window;

  std::vector<int> train_idx, val_idx;
  split_train_val(static_cast<int>(data.size()), opt.val_fraction, opt.seed,
                  train_idx, val_idx);

  // Class weights from the training split unless supplied explicitly.
  if (loss.alpha.empty()) {
    std::vector<std::uint64_t> counts(k_classes, 0);
    for (int i : train_idx) count_class_pixels(data[i].labels, k_classes, counts);
    loss.alpha = compute_class_weights(counts);
  }
  if (loss.beta.empty()) loss.beta = LossConfig::default_beta(levels);
  loss.validate();
  if (static_cast<int>(loss.alpha.size()) != k_classes)
    throw ConfigError("train: alpha size does not match class count");
  if (static_cast<int>(loss.beta.size()) != levels)
    throw ConfigError("train: beta size does not match level count");

  PatchSpec pspec{window, opt.patch_stride, opt.patch_jitter};
  pspec.validate();

  model.init(opt.seed);
  std::vector<ParamRef<T>> params;
  model.visit_params([&](const ParamRef<T>& p) { params.push_back(p); });
  Adam<T> adam(opt.lr);
  adam.init(params);

  fs::create_directories(opt.out_dir);
  TrainResult result;
  result.alpha = loss.alpha;
  result.log_path = (fs::path(opt.out_dir) / "train.log").string();
  result.best_checkpoint = (fs::path(opt.out_dir) / "best.ckpt").string();
  result.last_checkpoint = (fs::path(opt.out_dir) / "last.ckpt").string();
  std::ofstream log(result.log_path);
  if (!log) throw DataError("cannot create " + result.log_path);

  struct PatchRef {
    int img, x0, y0;
  };

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(opt.seed, 1000 + static_cast<std::uint64_t>(epoch));
    Rng aug_rng(opt.seed, 5000 + static_cast<std::uint64_t>(epoch));

    std::vector<PatchRef> refs;
    for (int i : train_idx) {
      int j = pspec.jitter > 0
                  ? static_cast<int>(order_rng.uniform_int(pspec.jitter + 1))
                  : 0;
      auto xs = patch_axis_origins(data[i].image.width, window, pspec.stride, j);
      auto ys = patch_axis_origins(data[i].image.height, window, pspec.stride, j);
      for (int y0 : ys)
        for (int x0 : xs) refs.push_back({i, x0, y0});
    }
    order_rng.shuffle(refs);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < refs.size(); start += opt.batch) {
      const int bsz = static_cast<int>(
          std::min<std::size_t>(opt.batch, refs.size() - start));
      std::vector<Tensor<T>> images(levels);
      for (int m = 0; m < levels; ++m)
        images[m].assign_shape(bsz, 1, window >> m, window >> m);
      std::vector<std::vector<OneHotExpansion>> targets(bsz);

      for (int s = 0; s < bsz; ++s) {
        const PatchRef& r = refs[start + s];
        Patch p = crop_patch(data[r.img].image, data[r.img].labels, r.x0, r.y0, window);
        if (opt.augment) {
          AugmentDraw d = draw_augment(opt.augment_spec, aug_rng);
          apply_augment(p.image, p.labels, d);
        }
        Pyramid pyr = build_pyramid(p.image, p.labels, levels);
        targets[s].resize(levels);
        for (int m = 0; m < levels; ++m) {
          mosaic_into_tensor(pyr.images[m], images[m], s);
          targets[s][m] = one_hot_expand(pyr.labels[m], k_classes);
        }
      }

      model.forward(images, /*training=*/true);

      std::vector<Tensor<T>> g_probs(levels);
      for (int m = 0; m < levels; ++m)
        g_probs[m].assign_shape(bsz, k_classes, window >> m, window >> m);
      for (int s = 0; s < bsz; ++s) {
        std::vector<ChannelField> preds(levels);
        for (int m = 0; m < levels; ++m) preds[m] = field_from_tensor(model.probs(m), s);
        std::vector<ChannelField> grads;
        MultilevelResult res = multilevel_loss_grad(preds, targets[s], loss, grads);
        loss_sum += res.loss;
        for (int m = 0; m < levels; ++m) {
          for (auto& g : grads[m].v) g /= bsz;
          field_into_tensor(grads[m], g_probs[m], s);
        }
      }
      seen += bsz;

      model.zero_grad();
      model.backward(g_probs);
      adam.step(params);
    }

    double epoch_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    double val = validation_dice(model, data, val_idx);
    result.epoch_loss.push_back(epoch_loss);
    result.epoch_val_dice.push_back(val);

    char line[128];
    std::snprintf(line, sizeof line, "%d %.17g %.17g\n", epoch, epoch_loss, val);
    log << line;
    log.flush();

    if (!val_idx.empty() && val > result.best_val_dice) {
      result.best_val_dice = val;
      result.best_epoch = epoch;
      save_checkpoint(result.best_checkpoint, model);
    }
    if (opt.verbose) {
      auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      std::printf("epoch %d/%d  loss %.6f  val_dice %.6f  (%.1fs, %zu patches)\n",
                  epoch, opt.epochs, epoch_loss, val, dt / 1000.0, seen);
      std::fflush(stdout);
    }
  }

  save_checkpoint(result.last_checkpoint, model);
  if (val_idx.empty()) {
    // No validation: the final weights are the best we know of.
    save_checkpoint(result.best_checkpoint, model);
    result.best_epoch = opt.epochs;
  }
  return result;
}

// Full-image evaluation: sliding-window inference per image, predictions
// pooled into one confusion matrix over all labeled pixels.
template <typename T>
MetricsReport evaluate_model(MUNet<T>& model, const std::vector<Sample>& data,
                             double overlap, ConfusionMatrix* out_cm = nullptr,
                             bool verbose = false) {
  ConfusionMatrix cm(model.cfg.classes);
  int done = 0;
  for (const auto& s : data) {
    ProbabilityMap prob = predict_mosaic(model, s.image, overlap);
    cm.add(s.labels, argmax_labels(prob));
    if (verbose) {
      ++done;
      std::printf("evaluated %d/%zu images\r", done, data.size());
      std::fflush(stdout);
    }
  }
  if (verbose) std::printf("\n");
  if (out_cm) *out_cm = cm;
  return compute_metrics(cm);
}

}  // namespace munet
