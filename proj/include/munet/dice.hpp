#pragma once

#include <cmath>
#include <vector>

#include "munet/core.hpp"

namespace munet {

// Inverse-frequency class weights from labeled-pixel counts, normalized to
// sum to one. Every class must be present at least once.
inline std::vector<double> compute_class_weights(const std::vector<std::uint64_t>& counts) {
  if (counts.empty()) throw ConfigError("compute_class_weights: no classes");
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] == 0)
      throw DataError("class " + std::to_string(k) +
                      " has no labeled pixels; cannot derive class weights "
                      "(label more data or drop the class)");
  std::vector<double> alpha(counts.size());
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    alpha[k] = 1.0 / static_cast<double>(counts[k]);
    total += alpha[k];
  }
  for (auto& a : alpha) a /= total;
  return alpha;
}

namespace detail {

inline void check_dice_args(const ChannelField& pred, const OneHotExpansion& target,
                            const std::vector<double>& alpha) {
  if (pred.width != target.target.width || pred.height != target.target.height ||
      pred.channels != target.target.channels)
    throw ConfigError("selective_dice: prediction/target shape mismatch");
  if (static_cast<int>(alpha.size()) != pred.channels)
    throw ConfigError("selective_dice: alpha size must equal class count");
}

}  // namespace detail

// Per-class sums of the masked Dice ratio. Unlabeled pixels contribute to
// neither numerator nor denominator, so the score is invariant to whatever
// the prediction or the (void) target holds there.
struct DiceBreakdown {
  std::vector<double> numer, denom, term;  // term[k] = alpha_k * f * n_k / (eps + d_k)
  double dsc = 0.0;
};

inline DiceBreakdown selective_dice_breakdown(const ChannelField& pred,
                                              const OneHotExpansion& target,
                                              const std::vector<double>& alpha,
                                              double epsilon, bool classic_factor2) {
  detail::check_dice_args(pred, target, alpha);
  const int k_classes = pred.channels;
  const std::size_t px = pred.pixels();
  const double f = classic_factor2 ? 2.0 : 1.0;
  DiceBreakdown out;
  out.numer.assign(k_classes, 0.0);
  out.denom.assign(k_classes, 0.0);
  out.term.assign(k_classes, 0.0);
  for (int k = 0; k < k_classes; ++k) {
    const double* a = target.target.plane(k);
    const double* b = pred.plane(k);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < px; ++i) {
      if (!target.mask.m[i]) continue;
      num += a[i] * b[i];
      den += a[i] + b[i];
    }
    out.numer[k] = num;
    out.denom[k] = den;
    out.term[k] = alpha[k] * f * num / (epsilon + den);
    out.dsc += out.term[k];
  }
  return out;
}

inline double selective_dice(const ChannelField& pred, const OneHotExpansion& target,
                             const std::vector<double>& alpha, double epsilon,
                             bool classic_factor2) {
  return selective_dice_breakdown(pred, target, alpha, epsilon, classic_factor2).dsc;
}

// d(DSC)/d(pred); zero at unlabeled pixels.
inline void selective_dice_grad(const ChannelField& pred, const OneHotExpansion& target,
                                const std::vector<double>& alpha, double epsilon,
                                bool classic_factor2, ChannelField& grad) {
  detail::check_dice_args(pred, target, alpha);
  DiceBreakdown br = selective_dice_breakdown(pred, target, alpha, epsilon, classic_factor2);
  const double f = classic_factor2 ? 2.0 : 1.0;
  grad = ChannelField(pred.width, pred.height, pred.channels);
  const std::size_t px = pred.pixels();
  for (int k = 0; k < pred.channels; ++k) {
    const double* a = target.target.plane(k);
    double* g = grad.plane(k);
    const double d = epsilon + br.denom[k];
    const double coef = alpha[k] * f / (d * d);
    for (std::size_t i = 0; i < px; ++i)
      g[i] = target.mask.m[i] ? coef * (a[i] * d - br.numer[k]) : 0.0;
  }
}

// Deep-supervision loss over the level stack: 1 - sum_m beta_m * DSC_m.
struct MultilevelResult {
  double loss = 0.0;
  std::vector<double> level_dsc;
};

inline MultilevelResult multilevel_loss(const std::vector<ChannelField>& preds,
                                        const std::vector<OneHotExpansion>& targets,
                                        const LossConfig& cfg) {
  if (preds.size() != targets.size() || preds.size() != cfg.beta.size())
    throw ConfigError("multilevel_loss: level count mismatch");
  cfg.validate();
  MultilevelResult out;
  out.loss = 1.0;
  out.level_dsc.resize(preds.size());
  for (std::size_t m = 0; m < preds.size(); ++m) {
    out.level_dsc[m] = selective_dice(preds[m], targets[m], cfg.alpha, cfg.epsilon,
                                      cfg.classic_factor2);
    out.loss -= cfg.beta[m] * out.level_dsc[m];
  }
  return out;
}

// Loss value plus d(loss)/d(pred_m) = -beta_m * d(DSC_m)/d(pred_m).
inline MultilevelResult multilevel_loss_grad(const std::vector<ChannelField>& preds,
                                             const std::vector<OneHotExpansion>& targets,
                                             const LossConfig& cfg,
                                             std::vector<ChannelField>& grads) {
  MultilevelResult out = multilevel_loss(preds, targets, cfg);
  grads.resize(preds.size());
  for (std::size_t m = 0; m < preds.size(); ++m) {
    selective_dice_grad(preds[m], targets[m], cfg.alpha, cfg.epsilon,
                        cfg.classic_factor2, grads[m]);
    double* g = grads[m].v.data();
    for (std::size_t i = 0; i < grads[m].v.size(); ++i) g[i] *= -cfg.beta[m];
  }
  return out;
}

// Pulls a probability-space gradient back through a channel softmax:
// g_z = probs * (g_p - sum_k g_p[k] * probs[k]) per pixel.
inline void probability_grad_to_logit_grad(const ChannelField& probs,
                                           const ChannelField& g_probs,
                                           ChannelField& g_logits) {
  if (probs.width != g_probs.width || probs.height != g_probs.height ||
      probs.channels != g_probs.channels)
    throw ConfigError("probability_grad_to_logit_grad: shape mismatch");
  g_logits = ChannelField(probs.width, probs.height, probs.channels);
  const std::size_t px = probs.pixels();
  for (std::size_t i = 0; i < px; ++i) {
    double dot = 0.0;
    for (int k = 0; k < probs.channels; ++k)
      dot += g_probs.plane(k)[i] * probs.plane(k)[i];
    for (int k = 0; k < probs.channels; ++k)
      g_logits.plane(k)[i] = probs.plane(k)[i] * (g_probs.plane(k)[i] - dot);
  }
}

}  // namespace munet
