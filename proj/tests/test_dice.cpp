#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "munet/dice.hpp"
#include "munet/rng.hpp"

using namespace munet;

namespace {

// Structurally independent re-implementation: per-class scalar loops over
// (x, y) with at() accessors, nothing shared with the library version.
double naive_selective_dice(const ChannelField& pred, const OneHotExpansion& t,
                            const std::vector<double>& alpha, double eps, bool factor2) {
  double total = 0.0;
  for (int k = 0; k < pred.channels; ++k) {
    double num = 0.0, den = 0.0;
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x) {
        if (!t.mask.at(x, y)) continue;
        double a = t.target.at(x, y, k);
        double b = pred.at(x, y, k);
        num += a * b;
        den += a + b;
      }
    total += alpha[k] * (factor2 ? 2.0 : 1.0) * num / (eps + den);
  }
  return total;
}

ChannelField random_simplex_field(int w, int h, int k, Rng& rng) {
  ChannelField f(w, h, k);
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      double v = 0.05 + rng.uniform();
      f.plane(c)[i] = v;
      s += v;
    }
    for (int c = 0; c < k; ++c) f.plane(c)[i] /= s;
  }
  return f;
}

LabelMap random_labels(int w, int h, int k, double unlabeled_frac, Rng& rng) {
  LabelMap lab(w, h);
  for (auto& v : lab.lab)
    v = rng.uniform() < unlabeled_frac ? kUnlabeled
                                       : static_cast<std::uint8_t>(rng.uniform_int(k));
  return lab;
}

void softmax_field(const ChannelField& logits, ChannelField& probs) {
  probs = ChannelField(logits.width, logits.height, logits.channels);
  for (std::size_t i = 0; i < logits.pixels(); ++i) {
    double mx = logits.plane(0)[i];
    for (int k = 1; k < logits.channels; ++k) mx = std::max(mx, logits.plane(k)[i]);
    double s = 0.0;
    for (int k = 0; k < logits.channels; ++k) {
      double e = std::exp(logits.plane(k)[i] - mx);
      probs.plane(k)[i] = e;
      s += e;
    }
    for (int k = 0; k < logits.channels; ++k) probs.plane(k)[i] /= s;
  }
}

}  // namespace

TEST_CASE("2x2 hand case matches explicit per-pixel summation") {
  // target = [c0, c0; c1, void], pred = (0.5, 0.5) everywhere, alpha = (.5, .5).
  // k=0: num = 0.5+0.5 = 1.0, den = 1.5+1.5+0.5 = 3.5
  // k=1: num = 0.5,       den = 0.5+0.5+1.5 = 2.5
  LabelMap lab(2, 2);
  lab.at(0, 0) = 0;
  lab.at(1, 0) = 0;
  lab.at(0, 1) = 1;
  lab.at(1, 1) = kUnlabeled;
  auto target = one_hot_expand(lab, 2);
  ChannelField pred(2, 2, 2);
  std::fill(pred.v.begin(), pred.v.end(), 0.5);
  std::vector<double> alpha{0.5, 0.5};

  double expected = 0.5 * (1.0 / (1e-5 + 3.5)) + 0.5 * (0.5 / (1e-5 + 2.5));
  REQUIRE(selective_dice(pred, target, alpha, 1e-5, false) ==
          Catch::Approx(expected).margin(1e-12));
  REQUIRE(selective_dice(pred, target, alpha, 1e-5, true) ==
          Catch::Approx(2.0 * expected).margin(1e-12));

  auto br = selective_dice_breakdown(pred, target, alpha, 1e-5, false);
  REQUIRE(br.numer[0] == 1.0);
  REQUIRE(br.denom[0] == 3.5);
  REQUIRE(br.numer[1] == 0.5);
  REQUIRE(br.denom[1] == 2.5);
}

TEST_CASE("matches a naive triple-loop implementation on random instances") {
  Rng rng(42, 7);
  for (int trial = 0; trial < 50; ++trial) {
    int w = 1 + rng.uniform_int(9);
    int h = 1 + rng.uniform_int(9);
    int k = 1 + rng.uniform_int(5);
    ChannelField pred = random_simplex_field(w, h, k, rng);
    auto target = one_hot_expand(random_labels(w, h, k, 0.3, rng), k);
    std::vector<double> alpha(k);
    for (auto& a : alpha) a = 0.1 + rng.uniform();  // deliberately unnormalized
    for (bool factor2 : {false, true}) {
      double got = selective_dice(pred, target, alpha, 1e-5, factor2);
      double want = naive_selective_dice(pred, target, alpha, 1e-5, factor2);
      REQUIRE(got == Catch::Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("closed forms: all-unlabeled and perfect prediction") {
  std::vector<double> alpha{0.3, 0.7};

  LabelMap void_lab(3, 3, kUnlabeled);
  auto void_target = one_hot_expand(void_lab, 2);
  ChannelField pred(3, 3, 2);
  std::fill(pred.v.begin(), pred.v.end(), 0.5);
  REQUIRE(selective_dice(pred, void_target, alpha, 1e-5, false) == 0.0);
  REQUIRE(selective_dice(pred, void_target, alpha, 1e-5, true) == 0.0);

  // fully labeled single class, pred == target one-hot, eps -> 0: alpha_k/2
  LabelMap one_lab(4, 4, 1);
  auto one_target = one_hot_expand(one_lab, 2);
  ChannelField perfect(4, 4, 2);
  for (std::size_t i = 0; i < perfect.pixels(); ++i) perfect.plane(1)[i] = 1.0;
  REQUIRE(selective_dice(perfect, one_target, alpha, 1e-12, false) ==
          Catch::Approx(alpha[1] / 2.0).margin(1e-6));
  REQUIRE(selective_dice(perfect, one_target, alpha, 1e-12, true) ==
          Catch::Approx(alpha[1]).margin(1e-6));
}

TEST_CASE("score is exactly invariant to prediction values at unlabeled pixels") {
  Rng rng(11, 3);
  ChannelField pred = random_simplex_field(7, 6, 4, rng);
  auto target = one_hot_expand(random_labels(7, 6, 4, 0.4, rng), 4);
  std::vector<double> alpha{0.1, 0.2, 0.3, 0.4};
  double base = selective_dice(pred, target, alpha, 1e-5, false);

  ChannelField tampered = pred;
  for (std::size_t i = 0; i < tampered.pixels(); ++i)
    if (!target.mask.m[i])
      for (int k = 0; k < 4; ++k) tampered.plane(k)[i] = rng.uniform() * 10.0 - 5.0;
  REQUIRE(selective_dice(tampered, target, alpha, 1e-5, false) == base);
}

TEST_CASE("moving mass toward the true class never decreases the score") {
  Rng rng(13, 9);
  for (int trial = 0; trial < 30; ++trial) {
    ChannelField pred = random_simplex_field(5, 5, 3, rng);
    LabelMap lab = random_labels(5, 5, 3, 0.2, rng);
    auto target = one_hot_expand(lab, 3);
    std::vector<double> alpha{1.0 / 3, 1.0 / 3, 1.0 / 3};
    double base = selective_dice(pred, target, alpha, 1e-5, false);

    int x = rng.uniform_int(5), y = rng.uniform_int(5);
    if (lab.at(x, y) == kUnlabeled) continue;
    int k = lab.at(x, y);
    ChannelField moved = pred;
    double delta = 0.5 * (1.0 - moved.at(x, y, k));
    moved.at(x, y, k) += delta;
    for (int c = 0; c < 3; ++c)
      if (c != k) moved.at(x, y, c) *= 1.0 - delta / (1.0 - pred.at(x, y, k) + 1e-300);
    REQUIRE(selective_dice(moved, target, alpha, 1e-5, false) >= base - 1e-12);
  }
}

TEST_CASE("score stays within its analytic bounds") {
  Rng rng(17, 1);
  for (int trial = 0; trial < 25; ++trial) {
    int k = 1 + rng.uniform_int(4);
    ChannelField pred = random_simplex_field(6, 4, k, rng);
    auto target = one_hot_expand(random_labels(6, 4, k, 0.3, rng), k);
    std::vector<double> alpha(k, 1.0 / k);
    double dsc = selective_dice(pred, target, alpha, 1e-5, false);
    double alpha_sum = 1.0;
    REQUIRE(dsc >= 0.0);
    REQUIRE(dsc <= alpha_sum / 2.0 + 1e-6);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(23, 5);
  for (bool factor2 : {false, true}) {
    ChannelField pred = random_simplex_field(6, 5, 3, rng);
    auto target = one_hot_expand(random_labels(6, 5, 3, 0.3, rng), 3);
    std::vector<double> alpha{0.5, 0.3, 0.2};
    ChannelField grad;
    selective_dice_grad(pred, target, alpha, 1e-5, factor2, grad);

    const double h = 1e-6;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
      ChannelField p = pred;
      p.v[i] += h;
      double up = selective_dice(p, target, alpha, 1e-5, factor2);
      p.v[i] -= 2 * h;
      double dn = selective_dice(p, target, alpha, 1e-5, factor2);
      double fd = (up - dn) / (2 * h);
      double scale = std::max({1.0, std::abs(fd), std::abs(grad.v[i])});
      REQUIRE(std::abs(fd - grad.v[i]) / scale < 1e-8);
    }

    // exact zeros at unlabeled pixels
    for (std::size_t i = 0; i < pred.pixels(); ++i)
      if (!target.mask.m[i])
        for (int k = 0; k < 3; ++k) REQUIRE(grad.plane(k)[i] == 0.0);
  }
}

TEST_CASE("multilevel loss reduces to the single-level form at M=1") {
  Rng rng(29, 2);
  ChannelField pred = random_simplex_field(4, 4, 3, rng);
  auto target = one_hot_expand(random_labels(4, 4, 3, 0.25, rng), 3);
  LossConfig cfg;
  cfg.alpha = {0.2, 0.3, 0.5};
  cfg.beta = {1.0};
  auto res = multilevel_loss({pred}, {target}, cfg);
  REQUIRE(res.loss == 1.0 - selective_dice(pred, target, cfg.alpha, cfg.epsilon, false));
  REQUIRE(res.level_dsc.size() == 1);
}

TEST_CASE("multilevel loss closed form for perfect one-hot predictions") {
  // every class present at every level, pred == target, uniform alpha:
  // DSC_m = K * (1/K)/2 = 1/2, so loss = 1 - 0.5 * sum(beta) = 0.5
  const int k_classes = 4;
  std::vector<ChannelField> preds;
  std::vector<OneHotExpansion> targets;
  for (int size : {8, 4, 2}) {
    LabelMap lab(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        lab.at(x, y) = static_cast<std::uint8_t>((x % 2) + 2 * (y % 2));
    auto t = one_hot_expand(lab, k_classes);
    preds.push_back(t.target);
    targets.push_back(std::move(t));
  }
  LossConfig cfg;
  cfg.alpha.assign(k_classes, 1.0 / k_classes);
  cfg.beta = LossConfig::default_beta(3);
  cfg.epsilon = 1e-12;
  auto res = multilevel_loss(preds, targets, cfg);
  REQUIRE(res.loss == Catch::Approx(0.5).margin(1e-6));
  for (double d : res.level_dsc) REQUIRE(d == Catch::Approx(0.5).margin(1e-6));

  // fully unlabeled stack: every DSC vanishes and the loss is exactly 1
  std::vector<ChannelField> upreds;
  std::vector<OneHotExpansion> utargets;
  for (int size : {8, 4, 2}) {
    LabelMap lab(size, size, kUnlabeled);
    utargets.push_back(one_hot_expand(lab, k_classes));
    upreds.emplace_back(size, size, k_classes);
  }
  REQUIRE(multilevel_loss(upreds, utargets, cfg).loss == 1.0);
}

TEST_CASE("multilevel gradient scales each level by -beta and passes FD") {
  Rng rng(31, 4);
  std::vector<ChannelField> preds;
  std::vector<OneHotExpansion> targets;
  for (int size : {6, 3}) {
    preds.push_back(random_simplex_field(size, size, 3, rng));
    targets.push_back(one_hot_expand(random_labels(size, size, 3, 0.3, rng), 3));
  }
  LossConfig cfg;
  cfg.alpha = {0.5, 0.25, 0.25};
  cfg.beta = {0.8, 0.2};
  std::vector<ChannelField> grads;
  auto res = multilevel_loss_grad(preds, targets, cfg, grads);
  REQUIRE(grads.size() == 2);

  for (std::size_t m = 0; m < preds.size(); ++m) {
    ChannelField direct;
    selective_dice_grad(preds[m], targets[m], cfg.alpha, cfg.epsilon,
                        cfg.classic_factor2, direct);
    for (std::size_t i = 0; i < direct.v.size(); ++i)
      REQUIRE(grads[m].v[i] == Catch::Approx(-cfg.beta[m] * direct.v[i]).margin(1e-15));
  }

  const double h = 1e-6;
  for (std::size_t m = 0; m < preds.size(); ++m)
    for (std::size_t i = 0; i < preds[m].v.size(); i += 5) {
      auto probe = preds;
      probe[m].v[i] += h;
      double up = multilevel_loss(probe, targets, cfg).loss;
      probe[m].v[i] -= 2 * h;
      double dn = multilevel_loss(probe, targets, cfg).loss;
      double fd = (up - dn) / (2 * h);
      double scale = std::max({1.0, std::abs(fd), std::abs(grads[m].v[i])});
      REQUIRE(std::abs(fd - grads[m].v[i]) / scale < 1e-8);
    }
  REQUIRE(res.loss <= 1.0);
}

TEST_CASE("class weights are inverse-frequency, normalized") {
  auto w1 = compute_class_weights({75, 25});
  REQUIRE(w1[0] == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(w1[1] == Catch::Approx(0.75).margin(1e-15));

  auto w2 = compute_class_weights({1, 1, 2});
  REQUIRE(w2[0] == Catch::Approx(0.4).margin(1e-15));
  REQUIRE(w2[1] == Catch::Approx(0.4).margin(1e-15));
  REQUIRE(w2[2] == Catch::Approx(0.2).margin(1e-15));

  auto w3 = compute_class_weights({123456, 42, 9999, 7});
  double sum = w3[0] + w3[1] + w3[2] + w3[3];
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));

  REQUIRE_THROWS_AS(compute_class_weights({10, 0, 5}), DataError);
  REQUIRE_THROWS_AS(compute_class_weights({}), ConfigError);
}

TEST_CASE("logit pullback matches finite differences through a softmax") {
  Rng rng(37, 6);
  ChannelField logits(4, 3, 3);
  for (auto& v : logits.v) v = rng.normal();
  auto target = one_hot_expand(random_labels(4, 3, 3, 0.3, rng), 3);
  std::vector<double> alpha{0.4, 0.35, 0.25};

  ChannelField probs;
  softmax_field(logits, probs);
  ChannelField g_probs, g_logits;
  selective_dice_grad(probs, target, alpha, 1e-5, false, g_probs);
  probability_grad_to_logit_grad(probs, g_probs, g_logits);

  const double h = 1e-6;
  for (std::size_t i = 0; i < logits.v.size(); ++i) {
    ChannelField z = logits, p;
    z.v[i] += h;
    softmax_field(z, p);
    double up = selective_dice(p, target, alpha, 1e-5, false);
    z.v[i] -= 2 * h;
    softmax_field(z, p);
    double dn = selective_dice(p, target, alpha, 1e-5, false);
    double fd = (up - dn) / (2 * h);
    double scale = std::max({1.0, std::abs(fd), std::abs(g_logits.v[i])});
    REQUIRE(std::abs(fd - g_logits.v[i]) / scale < 1e-7);
  }
}

TEST_CASE("equal logits on a class-symmetric target give a symmetric gradient") {
  LabelMap lab(2, 2);
  lab.at(0, 0) = 0;
  lab.at(1, 0) = 1;
  lab.at(0, 1) = 1;
  lab.at(1, 1) = 0;
  auto target = one_hot_expand(lab, 2);
  ChannelField probs(2, 2, 2);
  std::fill(probs.v.begin(), probs.v.end(), 0.5);
  std::vector<double> alpha{0.5, 0.5};
  ChannelField g_probs, g_logits;
  selective_dice_grad(probs, target, alpha, 1e-5, false, g_probs);
  probability_grad_to_logit_grad(probs, g_probs, g_logits);

  // swapping the two classes maps the target onto itself with pixels permuted,
  // so the gradient must obey the same exchange symmetry
  REQUIRE(g_logits.at(0, 0, 0) == g_logits.at(1, 0, 1));
  REQUIRE(g_logits.at(0, 0, 1) == g_logits.at(1, 0, 0));
  REQUIRE(g_logits.at(1, 1, 0) == g_logits.at(0, 1, 1));
}

TEST_CASE("shape and config mismatches are rejected") {
  ChannelField pred(3, 3, 2);
  auto target = one_hot_expand(LabelMap(3, 3, 0), 2);
  REQUIRE_THROWS_AS(selective_dice(pred, target, {0.5}, 1e-5, false), ConfigError);
  ChannelField wrong(4, 3, 2);
  REQUIRE_THROWS_AS(selective_dice(wrong, target, {0.5, 0.5}, 1e-5, false), ConfigError);

  LossConfig cfg;
  cfg.alpha = {0.5, 0.5};
  cfg.beta = {0.9, 0.2};  // sums to 1.1
  std::vector<ChannelField> preds{pred, pred};
  std::vector<OneHotExpansion> targets{target, target};
  REQUIRE_THROWS_AS(multilevel_loss(preds, targets, cfg), ConfigError);
  cfg.beta = {1.0};
  REQUIRE_THROWS_AS(multilevel_loss(preds, targets, cfg), ConfigError);
}
