#pragma once

#include <string>
#include <vector>

#include "munet/layers.hpp"

namespace munet {

// Conv 3x3 (same padding) -> batch norm -> ReLU. The block keeps a pointer to
// its forward input plus the pre-normalization activation, which together are
// all that backward needs.
template <typename T>
struct ConvBNRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  const Tensor<T>* x_in = nullptr;
  Tensor<T> conv_out, out;

  ConvBNRelu() = default;
  ConvBNRelu(int in_c, int out_c) : conv(in_c, out_c, 3), bn(out_c) {}

  void init(Rng& rng) { conv.init_he(rng); }

  void forward(const Tensor<T>& x, Workspace<T>& ws, bool training) {
    x_in = &x;
    conv.forward(x, conv_out, ws);
    bn.forward(conv_out, out, training);
    for (auto& v : out.v)
      if (v < T(0)) v = T(0);
  }

  void backward(const Tensor<T>& gy, Tensor<T>& gx, Workspace<T>& ws) {
    Tensor<T> g_bn, g_conv;
    Relu<T>::backward(out, gy, g_bn);
    bn.backward(conv_out, g_bn, g_conv);
    conv.backward(*x_in, g_conv, gx, ws);
  }

  void zero_grad() {
    conv.zero_grad();
    bn.zero_grad();
  }

  template <typename Fn>
  void visit_params(const std::string& prefix, Fn&& fn) {
    conv.visit_params(prefix + ".conv", fn);
    bn.visit_params(prefix + ".bn", fn);
  }
  template <typename Fn>
  void visit_buffers(const std::string& prefix, Fn&& fn) {
    bn.visit_buffers(prefix + ".bn", fn);
  }
};

// A single encoder-decoder segmentation net: `depth` pooling steps, channel
// width doubling per step, transposed-conv upsampling, concatenated skip
// connections, 1x1 head, channel softmax. Input spatial dims must be
// divisible by 2^depth.
template <typename T>
struct UNet {
  struct Stage {
    ConvBNRelu<T> b1, b2;
    Stage() = default;
    Stage(int in_c, int out_c) : b1(in_c, out_c), b2(out_c, out_c) {}
    void forward(const Tensor<T>& x, Workspace<T>& ws, bool tr) {
      b1.forward(x, ws, tr);
      b2.forward(b1.out, ws, tr);
    }
    const Tensor<T>& out() const { return b2.out; }
    void backward(const Tensor<T>& gy, Tensor<T>& gx, Workspace<T>& ws) {
      Tensor<T> g_mid;
      b2.backward(gy, g_mid, ws);
      b1.backward(g_mid, gx, ws);
    }
    void init(Rng& rng) {
      b1.init(rng);
      b2.init(rng);
    }
    void zero_grad() {
      b1.zero_grad();
      b2.zero_grad();
    }
    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
      b1.visit_params(prefix + ".b1", fn);
      b2.visit_params(prefix + ".b2", fn);
    }
    template <typename Fn>
    void visit_buffers(const std::string& prefix, Fn&& fn) {
      b1.visit_buffers(prefix + ".b1", fn);
      b2.visit_buffers(prefix + ".b2", fn);
    }
  };

  struct Dec {
    TConv2<T> up;
    Stage st;
    Tensor<T> up_out, cat;
    Dec() = default;
    Dec(int in_c, int out_c) : up(in_c, out_c), st(2 * out_c, out_c) {}
  };

  int depth = 0, in_channels = 0, base = 0, classes = 0;
  std::vector<Stage> enc;
  std::vector<MaxPool2<T>> pool;
  std::vector<Tensor<T>> pooled;
  Stage mid;
  std::vector<Dec> dec;
  Conv2d<T> head;
  Tensor<T> logits, probs;

  UNet() = default;
  UNet(int depth_, int in_c, int base_, int classes_)
      : depth(depth_), in_channels(in_c), base(base_), classes(classes_),
        pool(depth_), pooled(depth_) {
    if (depth_ < 1) throw ConfigError("UNet depth must be >= 1");
    enc.reserve(depth_);
    for (int s = 0; s < depth_; ++s)
      enc.emplace_back(s == 0 ? in_c : base_ << (s - 1), base_ << s);
    mid = Stage(base_ << (depth_ - 1), base_ << depth_);
    dec.reserve(depth_);
    for (int d = 0; d < depth_; ++d) {
      int skip_c = base_ << (depth_ - 1 - d);
      dec.emplace_back(2 * skip_c, skip_c);
    }
    head = Conv2d<T>(base_, classes_, 1);
  }

  void init(Rng& rng) {
    for (auto& s : enc) s.init(rng);
    mid.init(rng);
    for (auto& d : dec) {
      d.up.init_he(rng);
      d.st.init(rng);
    }
    head.init_he(rng);
  }

  // probs after forward: [N, classes, H, W], softmax over channels.
  void forward(const Tensor<T>& x, Workspace<T>& ws, bool training) {
    if (x.c != in_channels) throw ConfigError("UNet: input channel mismatch");
    if (x.h % (1 << depth) || x.w % (1 << depth))
      throw ConfigError("UNet: input dims must be divisible by 2^depth");
    const Tensor<T>* cur = &x;
    for (int s = 0; s < depth; ++s) {
      enc[s].forward(*cur, ws, training);
      pool[s].forward(enc[s].out(), pooled[s]);
      cur = &pooled[s];
    }
    mid.forward(*cur, ws, training);
    const Tensor<T>* prev = &mid.out();
    for (int d = 0; d < depth; ++d) {
      dec[d].up.forward(*prev, dec[d].up_out, ws);
      concat_channels(dec[d].up_out, enc[depth - 1 - d].out(), dec[d].cat);
      dec[d].st.forward(dec[d].cat, ws, training);
      prev = &dec[d].st.out();
    }
    head.forward(*prev, logits, ws);
    SoftmaxChannel<T>::forward(logits, probs);
  }

  // g_probs: dLoss/dprobs. Accumulates parameter gradients; returns the
  // gradient with respect to the forward input in gx.
  void backward(const Tensor<T>& g_probs, Tensor<T>& gx, Workspace<T>& ws) {
    Tensor<T> g_logits;
    SoftmaxChannel<T>::backward(probs, g_probs, g_logits);
    Tensor<T> g_cur;
    head.backward(dec.back().st.out(), g_logits, g_cur, ws);

    std::vector<Tensor<T>> g_skip(depth);
    for (int d = depth - 1; d >= 0; --d) {
      Tensor<T> g_cat;
      dec[d].st.backward(g_cur, g_cat, ws);
      Tensor<T> g_up;
      split_channels(g_cat, dec[d].up_out.c, g_up, g_skip[depth - 1 - d]);
      const Tensor<T>& up_in = (d == 0) ? mid.out() : dec[d - 1].st.out();
      dec[d].up.backward(up_in, g_up, g_cur, ws);
    }

    Tensor<T> g_pooled;
    mid.backward(g_cur, g_pooled, ws);
    for (int s = depth - 1; s >= 0; --s) {
      Tensor<T> g_enc_out;
      pool[s].backward(g_pooled, enc[s].out().h, enc[s].out().w, g_enc_out);
      accumulate(g_enc_out, g_skip[s]);
      Tensor<T>& dst = (s == 0) ? gx : g_pooled;
      enc[s].backward(g_enc_out, dst, ws);
    }
  }

  void zero_grad() {
    for (auto& s : enc) s.zero_grad();
    mid.zero_grad();
    for (auto& d : dec) {
      d.up.zero_grad();
      d.st.zero_grad();
    }
    head.zero_grad();
  }

  template <typename Fn>
  void visit_params(const std::string& prefix, Fn&& fn) {
    for (int s = 0; s < depth; ++s)
      enc[s].visit_params(prefix + ".enc" + std::to_string(s), fn);
    mid.visit_params(prefix + ".mid", fn);
    for (int d = 0; d < depth; ++d) {
      dec[d].up.visit_params(prefix + ".dec" + std::to_string(d) + ".up", fn);
      dec[d].st.visit_params(prefix + ".dec" + std::to_string(d), fn);
    }
    head.visit_params(prefix + ".head", fn);
  }

  template <typename Fn>
  void visit_buffers(const std::string& prefix, Fn&& fn) {
    for (int s = 0; s < depth; ++s)
      enc[s].visit_buffers(prefix + ".enc" + std::to_string(s), fn);
    mid.visit_buffers(prefix + ".mid", fn);
    for (int d = 0; d < depth; ++d)
      dec[d].st.visit_buffers(prefix + ".dec" + std::to_string(d), fn);
  }
};

}  // namespace munet
