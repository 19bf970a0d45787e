#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "munet/interp.hpp"
#include "munet/rng.hpp"
#include "munet/tensor.hpp"

namespace munet {

namespace detail {

// Pixel-column budget for chunked im2col staging (elements, not bytes).
inline constexpr std::size_t kColBudget = std::size_t(1) << 22;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fills a row-major im2col block for output pixels [p0, p1) of one sample.
// Rows are (c, ky, kx) triples; row length is p1 - p0. Stride 1, zero
// padding of pad on each side.
template <typename T>
void im2col_chunk(const T* src, int C, int H, int W, int K, int pad, int p0,
                  int p1, T* col) {
  const int len_total = p1 - p0;
  for (int c = 0; c < C; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        T* dst = col + (static_cast<std::size_t>((c * K + ky) * K + kx)) * len_total;
        int p = p0;
        while (p < p1) {
          int y = p / W;
          int x0 = p % W;
          int len = std::min(W - x0, p1 - p);
          int sy = y + ky - pad;
          if (sy < 0 || sy >= H) {
            std::fill_n(dst, len, T(0));
          } else {
            const T* srow = plane + static_cast<std::size_t>(sy) * W;
            // Valid source x: 0 <= x + kx - pad < W.
            int lo = std::max(x0, pad - kx);
            int hi = std::min(x0 + len, W + pad - kx);
            if (lo >= hi) {
              std::fill_n(dst, len, T(0));
            } else {
              int head = lo - x0;
              int body = hi - lo;
              std::fill_n(dst, head, T(0));
              std::memcpy(dst + head, srow + lo + kx - pad, body * sizeof(T));
              std::fill_n(dst + head + body, len - head - body, T(0));
            }
          }
          p += len;
          dst += len;
        }
      }
    }
  }
}

// Scatter-add of an im2col-shaped gradient block back onto the input plane.
template <typename T>
void col2im_chunk(const T* col, int C, int H, int W, int K, int pad, int p0,
                  int p1, T* gsrc) {
  const int len_total = p1 - p0;
  for (int c = 0; c < C; ++c) {
    T* plane = gsrc + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const T* row = col + (static_cast<std::size_t>((c * K + ky) * K + kx)) * len_total;
        int p = p0;
        while (p < p1) {
          int y = p / W;
          int x0 = p % W;
          int len = std::min(W - x0, p1 - p);
          int sy = y + ky - pad;
          if (sy >= 0 && sy < H) {
            T* drow = plane + static_cast<std::size_t>(sy) * W;
            int lo = std::max(x0, pad - kx);
            int hi = std::min(x0 + len, W + pad - kx);
            for (int x = lo; x < hi; ++x) drow[x + kx - pad] += row[x - x0];
          }
          p += len;
          row += len;
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv2d: stride-1 KxK convolution with same padding (K odd), im2col + GEMM.
// Activations are not cached; backward takes the forward input again.
// ---------------------------------------------------------------------------
template <typename T>
struct Conv2d {
  int in_c = 0, out_c = 0, k = 1, pad = 0;
  Tensor<T> w, b, gw, gb;  // w: [out_c, in_c, k, k], b: [1, out_c, 1, 1]

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel)
      : in_c(in_channels), out_c(out_channels), k(kernel), pad(kernel / 2),
        w(out_channels, in_channels, kernel, kernel), b(1, out_channels, 1, 1),
        gw(out_channels, in_channels, kernel, kernel), gb(1, out_channels, 1, 1) {}

  void init_he(Rng& rng) {
    double fan_in = static_cast<double>(in_c) * k * k;
    double stddev = std::sqrt(2.0 / fan_in);
    for (auto& x : w.v) x = static_cast<T>(rng.normal() * stddev);
    b.zero();
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, Workspace<T>& ws) const {
    const int H = x.h, W = x.w, P = H * W;
    const int rows = in_c * k * k;
    y.assign_shape(x.n, out_c, H, W);
    int chunk = static_cast<int>(std::max<std::size_t>(
        W, std::min<std::size_t>(P, detail::kColBudget / rows)));
    ws.col.resize(static_cast<std::size_t>(rows) * chunk);
    Eigen::Map<const detail::RowMat<T>> wm(w.data(), out_c, rows);
    for (int ni = 0; ni < x.n; ++ni) {
      const T* src = x.plane(ni, 0);
      T* dst = y.plane(ni, 0);
      for (int p0 = 0; p0 < P; p0 += chunk) {
        int p1 = std::min(P, p0 + chunk);
        detail::im2col_chunk(src, in_c, H, W, k, pad, p0, p1, ws.col.data());
        Eigen::Map<const detail::RowMat<T>> cm(ws.col.data(), rows, p1 - p0);
        Eigen::Map<detail::RowMat<T>, 0, Eigen::OuterStride<>> ym(
            dst + p0, out_c, p1 - p0, Eigen::OuterStride<>(P));
        ym.noalias() = wm * cm;
      }
      for (int oc = 0; oc < out_c; ++oc) {
        T bias = b.v[oc];
        T* pl = y.plane(ni, oc);
        for (int i = 0; i < P; ++i) pl[i] += bias;
      }
    }
  }

  // Accumulates into gw/gb; writes gx (overwrite).
  void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx,
                Workspace<T>& ws) {
    const int H = x.h, W = x.w, P = H * W;
    const int rows = in_c * k * k;
    gx.assign_shape(x.n, in_c, H, W);
    int chunk = static_cast<int>(std::max<std::size_t>(
        W, std::min<std::size_t>(P, detail::kColBudget / rows)));
    ws.col.resize(static_cast<std::size_t>(rows) * chunk);
    ws.aux.resize(static_cast<std::size_t>(rows) * chunk);
    Eigen::Map<const detail::RowMat<T>> wm(w.data(), out_c, rows);
    Eigen::Map<detail::RowMat<T>> gwm(gw.data(), out_c, rows);
    for (int ni = 0; ni < x.n; ++ni) {
      const T* src = x.plane(ni, 0);
      const T* gsrc = gy.plane(ni, 0);
      T* gdst = gx.plane(ni, 0);
      for (int p0 = 0; p0 < P; p0 += chunk) {
        int p1 = std::min(P, p0 + chunk);
        detail::im2col_chunk(src, in_c, H, W, k, pad, p0, p1, ws.col.data());
        Eigen::Map<const detail::RowMat<T>> cm(ws.col.data(), rows, p1 - p0);
        Eigen::Map<const detail::RowMat<T>, 0, Eigen::OuterStride<>> gym(
            gsrc + p0, out_c, p1 - p0, Eigen::OuterStride<>(P));
        gwm.noalias() += gym * cm.transpose();
        Eigen::Map<detail::RowMat<T>> gcm(ws.aux.data(), rows, p1 - p0);
        gcm.noalias() = wm.transpose() * gym;
        detail::col2im_chunk(ws.aux.data(), in_c, H, W, k, pad, p0, p1, gdst);
      }
      for (int oc = 0; oc < out_c; ++oc) {
        const T* pl = gy.plane(ni, oc);
        double s = 0.0;
        for (int i = 0; i < P; ++i) s += pl[i];
        gb.v[oc] += static_cast<T>(s);
      }
    }
  }

  void zero_grad() {
    gw.zero();
    gb.zero();
  }

  template <typename Fn>
  void visit_params(const std::string& prefix, Fn&& fn) {
    fn(ParamRef<T>{prefix + ".w", &w, &gw});
    fn(ParamRef<T>{prefix + ".b", &b, &gb});
  }
};

// ---------------------------------------------------------------------------
// BatchNorm2d with biased batch variance and running statistics.
// Backward recomputes x_hat from the cached per-channel mean / inv-std, so
// the layer never stores an activation-sized buffer.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNorm2d {
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Tensor<T> gamma, beta, ggamma, gbeta;
  Tensor<T> running_mean, running_var;
  std::vector<double> saved_mean, saved_istd;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : channels(c), gamma(1, c, 1, 1), beta(1, c, 1, 1), ggamma(1, c, 1, 1),
        gbeta(1, c, 1, 1), running_mean(1, c, 1, 1), running_var(1, c, 1, 1),
        saved_mean(c, 0.0), saved_istd(c, 0.0) {
    std::fill(gamma.v.begin(), gamma.v.end(), T(1));
    std::fill(running_var.v.begin(), running_var.v.end(), T(1));
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, bool training) {
    y.assign_shape(x.n, x.c, x.h, x.w);
    const std::size_t ps = x.plane_size();
    const double m = static_cast<double>(x.n) * ps;
    for (int ci = 0; ci < channels; ++ci) {
      double mean, istd;
      if (training) {
        double s = 0.0, s2 = 0.0;
        for (int ni = 0; ni < x.n; ++ni) {
          const T* pl = x.plane(ni, ci);
          for (std::size_t i = 0; i < ps; ++i) {
            double v = pl[i];
            s += v;
            s2 += v * v;
          }
        }
        mean = s / m;
        double var = std::max(0.0, s2 / m - mean * mean);
        istd = 1.0 / std::sqrt(var + eps);
        running_mean.v[ci] =
            static_cast<T>((1.0 - momentum) * running_mean.v[ci] + momentum * mean);
        running_var.v[ci] =
            static_cast<T>((1.0 - momentum) * running_var.v[ci] + momentum * var);
      } else {
        mean = running_mean.v[ci];
        istd = 1.0 / std::sqrt(static_cast<double>(running_var.v[ci]) + eps);
      }
      saved_mean[ci] = mean;
      saved_istd[ci] = istd;
      const double g = gamma.v[ci], bb = beta.v[ci];
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        T* yp = y.plane(ni, ci);
        for (std::size_t i = 0; i < ps; ++i)
          yp[i] = static_cast<T>(g * ((xp[i] - mean) * istd) + bb);
      }
    }
  }

  // Training-mode backward (batch statistics participate in the graph).
  void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.assign_shape(x.n, x.c, x.h, x.w);
    const std::size_t ps = x.plane_size();
    const double m = static_cast<double>(x.n) * ps;
    for (int ci = 0; ci < channels; ++ci) {
      const double mean = saved_mean[ci], istd = saved_istd[ci];
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        const T* gp = gy.plane(ni, ci);
        for (std::size_t i = 0; i < ps; ++i) {
          double xhat = (xp[i] - mean) * istd;
          sum_gy += gp[i];
          sum_gy_xhat += gp[i] * xhat;
        }
      }
      ggamma.v[ci] += static_cast<T>(sum_gy_xhat);
      gbeta.v[ci] += static_cast<T>(sum_gy);
      const double g = gamma.v[ci];
      const double scale = g * istd / m;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        const T* gp = gy.plane(ni, ci);
        T* op = gx.plane(ni, ci);
        for (std::size_t i = 0; i < ps; ++i) {
          double xhat = (xp[i] - mean) * istd;
          op[i] = static_cast<T>(scale * (m * gp[i] - sum_gy - xhat * sum_gy_xhat));
        }
      }
    }
  }

  void zero_grad() {
    ggamma.zero();
    gbeta.zero();
  }

  template <typename Fn>
  void visit_params(const std::string& prefix, Fn&& fn) {
    fn(ParamRef<T>{prefix + ".gamma", &gamma, &ggamma});
    fn(ParamRef<T>{prefix + ".beta", &beta, &gbeta});
  }

  template <typename Fn>
  void visit_buffers(const std::string& prefix, Fn&& fn) {
    fn(BufferRef<T>{prefix + ".running_mean", &running_mean});
    fn(BufferRef<T>{prefix + ".running_var", &running_var});
  }
};

// ---------------------------------------------------------------------------
// Elementwise ReLU. Backward masks with the forward output.
// ---------------------------------------------------------------------------
template <typename T>
struct Relu {
  static void forward(const Tensor<T>& x, Tensor<T>& y) {
    y.assign_shape(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  }
  static void backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.assign_shape(y.n, y.c, y.h, y.w);
    for (std::size_t i = 0; i < y.size(); ++i)
      gx.v[i] = y.v[i] > T(0) ? gy.v[i] : T(0);
  }
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Requires even spatial dims. Ties resolve to the
// first element in (dy, dx) scan order, which keeps replay deterministic.
// ---------------------------------------------------------------------------
template <typename T>
struct MaxPool2 {
  std::vector<std::uint8_t> codes;

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    if (x.h % 2 || x.w % 2) throw ConfigError("MaxPool2: odd spatial dims");
    const int oh = x.h / 2, ow = x.w / 2;
    y.assign_shape(x.n, x.c, oh, ow);
    codes.assign(y.size(), 0);
    std::size_t o = 0;
    for (int ni = 0; ni < x.n; ++ni)
      for (int ci = 0; ci < x.c; ++ci) {
        const T* pl = x.plane(ni, ci);
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx, ++o) {
            T best = pl[(2 * yy) * x.w + 2 * xx];
            std::uint8_t code = 0;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                T v = pl[(2 * yy + dy) * x.w + 2 * xx + dx];
                if (v > best) {
                  best = v;
                  code = static_cast<std::uint8_t>(dy * 2 + dx);
                }
              }
            y.v[o] = best;
            codes[o] = code;
          }
      }
  }

  void backward(const Tensor<T>& gy, int in_h, int in_w, Tensor<T>& gx) const {
    gx.assign_shape(gy.n, gy.c, in_h, in_w);
    std::size_t o = 0;
    for (int ni = 0; ni < gy.n; ++ni)
      for (int ci = 0; ci < gy.c; ++ci) {
        T* pl = gx.plane(ni, ci);
        for (int yy = 0; yy < gy.h; ++yy)
          for (int xx = 0; xx < gy.w; ++xx, ++o) {
            int dy = codes[o] >> 1, dx = codes[o] & 1;
            pl[(2 * yy + dy) * in_w + 2 * xx + dx] += gy.v[o];
          }
      }
  }
};

// ---------------------------------------------------------------------------
// 2x2 transposed convolution with stride 2 (exact 2x upsampling). Weight
// layout [in_c, out_c, 2, 2]. Implemented as one GEMM per kernel offset.
// ---------------------------------------------------------------------------
template <typename T>
struct TConv2 {
  int in_c = 0, out_c = 0;
  Tensor<T> w, b, gw, gb;  // w: [in_c, out_c, 2, 2]

  TConv2() = default;
  TConv2(int in_channels, int out_channels)
      : in_c(in_channels), out_c(out_channels), w(in_channels, out_channels, 2, 2),
        b(1, out_channels, 1, 1), gw(in_channels, out_channels, 2, 2),
        gb(1, out_channels, 1, 1) {}

  void init_he(Rng& rng) {
    double fan_in = static_cast<double>(in_c) * 4.0;
    double stddev = std::sqrt(2.0 / fan_in);
    for (auto& x : w.v) x = static_cast<T>(rng.normal() * stddev);
    b.zero();
  }

  // Gathers the stride-2 offset slice [ic][dy][dx] into a dense [ic, oc] map.
  void slice_weight(int dy, int dx, std::vector<T>& out) const {
    out.resize(static_cast<std::size_t>(in_c) * out_c);
    for (int ic = 0; ic < in_c; ++ic)
      for (int oc = 0; oc < out_c; ++oc)
        out[static_cast<std::size_t>(ic) * out_c + oc] =
            w.v[((static_cast<std::size_t>(ic) * out_c + oc) * 2 + dy) * 2 + dx];
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, Workspace<T>& ws) const {
    const int H = x.h, W = x.w, P = H * W;
    y.assign_shape(x.n, out_c, 2 * H, 2 * W);
    std::vector<T> wslice;
    ws.aux.resize(static_cast<std::size_t>(out_c) * P);
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        slice_weight(dy, dx, wslice);
        Eigen::Map<const detail::RowMat<T>> wm(wslice.data(), in_c, out_c);
        for (int ni = 0; ni < x.n; ++ni) {
          Eigen::Map<const detail::RowMat<T>> xm(x.plane(ni, 0), in_c, P);
          Eigen::Map<detail::RowMat<T>> sm(ws.aux.data(), out_c, P);
          sm.noalias() = wm.transpose() * xm;
          for (int oc = 0; oc < out_c; ++oc) {
            const T* srow = ws.aux.data() + static_cast<std::size_t>(oc) * P;
            T* opl = y.plane(ni, oc);
            T bias = b.v[oc];
            for (int yy = 0; yy < H; ++yy)
              for (int xx = 0; xx < W; ++xx)
                opl[(2 * yy + dy) * (2 * W) + 2 * xx + dx] =
                    srow[yy * W + xx] + bias;
          }
        }
      }
  }

  void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx,
                Workspace<T>& ws) {
    const int H = x.h, W = x.w, P = H * W;
    gx.assign_shape(x.n, in_c, H, W);
    std::vector<T> wslice, gslice(static_cast<std::size_t>(in_c) * out_c);
    ws.aux.resize(static_cast<std::size_t>(out_c) * P);
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        slice_weight(dy, dx, wslice);
        Eigen::Map<const detail::RowMat<T>> wm(wslice.data(), in_c, out_c);
        Eigen::Map<detail::RowMat<T>> gwm(gslice.data(), in_c, out_c);
        gwm.setZero();
        for (int ni = 0; ni < x.n; ++ni) {
          // Gather the strided slice of gy for this offset.
          for (int oc = 0; oc < out_c; ++oc) {
            const T* gpl = gy.plane(ni, oc);
            T* srow = ws.aux.data() + static_cast<std::size_t>(oc) * P;
            for (int yy = 0; yy < H; ++yy)
              for (int xx = 0; xx < W; ++xx)
                srow[yy * W + xx] = gpl[(2 * yy + dy) * (2 * W) + 2 * xx + dx];
          }
          Eigen::Map<const detail::RowMat<T>> gm(ws.aux.data(), out_c, P);
          Eigen::Map<const detail::RowMat<T>> xm(x.plane(ni, 0), in_c, P);
          Eigen::Map<detail::RowMat<T>, 0, Eigen::OuterStride<>> gxm(
              gx.plane(ni, 0), in_c, P, Eigen::OuterStride<>(P));
          gxm.noalias() += wm * gm;
          gwm.noalias() += xm * gm.transpose();
        }
        for (int ic = 0; ic < in_c; ++ic)
          for (int oc = 0; oc < out_c; ++oc)
            gw.v[((static_cast<std::size_t>(ic) * out_c + oc) * 2 + dy) * 2 + dx] +=
                gslice[static_cast<std::size_t>(ic) * out_c + oc];
      }
    for (int oc = 0; oc < out_c; ++oc) {
      double s = 0.0;
      for (int ni = 0; ni < gy.n; ++ni) {
        const T* gpl = gy.plane(ni, oc);
        for (std::size_t i = 0; i < gy.plane_size(); ++i) s += gpl[i];
      }
      gb.v[oc] += static_cast<T>(s);
    }
  }

  void zero_grad() {
    gw.zero();
    gb.zero();
  }

  template <typename Fn>
  void visit_params(const std::string& prefix, Fn&& fn) {
    fn(ParamRef<T>{prefix + ".w", &w, &gw});
    fn(ParamRef<T>{prefix + ".b", &b, &gb});
  }
};

// ---------------------------------------------------------------------------
// Fixed bilinear 2x upsampling (align-corners=false), shared kernel with the
// pyramid code. No parameters.
// ---------------------------------------------------------------------------
template <typename T>
struct Bilinear2x {
  static void forward(const Tensor<T>& x, Tensor<T>& y) {
    y.assign_shape(x.n, x.c, 2 * x.h, 2 * x.w);
    for (int ni = 0; ni < x.n; ++ni)
      for (int ci = 0; ci < x.c; ++ci)
        detail::upsample2x_plane(x.plane(ni, ci), x.w, x.h, y.plane(ni, ci));
  }
  static void backward(const Tensor<T>& gy, int in_h, int in_w, Tensor<T>& gx) {
    gx.assign_shape(gy.n, gy.c, in_h, in_w);
    for (int ni = 0; ni < gy.n; ++ni)
      for (int ci = 0; ci < gy.c; ++ci)
        detail::upsample2x_plane_adjoint(gy.plane(ni, ci), in_w, in_h,
                                         gx.plane(ni, ci));
  }
};

// ---------------------------------------------------------------------------
// Channel softmax per pixel.
// ---------------------------------------------------------------------------
template <typename T>
struct SoftmaxChannel {
  static void forward(const Tensor<T>& x, Tensor<T>& y) {
    y.assign_shape(x.n, x.c, x.h, x.w);
    const std::size_t ps = x.plane_size();
    for (int ni = 0; ni < x.n; ++ni)
      for (std::size_t i = 0; i < ps; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int ci = 0; ci < x.c; ++ci)
          mx = std::max(mx, static_cast<double>(x.plane(ni, ci)[i]));
        double s = 0.0;
        for (int ci = 0; ci < x.c; ++ci)
          s += std::exp(static_cast<double>(x.plane(ni, ci)[i]) - mx);
        for (int ci = 0; ci < x.c; ++ci)
          y.plane(ni, ci)[i] =
              static_cast<T>(std::exp(static_cast<double>(x.plane(ni, ci)[i]) - mx) / s);
      }
  }
  static void backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.assign_shape(y.n, y.c, y.h, y.w);
    const std::size_t ps = y.plane_size();
    for (int ni = 0; ni < y.n; ++ni)
      for (std::size_t i = 0; i < ps; ++i) {
        double dot = 0.0;
        for (int ci = 0; ci < y.c; ++ci)
          dot += static_cast<double>(y.plane(ni, ci)[i]) * gy.plane(ni, ci)[i];
        for (int ci = 0; ci < y.c; ++ci)
          gx.plane(ni, ci)[i] = static_cast<T>(
              static_cast<double>(y.plane(ni, ci)[i]) * (gy.plane(ni, ci)[i] - dot));
      }
  }
};

// ---------------------------------------------------------------------------
// Per-pixel renormalization onto the probability simplex: y_k = x_k / sum(x).
// Used after bilinear upsampling of probability maps, where the inputs are
// non-negative and the sum is bounded away from zero.
// ---------------------------------------------------------------------------
template <typename T>
struct SimplexRenorm {
  static void forward(const Tensor<T>& x, Tensor<T>& y) {
    y.assign_shape(x.n, x.c, x.h, x.w);
    const std::size_t ps = x.plane_size();
    for (int ni = 0; ni < x.n; ++ni)
      for (std::size_t i = 0; i < ps; ++i) {
        double s = 0.0;
        for (int ci = 0; ci < x.c; ++ci) s += x.plane(ni, ci)[i];
        if (s <= 0.0) {
          for (int ci = 0; ci < x.c; ++ci)
            y.plane(ni, ci)[i] = static_cast<T>(1.0 / x.c);
        } else {
          for (int ci = 0; ci < x.c; ++ci)
            y.plane(ni, ci)[i] = static_cast<T>(x.plane(ni, ci)[i] / s);
        }
      }
  }
  static void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.assign_shape(x.n, x.c, x.h, x.w);
    const std::size_t ps = x.plane_size();
    for (int ni = 0; ni < x.n; ++ni)
      for (std::size_t i = 0; i < ps; ++i) {
        double s = 0.0;
        for (int ci = 0; ci < x.c; ++ci) s += x.plane(ni, ci)[i];
        if (s <= 0.0) {
          for (int ci = 0; ci < x.c; ++ci) gx.plane(ni, ci)[i] = T(0);
          continue;
        }
        double dot = 0.0;
        for (int ci = 0; ci < x.c; ++ci)
          dot += static_cast<double>(gy.plane(ni, ci)[i]) * (x.plane(ni, ci)[i] / s);
        for (int ci = 0; ci < x.c; ++ci)
          gx.plane(ni, ci)[i] = static_cast<T>((gy.plane(ni, ci)[i] - dot) / s);
      }
  }
};

}  // namespace munet
