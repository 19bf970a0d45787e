#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "munet/core.hpp"

namespace munet {

// Dense NCHW tensor. Everything in the network substrate is templated on the
// scalar so the same graph can run in float (training) and double (gradient
// checking in tests).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T* plane(int ni, int ci) {
    return v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size();
  }
  const T* plane(int ni, int ci) const {
    return v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size();
  }

  T& at(int ni, int ci, int y, int x) {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }

  void assign_shape(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0));
  }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) throw ConfigError("accumulate: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
}

// Channel-wise concatenation of two tensors with equal N/H/W.
template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ConfigError("concat_channels: spatial shape mismatch");
  out.assign_shape(a.n, a.c + b.c, a.h, a.w);
  std::size_t ps = a.plane_size();
  for (int ni = 0; ni < a.n; ++ni) {
    for (int ci = 0; ci < a.c; ++ci)
      std::copy_n(a.plane(ni, ci), ps, out.plane(ni, ci));
    for (int ci = 0; ci < b.c; ++ci)
      std::copy_n(b.plane(ni, ci), ps, out.plane(ni, a.c + ci));
  }
}

// Splits a gradient flowing into a concatenated tensor back into the parts.
template <typename T>
void split_channels(const Tensor<T>& g, int c_a, Tensor<T>& ga, Tensor<T>& gb) {
  ga.assign_shape(g.n, c_a, g.h, g.w);
  gb.assign_shape(g.n, g.c - c_a, g.h, g.w);
  std::size_t ps = g.plane_size();
  for (int ni = 0; ni < g.n; ++ni) {
    for (int ci = 0; ci < c_a; ++ci)
      std::copy_n(g.plane(ni, ci), ps, ga.plane(ni, ci));
    for (int ci = 0; ci < g.c - c_a; ++ci)
      std::copy_n(g.plane(ni, c_a + ci), ps, gb.plane(ni, ci));
  }
}

// Named view of a learnable tensor, used by the optimizer and checkpoints.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

// Non-learnable persistent state (batch-norm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

// Scratch buffers shared across layers so im2col staging memory is allocated
// once per model rather than once per convolution.
template <typename T>
struct Workspace {
  std::vector<T> col;
  std::vector<T> aux;
};

// ---------------------------------------------------------------------------
// Bridges between the grid types and network tensors.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> mosaic_to_tensor(const Mosaic& m) {
  Tensor<T> t(1, 1, m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) t.v[i] = static_cast<T>(m.px[i]);
  return t;
}

// Copies one image into batch slot ni of t (channel 0).
template <typename T>
void mosaic_into_tensor(const Mosaic& m, Tensor<T>& t, int ni) {
  if (t.c != 1 || t.h != m.height || t.w != m.width)
    throw ConfigError("mosaic_into_tensor: shape mismatch");
  T* dst = t.plane(ni, 0);
  for (std::size_t i = 0; i < m.size(); ++i) dst[i] = static_cast<T>(m.px[i]);
}

// Extracts batch sample ni as a double-precision channel field.
template <typename T>
ChannelField field_from_tensor(const Tensor<T>& t, int ni) {
  ChannelField f(t.w, t.h, t.c);
  const std::size_t ps = t.plane_size();
  for (int ci = 0; ci < t.c; ++ci) {
    const T* src = t.plane(ni, ci);
    double* dst = f.plane(ci);
    for (std::size_t i = 0; i < ps; ++i) dst[i] = static_cast<double>(src[i]);
  }
  return f;
}

// Writes a channel field into batch slot ni of t.
template <typename T>
void field_into_tensor(const ChannelField& f, Tensor<T>& t, int ni) {
  if (t.c != f.channels || t.h != f.height || t.w != f.width)
    throw ConfigError("field_into_tensor: shape mismatch");
  const std::size_t ps = t.plane_size();
  for (int ci = 0; ci < t.c; ++ci) {
    const double* src = f.plane(ci);
    T* dst = t.plane(ni, ci);
    for (std::size_t i = 0; i < ps; ++i) dst[i] = static_cast<T>(src[i]);
  }
}

}  // namespace munet
