#pragma once

#include <algorithm>
#include <vector>

namespace munet::detail {

// Sampling positions for 2x bilinear upscaling of an n-sample axis.
// Output sample o reads source coordinate o/2 - 0.25 (half-pixel centers),
// clamped at the borders.
struct Tap {
  int lo = 0;
  int hi = 0;
  double w_hi = 0.0;  // weight of the hi sample; lo gets 1 - w_hi
};

inline std::vector<Tap> upsample2x_taps(int n_src) {
  std::vector<Tap> taps(static_cast<std::size_t>(n_src) * 2);
  for (int o = 0; o < 2 * n_src; ++o) {
    double s = 0.5 * o - 0.25;
    int lo = static_cast<int>(std::floor(s));
    double f = s - lo;
    int hi = lo + 1;
    if (lo < 0) { lo = 0; hi = 0; f = 0.0; }
    if (hi > n_src - 1) { hi = n_src - 1; lo = n_src - 1; f = 0.0; }
    taps[o] = Tap{lo, hi, f};
  }
  return taps;
}

// dst is (2h x 2w), src is (h x w), both row-major single planes.
template <class T>
void upsample2x_plane(const T* src, int w, int h, T* dst) {
  auto tx = upsample2x_taps(w);
  auto ty = upsample2x_taps(h);
  for (int oy = 0; oy < 2 * h; ++oy) {
    const T* r0 = src + static_cast<std::size_t>(ty[oy].lo) * w;
    const T* r1 = src + static_cast<std::size_t>(ty[oy].hi) * w;
    T fy = static_cast<T>(ty[oy].w_hi);
    T* out = dst + static_cast<std::size_t>(oy) * 2 * w;
    for (int ox = 0; ox < 2 * w; ++ox) {
      const auto& t = tx[ox];
      T fx = static_cast<T>(t.w_hi);
      T top = r0[t.lo] + fx * (r0[t.hi] - r0[t.lo]);
      T bot = r1[t.lo] + fx * (r1[t.hi] - r1[t.lo]);
      out[ox] = top + fy * (bot - top);
    }
  }
}

// Adjoint of upsample2x_plane: scatters output-gradient mass back onto the
// source grid with the same weights. gsrc must be zeroed by the caller.
template <class T>
void upsample2x_plane_adjoint(const T* gdst, int w, int h, T* gsrc) {
  auto tx = upsample2x_taps(w);
  auto ty = upsample2x_taps(h);
  for (int oy = 0; oy < 2 * h; ++oy) {
    T fy = static_cast<T>(ty[oy].w_hi);
    T* g0 = gsrc + static_cast<std::size_t>(ty[oy].lo) * w;
    T* g1 = gsrc + static_cast<std::size_t>(ty[oy].hi) * w;
    const T* in = gdst + static_cast<std::size_t>(oy) * 2 * w;
    for (int ox = 0; ox < 2 * w; ++ox) {
      const auto& t = tx[ox];
      T fx = static_cast<T>(t.w_hi);
      T g = in[ox];
      g0[t.lo] += (T(1) - fy) * (T(1) - fx) * g;
      g0[t.hi] += (T(1) - fy) * fx * g;
      g1[t.lo] += fy * (T(1) - fx) * g;
      g1[t.hi] += fy * fx * g;
    }
  }
}

// Mirror index into [0, n) without repeating the border sample
// (..., 2, 1 | 0, 1, ..., n-1 | n-2, n-3, ...). Degenerates to clamping
// for n == 1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace munet::detail
