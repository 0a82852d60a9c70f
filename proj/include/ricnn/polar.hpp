#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "ricnn/errors.hpp"
#include "ricnn/tensor.hpp"

namespace ricnn {

// Concentric sampling lattice for an odd KxK window: one center plus rings
// j = 1..(K-1)/2 with 8j samples each, sample i of ring j sitting at angle
// (i-1) * 360/(8j) degrees measured clockwise-positive from the +column axis,
// offset (row, col) = (j sin t, j cos t). Flattened slot order is center,
// ring 1, ring 2, ... (K*K slots total).
//
// Every slot is also paired with one cell of the KxK grid: ring j maps onto
// the Chebyshev shell max(|dr|,|dc|) = j (both have 8j members) by matching
// clockwise angular order. For K=3 this is the nearest-cell map; a global
// nearest-cell map would not be one-to-one for K >= 5.
struct PolarLattice {
  int K = 0;
  int rings = 0;
  std::vector<int> ring_size;  // [0]=1 for the center, then 8j
  std::vector<int> ring_base;  // first flat slot of each ring; center slot 0
  std::vector<double> off_r, off_c;  // per slot
  std::vector<int> ring_of_slot;     // 0 for the center
  std::vector<int> cell_of_slot;     // slot -> row-major cell in the window
  std::vector<int> slot_of_cell;     // inverse

  // Fixed 4-point bilinear stencil per slot (offsets are position-free).
  struct Tap {
    int dr[4], dc[4];
    double w[4];
  };
  std::vector<Tap> taps;

  int slots() const { return K * K; }

  static const PolarLattice& get(int K);  // cached; K in {3,5,7}
};

// sin/cos in degrees, exact at multiples of 90
double deg_sin(double deg);
double deg_cos(double deg);

// Values of one KxK neighborhood in flat slot order, channel-major.
template <class T>
struct PolarPatch {
  int K = 0;
  int channels = 0;
  std::vector<T> v;  // channels * K * K, [ch*K*K + slot]

  PolarPatch() = default;
  PolarPatch(int k, int ch) : K(k), channels(ch), v(size_t(ch) * k * k, T{}) {}

  T* chan(int c) { return v.data() + size_t(c) * K * K; }
  const T* chan(int c) const { return v.data() + size_t(c) * K * K; }

  bool operator==(const PolarPatch&) const = default;
};

// One channel plane gather at window center (r0, c0); out-of-image taps read
// zero. `out` receives K*K values in slot order.
template <class T>
void gather_polar(const T* plane, int64_t h, int64_t w, int64_t r0, int64_t c0,
                  const PolarLattice& lat, T* out) {
  const int R = lat.rings;
  const bool interior =
      r0 >= R && c0 >= R && r0 + R < h && c0 + R < w;
  const int n = lat.slots();
  if (interior) {
    const T* base = plane + r0 * w + c0;
    for (int s = 0; s < n; ++s) {
      const auto& t = lat.taps[s];
      double acc = 0.0;
      for (int q = 0; q < 4; ++q)
        acc += t.w[q] * static_cast<double>(base[t.dr[q] * w + t.dc[q]]);
      out[s] = static_cast<T>(acc);
    }
  } else {
    for (int s = 0; s < n; ++s) {
      const auto& t = lat.taps[s];
      double acc = 0.0;
      for (int q = 0; q < 4; ++q) {
        int64_t rr = r0 + t.dr[q], cc = c0 + t.dc[q];
        if (rr >= 0 && rr < h && cc >= 0 && cc < w)
          acc += t.w[q] * static_cast<double>(plane[rr * w + cc]);
      }
      out[s] = static_cast<T>(acc);
    }
  }
}

// Same window, but each slot reads its paired grid cell directly (integer
// reads, no interpolation). This is what the identity calibrator and the
// plain convolution use.
template <class T>
void gather_grid(const T* plane, int64_t h, int64_t w, int64_t r0, int64_t c0,
                 const PolarLattice& lat, T* out) {
  const int K = lat.K, R = lat.rings;
  const bool interior = r0 >= R && c0 >= R && r0 + R < h && c0 + R < w;
  if (interior) {
    const T* base = plane + r0 * w + c0;
    for (int s = 0; s < K * K; ++s) {
      int cell = lat.cell_of_slot[s];
      out[s] = base[(cell / K - R) * w + (cell % K - R)];
    }
  } else {
    for (int s = 0; s < K * K; ++s) {
      int cell = lat.cell_of_slot[s];
      int64_t rr = r0 + cell / K - R, cc = c0 + cell % K - R;
      out[s] = (rr >= 0 && rr < h && cc >= 0 && cc < w) ? plane[rr * w + cc]
                                                        : T{};
    }
  }
}

template <class T>
PolarPatch<T> extract_patch(const Tensor<T>& t, int64_t b, int64_t r0,
                            int64_t c0, int K) {
  const auto& lat = PolarLattice::get(K);
  const auto& s = t.shape();
  if (b < 0 || b >= s.n || r0 < 0 || r0 >= s.h || c0 < 0 || c0 >= s.w)
    throw InvalidArgument("patch center out of range");
  PolarPatch<T> p(K, static_cast<int>(s.c));
  for (int64_t ch = 0; ch < s.c; ++ch)
    gather_polar(t.plane(b, ch), s.h, s.w, r0, c0, lat, p.chan(ch));
  return p;
}

template <class T>
PolarPatch<T> extract_patch_grid(const Tensor<T>& t, int64_t b, int64_t r0,
                                 int64_t c0, int K) {
  const auto& lat = PolarLattice::get(K);
  const auto& s = t.shape();
  if (b < 0 || b >= s.n || r0 < 0 || r0 >= s.h || c0 < 0 || c0 >= s.w)
    throw InvalidArgument("patch center out of range");
  PolarPatch<T> p(K, static_cast<int>(s.c));
  for (int64_t ch = 0; ch < s.c; ++ch)
    gather_grid(t.plane(b, ch), s.h, s.w, r0, c0, lat, p.chan(ch));
  return p;
}

// Circular shift with linear interpolation between neighbors:
// out[i] = (1-f) * ring[i + floor(s)] + f * ring[i + floor(s) + 1] (mod n).
// Integer s is a pure permutation (no arithmetic on the values at all).
template <class T>
std::vector<T> ring_shift(const T* ring, int n, double s) {
  if (n <= 0) throw InvalidArgument("empty ring");
  double fl = std::floor(s);
  double f = s - fl;
  int64_t k = static_cast<int64_t>(fl) % n;
  if (k < 0) k += n;
  std::vector<T> out(static_cast<size_t>(n));
  if (f == 0.0) {
    for (int i = 0; i < n; ++i) out[i] = ring[(i + k) % n];
  } else {
    T tf = static_cast<T>(f);
    for (int i = 0; i < n; ++i) {
      out[i] = static_cast<T>((T(1) - tf) * ring[(i + k) % n] +
                              tf * ring[(i + k + 1) % n]);
    }
  }
  return out;
}

template <class T>
std::vector<T> ring_shift(const std::vector<T>& ring, double s) {
  return ring_shift(ring.data(), static_cast<int>(ring.size()), s);
}

// Content rotation by `deg` clockwise-positive about the plane center
// ((h-1)/2, (w-1)/2), inverse-mapped bilinear with zero fill. Multiples of
// 90 degrees take an exact index-permutation path.
template <class T>
void rotate_plane(const T* src, T* dst, int64_t h, int64_t w, double deg) {
  double m = std::fmod(deg, 360.0);
  if (m < 0) m += 360.0;
  if (std::fmod(m, 90.0) == 0.0) {
    int k = static_cast<int>(m / 90.0) & 3;
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c < w; ++c) {
        int64_t rr, cc;
        switch (k) {
          case 0: rr = r; cc = c; break;
          case 1: rr = h - 1 - c; cc = r; break;
          case 2: rr = h - 1 - r; cc = w - 1 - c; break;
          default: rr = c; cc = w - 1 - r; break;
        }
        dst[r * w + c] = src[rr * w + cc];
      }
    return;
  }
  const double rad = m * (3.14159265358979323846 / 180.0);
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double mr = 0.5 * static_cast<double>(h - 1);
  const double mc = 0.5 * static_cast<double>(w - 1);
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      double ro = static_cast<double>(r) - mr, co = static_cast<double>(c) - mc;
      double ir = ro * cs - co * sn + mr;
      double ic = co * cs + ro * sn + mc;
      double fr = std::floor(ir), fc = std::floor(ic);
      double ar = ir - fr, ac = ic - fc;
      int64_t r0 = static_cast<int64_t>(fr), c0 = static_cast<int64_t>(fc);
      auto px = [&](int64_t rr, int64_t cc) -> double {
        return (rr >= 0 && rr < h && cc >= 0 && cc < w)
                   ? static_cast<double>(src[rr * w + cc])
                   : 0.0;
      };
      double v = (1 - ar) * ((1 - ac) * px(r0, c0) + ac * px(r0, c0 + 1)) +
                 ar * ((1 - ac) * px(r0 + 1, c0) + ac * px(r0 + 1, c0 + 1));
      dst[r * w + c] = static_cast<T>(v);
    }
  }
}

template <class T>
Tensor<T> rotate_image(const Tensor<T>& t, double deg) {
  const auto& s = t.shape();
  if (s.h != s.w)
    throw InvalidArgument("rotate_image requires square planes, got " +
                          s.str());
  Tensor<T> out(s);
  for (int64_t b = 0; b < s.n; ++b)
    for (int64_t ch = 0; ch < s.c; ++ch)
      rotate_plane(t.plane(b, ch), out.plane(b, ch), s.h, s.w, deg);
  return out;
}

// Exact quarter-turn permutation (k of them, clockwise-positive), also used
// to map feature-map positions in the equivariance checks.
template <class T>
Tensor<T> rot90(const Tensor<T>& t, int k) {
  int kk = ((k % 4) + 4) % 4;
  return rotate_image(t, 90.0 * kk);
}

}  // namespace ricnn
