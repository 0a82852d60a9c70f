#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ricnn/polar.hpp"

namespace ricnn {

// The non-learnable calibration operator applied to each polar patch before
// the learned weights. `None` is the identity (plain convolution).
enum class Calibrator : int {
  None = 0,
  Sb,      // Sobel gradient alignment (inner ring)
  Gd,      // Gaussian-derivative gradient alignment (whole window)
  St,      // per-ring ascending sort
  Lbp,     // binary code vs center, rotated to its minimal value
  LbpAdj,  // binary code of adjacent differences
  Max,     // strongest sample moved to slot 1
  MaxAdj,  // strongest adjacent difference moved to slot 1
};

constexpr int kCalibratorCount = 8;

const char* to_string(Calibrator c);
Calibrator parse_calibrator(const std::string& name);
const std::vector<Calibrator>& all_calibrators();

// Angle bookkeeping: one full turn = 8 * 2^24 integer units (one unit is
// 45/2^24 degrees), so 45-degree steps are exact and per-ring sample shifts
// q * n_j / turn reduce to integer arithmetic with dyadic remainders. That is
// what makes "same patch, rings rotated by a 45-degree multiple" calibrate
// bit-identically in 64-bit.
constexpr int kAngleBits = 24;
constexpr int64_t kTurn = int64_t{8} << kAngleBits;

inline int64_t angle_units(double deg) {
  double m = std::fmod(deg, 360.0);
  if (m < 0) m += 360.0;
  int64_t q = std::llround(m * (static_cast<double>(kTurn) / 360.0));
  return q % kTurn;
}

// Polar-mapped x/y derivative weights, indexed by flat slot. Sobel is the
// fixed 3x3 pair; the Gaussian pair covers the whole window with
// sigma = K/6. wx responds to +column gradients, wy to +row.
struct GradientKernelPair {
  int K = 0;
  double sigma = 0.0;
  std::vector<double> wx, wy;
};

GradientKernelPair sobel_polar_weights();
GradientKernelPair gaussian_polar_weights(int K);

template <class T>
constexpr double default_grad_eps() {
  return sizeof(T) == 4 ? 1e-6 : 1e-8;
}

// What a calibrator decided for one patch. Gradient kinds store the
// quantized angle q; code/argmax kinds additionally record the code rotation
// count k; the sort kind stores its permutation. `degenerate` flags the
// inputs where the decision is ambiguous (zero gradient, periodic code,
// tied maximum) and the identity or smallest-index rule was used.
struct Calibration {
  Calibrator kind = Calibrator::None;
  bool degenerate = false;
  int64_t q = 0;
  int k = -1;
  std::vector<uint8_t> perm;

  double angle_deg() const {
    return 360.0 * static_cast<double>(q) / static_cast<double>(kTurn);
  }
};

// Uniform per-slot routing: out[s] = (1-f)*in[src1[s]] + f*in[src2[s]] with f
// shared by all slots of a ring. Pure permutations have every f = 0 and are
// applied without arithmetic.
struct RoutingPlan {
  int K = 0;
  bool pure_perm = true;
  std::vector<uint8_t> src1, src2;  // K*K entries
  std::vector<double> ring_frac;    // [0] unused (center), then one per ring
};

RoutingPlan make_plan(const Calibration& cal, const PolarLattice& lat);

// Allocation-free primitives shared by the patch API and the conv inner
// loop. Keys are single-channel doubles in flat slot order.
int64_t gradient_q(const double* key, const PolarLattice& lat,
                   const GradientKernelPair& kernels, double grad_eps,
                   bool* degenerate, double* gx_out = nullptr,
                   double* gy_out = nullptr);
int code_rotation(const double* key, const PolarLattice& lat, bool adjacent,
                  bool* degenerate, uint8_t* code_out = nullptr);
int argmax_rotation(const double* key, const PolarLattice& lat, bool adjacent,
                    bool* degenerate);
void sort_perm(const double* key, const PolarLattice& lat, uint8_t* perm);
// src1/src2 get K*K entries, ring_frac gets rings+1 (entry 0 unused)
void plan_from_q(int64_t q, const PolarLattice& lat, uint8_t* src1,
                 uint8_t* src2, double* ring_frac, bool* pure_perm);

// Decision from a single-channel key in flat slot order (always double).
Calibration decide(Calibrator kind, const double* key, const PolarLattice& lat,
                   double grad_eps);
Calibration decide_gradient(const double* key, const PolarLattice& lat,
                            const GradientKernelPair& kernels, double grad_eps,
                            double* gx_out = nullptr, double* gy_out = nullptr);

template <class T>
void apply_plan(const RoutingPlan& plan, const T* in, T* out) {
  const int n = plan.K * plan.K;
  if (plan.pure_perm) {
    for (int s = 0; s < n; ++s) out[s] = in[plan.src1[s]];
    return;
  }
  const auto& lat = PolarLattice::get(plan.K);
  out[0] = in[0];
  for (int j = 1; j <= lat.rings; ++j) {
    const int base = lat.ring_base[j], nj = lat.ring_size[j];
    const T f = static_cast<T>(plan.ring_frac[j]);
    if (f == T{0}) {
      for (int i = 0; i < nj; ++i)
        out[base + i] = in[plan.src1[base + i]];
    } else {
      for (int i = 0; i < nj; ++i)
        out[base + i] = (T(1) - f) * in[plan.src1[base + i]] +
                        f * in[plan.src2[base + i]];
    }
  }
}

// Per-slot mean over channels; decisions are always taken on this key so all
// channels of a patch are realigned identically.
template <class T>
std::vector<double> multi_channel_key(const PolarPatch<T>& p) {
  const int n = p.K * p.K;
  std::vector<double> key(n, 0.0);
  for (int c = 0; c < p.channels; ++c) {
    const T* v = p.chan(c);
    for (int s = 0; s < n; ++s) key[s] += static_cast<double>(v[s]);
  }
  const double inv = 1.0 / p.channels;
  for (int s = 0; s < n; ++s) key[s] *= inv;
  return key;
}

template <class T>
struct Calibrated {
  Calibration cal;
  PolarPatch<T> patch;
};

template <class T>
Calibrated<T> apply_calibration(const Calibration& cal,
                                const PolarPatch<T>& p) {
  const auto& lat = PolarLattice::get(p.K);
  RoutingPlan plan = make_plan(cal, lat);
  Calibrated<T> out{cal, PolarPatch<T>(p.K, p.channels)};
  for (int c = 0; c < p.channels; ++c)
    apply_plan(plan, p.chan(c), out.patch.chan(c));
  return out;
}

template <class T>
Calibrated<T> calibrate(Calibrator kind, const PolarPatch<T>& p,
                        double grad_eps = default_grad_eps<T>()) {
  const auto& lat = PolarLattice::get(p.K);
  std::vector<double> key = multi_channel_key(p);
  return apply_calibration(decide(kind, key.data(), lat, grad_eps), p);
}

// Gradient alignment with explicit kernels; `kernels.K` may be smaller than
// the patch (Sobel reads only the center + inner ring of larger windows).
template <class T>
Calibrated<T> calibrate_gradient(const PolarPatch<T>& p,
                                 const GradientKernelPair& kernels,
                                 double grad_eps = default_grad_eps<T>()) {
  const auto& lat = PolarLattice::get(p.K);
  std::vector<double> key = multi_channel_key(p);
  return apply_calibration(
      decide_gradient(key.data(), lat, kernels, grad_eps), p);
}

}  // namespace ricnn
