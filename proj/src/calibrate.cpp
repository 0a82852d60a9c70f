#include "ricnn/calibrate.hpp"

#include <algorithm>
#include <cmath>

namespace ricnn {

const char* to_string(Calibrator c) {
  switch (c) {
    case Calibrator::None: return "none";
    case Calibrator::Sb: return "sb";
    case Calibrator::Gd: return "gd";
    case Calibrator::St: return "st";
    case Calibrator::Lbp: return "lbp";
    case Calibrator::LbpAdj: return "lbp-adj";
    case Calibrator::Max: return "max";
    case Calibrator::MaxAdj: return "max-adj";
  }
  return "?";
}

Calibrator parse_calibrator(const std::string& name) {
  for (Calibrator c : all_calibrators())
    if (name == to_string(c)) return c;
  throw InvalidArgument("unknown calibrator '" + name +
                        "' (expected none|sb|gd|st|lbp|lbp-adj|max|max-adj)");
}

const std::vector<Calibrator>& all_calibrators() {
  static const std::vector<Calibrator> v = {
      Calibrator::None, Calibrator::Sb,  Calibrator::Gd,
      Calibrator::St,   Calibrator::Lbp, Calibrator::LbpAdj,
      Calibrator::Max,  Calibrator::MaxAdj};
  return v;
}

GradientKernelPair sobel_polar_weights() {
  static const double sx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double sy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const auto& lat = PolarLattice::get(3);
  GradientKernelPair g;
  g.K = 3;
  g.sigma = 0.0;
  g.wx.resize(9);
  g.wy.resize(9);
  for (int s = 0; s < 9; ++s) {
    int cell = lat.cell_of_slot[s];
    g.wx[s] = sx[cell / 3][cell % 3];
    g.wy[s] = sy[cell / 3][cell % 3];
  }
  return g;
}

GradientKernelPair gaussian_polar_weights(int K) {
  const auto& lat = PolarLattice::get(K);
  GradientKernelPair g;
  g.K = K;
  g.sigma = K / 6.0;
  const double s2 = g.sigma * g.sigma;
  const double norm = -1.0 / (2.0 * 3.14159265358979323846 * s2 * s2);
  g.wx.resize(lat.slots());
  g.wy.resize(lat.slots());
  for (int s = 0; s < lat.slots(); ++s) {
    double x = lat.off_c[s], y = lat.off_r[s];
    double e = std::exp(-(x * x + y * y) / (2.0 * s2));
    g.wx[s] = norm * x * e;
    g.wy[s] = norm * y * e;
  }
  return g;
}

namespace {
inline uint8_t rotl8(uint8_t v, int m) {
  m &= 7;
  return static_cast<uint8_t>(((v << m) | (v >> (8 - m))) & 0xff);
}
}  // namespace

int64_t gradient_q(const double* key, const PolarLattice& lat,
                   const GradientKernelPair& kernels, double grad_eps,
                   bool* degenerate, double* gx_out, double* gy_out) {
  if (kernels.K > lat.K)
    throw InvalidArgument("gradient kernel window exceeds patch window");
  const int n = kernels.K * kernels.K;
  double gx = 0.0, gy = 0.0;
  for (int s = 0; s < n; ++s) {
    gx += kernels.wx[s] * key[s];
    gy += kernels.wy[s] * key[s];
  }
  if (gx_out) *gx_out = gx;
  if (gy_out) *gy_out = gy;
  if (std::hypot(gx, gy) < grad_eps) {
    if (degenerate) *degenerate = true;
    return 0;
  }
  if (degenerate) *degenerate = false;
  double deg = std::atan2(gy, gx) * (180.0 / 3.14159265358979323846);
  if (deg < 0) deg += 360.0;
  return angle_units(deg);
}

int code_rotation(const double* key, const PolarLattice& lat, bool adjacent,
                  bool* degenerate, uint8_t* code_out) {
  const int base = lat.ring_base[1];
  uint8_t code = 0;
  for (int i = 0; i < 8; ++i) {
    double d = adjacent ? key[base + i] - key[base + (i + 1) % 8]
                        : key[base + i] - key[0];
    if (d >= 0.0) code |= static_cast<uint8_t>(1u << i);
  }
  if (code_out) *code_out = code;
  int best = 0;
  uint8_t bestv = code;
  bool tie = false;
  for (int m = 1; m < 8; ++m) {
    uint8_t r = rotl8(code, m);
    if (r < bestv) {
      bestv = r;
      best = m;
      tie = false;
    } else if (r == bestv) {
      tie = true;
    }
  }
  if (degenerate) *degenerate = tie;
  return best;
}

int argmax_rotation(const double* key, const PolarLattice& lat, bool adjacent,
                    bool* degenerate) {
  const int base = lat.ring_base[1];
  double d[8];
  for (int i = 0; i < 8; ++i)
    d[i] = adjacent ? key[base + i] - key[base + (i + 1) % 8] : key[base + i];
  int best = 0;
  bool tie = false;
  for (int i = 1; i < 8; ++i) {
    if (d[i] > d[best]) {
      best = i;
      tie = false;
    } else if (d[i] == d[best]) {
      tie = true;
    }
  }
  if (degenerate) *degenerate = tie;
  return best;
}

void sort_perm(const double* key, const PolarLattice& lat, uint8_t* perm) {
  perm[0] = 0;
  for (int j = 1; j <= lat.rings; ++j) {
    const int base = lat.ring_base[j], nj = lat.ring_size[j];
    for (int i = 0; i < nj; ++i) perm[base + i] = static_cast<uint8_t>(base + i);
    // insertion sort, ascending by key value with original index tiebreak
    for (int i = 1; i < nj; ++i) {
      uint8_t p = perm[base + i];
      double v = key[p];
      int m = i - 1;
      while (m >= 0 && key[perm[base + m]] > v) {
        perm[base + m + 1] = perm[base + m];
        --m;
      }
      perm[base + m + 1] = p;
    }
  }
}

void plan_from_q(int64_t q, const PolarLattice& lat, uint8_t* src1,
                 uint8_t* src2, double* ring_frac, bool* pure_perm) {
  q = ((q % kTurn) + kTurn) % kTurn;
  bool pure = true;
  src1[0] = src2[0] = 0;
  ring_frac[0] = 0.0;
  for (int j = 1; j <= lat.rings; ++j) {
    const int base = lat.ring_base[j], nj = lat.ring_size[j];
    // shift in samples = q * nj / kTurn; kTurn = 2^27, so the fractional part
    // is exactly representable
    const int64_t num = q * nj;
    const int64_t whole = num >> (kAngleBits + 3);
    const int64_t rem = num & (kTurn - 1);
    const int shift = static_cast<int>(whole % nj);
    ring_frac[j] = static_cast<double>(rem) / static_cast<double>(kTurn);
    if (rem != 0) pure = false;
    for (int i = 0; i < nj; ++i) {
      src1[base + i] = static_cast<uint8_t>(base + (i + shift) % nj);
      src2[base + i] = static_cast<uint8_t>(base + (i + shift + 1) % nj);
    }
  }
  if (pure_perm) *pure_perm = pure;
}

Calibration decide_gradient(const double* key, const PolarLattice& lat,
                            const GradientKernelPair& kernels, double grad_eps,
                            double* gx_out, double* gy_out) {
  Calibration cal;
  cal.kind = kernels.sigma == 0.0 ? Calibrator::Sb : Calibrator::Gd;
  cal.q = gradient_q(key, lat, kernels, grad_eps, &cal.degenerate, gx_out,
                     gy_out);
  return cal;
}

Calibration decide(Calibrator kind, const double* key, const PolarLattice& lat,
                   double grad_eps) {
  Calibration cal;
  cal.kind = kind;
  switch (kind) {
    case Calibrator::None:
      return cal;
    case Calibrator::Sb:
      return decide_gradient(key, lat, sobel_polar_weights(), grad_eps);
    case Calibrator::Gd:
      return decide_gradient(key, lat, gaussian_polar_weights(lat.K),
                             grad_eps);
    case Calibrator::St:
      cal.perm.resize(lat.slots());
      sort_perm(key, lat, cal.perm.data());
      return cal;
    case Calibrator::Lbp:
    case Calibrator::LbpAdj:
      cal.k = code_rotation(key, lat, kind == Calibrator::LbpAdj,
                            &cal.degenerate);
      cal.q = int64_t{(8 - cal.k) % 8} << kAngleBits;
      return cal;
    case Calibrator::Max:
    case Calibrator::MaxAdj:
      cal.k = argmax_rotation(key, lat, kind == Calibrator::MaxAdj,
                              &cal.degenerate);
      cal.q = int64_t{cal.k} << kAngleBits;
      return cal;
  }
  throw InvalidArgument("bad calibrator enum");
}

RoutingPlan make_plan(const Calibration& cal, const PolarLattice& lat) {
  RoutingPlan plan;
  plan.K = lat.K;
  const int n = lat.slots();
  plan.src1.resize(n);
  plan.src2.resize(n);
  plan.ring_frac.assign(lat.rings + 1, 0.0);
  if (!cal.perm.empty()) {
    if (static_cast<int>(cal.perm.size()) != n)
      throw InvalidArgument("permutation length does not match window");
    plan.pure_perm = true;
    for (int s = 0; s < n; ++s) plan.src1[s] = plan.src2[s] = cal.perm[s];
    return plan;
  }
  plan_from_q(cal.q, lat, plan.src1.data(), plan.src2.data(),
              plan.ring_frac.data(), &plan.pure_perm);
  return plan;
}

}  // namespace ricnn
