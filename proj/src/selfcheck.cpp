#include "ricnn/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ricnn/layers.hpp"
#include "ricnn/net.hpp"
#include "ricnn/rng.hpp"

namespace ricnn {

namespace {

PolarPatch<double> random_patch(int K, Rng& rng) {
  PolarPatch<double> p(K, 1);
  for (auto& v : p.v) v = rng.uniform(-1.0, 1.0);
  return p;
}

// rotate the sampled field by k*45 degrees: every ring slides k*j samples
PolarPatch<double> shift_patch(const PolarPatch<double>& p, int k) {
  const auto& lat = PolarLattice::get(p.K);
  PolarPatch<double> out(p.K, p.channels);
  for (int c = 0; c < p.channels; ++c) {
    const double* in = p.chan(c);
    double* o = out.chan(c);
    o[0] = in[0];
    for (int j = 1; j <= lat.rings; ++j) {
      const int base = lat.ring_base[j], nj = lat.ring_size[j];
      for (int i = 0; i < nj; ++i)
        o[base + i] = in[base + ((i - k * j) % nj + nj) % nj];
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

CheckResult ring_shift_check(Calibrator cal, const SelfcheckOptions& opt) {
  CheckResult res{std::string("ring-shift/") + to_string(cal), false, ""};
  const bool is_sb = cal == Calibrator::Sb;
  const GradientKernelPair table =
      is_sb ? (opt.sobel ? *opt.sobel : sobel_polar_weights())
            : GradientKernelPair{};
  Rng rng(derive_seed(0x51f7, static_cast<uint64_t>(cal)));
  int trials = 0, exact = 0, skipped = 0, cross_bad = 0;
  for (int t = 0; t < opt.ring_patches; ++t) {
    const int K = (t % 2 == 0 || is_sb) ? 3 : 5;
    PolarPatch<double> p = random_patch(K, rng);
    Calibrated<double> base;
    if (is_sb) {
      base = calibrate_gradient(p, table);
      // the library's own sb decision must agree with this table
      if (calibrate(Calibrator::Sb, p).cal.q != base.cal.q) ++cross_bad;
    } else {
      base = calibrate(cal, p);
    }
    for (int k = 1; k < 8; ++k) {
      if (is_sb && k % 2 != 0) continue;  // sobel covers quarter turns only
      PolarPatch<double> ps = shift_patch(p, k);
      Calibrated<double> shifted =
          is_sb ? calibrate_gradient(ps, table) : calibrate(cal, ps);
      if (base.cal.degenerate || shifted.cal.degenerate) {
        ++skipped;
        continue;
      }
      ++trials;
      if (shifted.patch.v == base.patch.v) ++exact;
    }
  }
  res.pass = trials > 0 && exact == trials && cross_bad == 0;
  res.detail = std::to_string(exact) + "/" + std::to_string(trials) +
               " shifts exact, " + std::to_string(skipped) +
               " degenerate skipped";
  if (cross_bad)
    res.detail += ", " + std::to_string(cross_bad) + " table disagreements";
  return res;
}

// per-position degenerate flags for one image, in output coordinates
Tensor<double> degenerate_mask(const Tensor<double>& x, Calibrator cal,
                               int K) {
  const Shape4 s = x.shape();
  Tensor<double> mask({1, 1, s.h, s.w}, 0.0);
  const auto& lat = PolarLattice::get(K);
  for (int64_t r = 0; r < s.h; ++r)
    for (int64_t c = 0; c < s.w; ++c) {
      PolarPatch<double> p = extract_patch(x, 0, r, c, K);
      std::vector<double> key = multi_channel_key(p);
      if (decide(cal, key.data(), lat, default_grad_eps<double>()).degenerate)
        mask.at(0, 0, r, c) = 1.0;
    }
  return mask;
}

bool coded_kind(Calibrator cal) {
  return cal == Calibrator::Lbp || cal == Calibrator::LbpAdj ||
         cal == Calibrator::Max || cal == Calibrator::MaxAdj;
}

CheckResult layer_equivariance_check(Calibrator cal) {
  CheckResult res{std::string("layer-equivariance/") + to_string(cal), false,
                  ""};
  Rng rng(derive_seed(0xe9, static_cast<uint64_t>(cal) + 17));
  ConvLayer<double> layer("probe", 3, 2, 3, cal);
  for (auto& w : layer.W) w = rng.uniform(-0.5, 0.5);
  for (auto& bv : layer.b) bv = rng.uniform(-0.1, 0.1);
  Tensor<double> x({1, 2, 12, 12});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);

  Tensor<double> y = layer.forward(x, false);
  double worst = 0.0;
  int64_t clean_min = x.shape().h * x.shape().w;
  for (int k = 1; k <= 3; ++k) {
    Tensor<double> xr = rot90(x, k);
    Tensor<double> got = layer.forward(xr, false);
    Tensor<double> want = rot90(y, k);
    Tensor<double> mask({1, 1, 12, 12}, 0.0);
    if (coded_kind(cal)) {
      mask = rot90(degenerate_mask(x, cal, 3), k);
      Tensor<double> mr = degenerate_mask(xr, cal, 3);
      for (int64_t i = 0; i < mask.size(); ++i)
        mask.data()[i] = std::max(mask.data()[i], mr.data()[i]);
    }
    int64_t clean = 0;
    const Shape4 os = got.shape();
    for (int64_t r = 0; r < os.h; ++r)
      for (int64_t c = 0; c < os.w; ++c) {
        if (mask.at(0, 0, r, c) != 0.0) continue;
        ++clean;
        for (int64_t ch = 0; ch < os.c; ++ch)
          worst = std::max(worst,
                           std::abs(got.at(0, ch, r, c) - want.at(0, ch, r, c)));
      }
    clean_min = std::min(clean_min, clean);
  }
  res.pass = worst <= 1e-10 && clean_min >= 72;
  res.detail = "max |f(rot x) - rot f(x)| = " + fmt(worst) + " over " +
               std::to_string(clean_min) + "+ clean positions";
  return res;
}

CheckResult conv_variance_check() {
  CheckResult res{"conv-not-invariant", false, ""};
  Rng rng(0xba5e);
  ConvLayer<double> layer("probe", 3, 2, 3, Calibrator::None);
  for (auto& w : layer.W) w = rng.uniform(-0.5, 0.5);
  Tensor<double> x({1, 2, 12, 12});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor<double> y = layer.forward(x, false);
  double worst = 0.0;
  for (int k = 1; k <= 3; ++k) {
    Tensor<double> got = layer.forward(rot90(x, k), false);
    Tensor<double> want = rot90(y, k);
    for (int64_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
  }
  res.pass = worst > 1e-2;
  res.detail = "plain conv deviates by " + fmt(worst) + " under quarter turns";
  return res;
}

CheckResult gradcheck(Calibrator cal) {
  CheckResult res{std::string("gradcheck/") + to_string(cal), false, ""};
  Rng rng(derive_seed(0x9c, static_cast<uint64_t>(cal)));
  ConvLayer<double> layer("probe", 3, 1, 2, cal);
  for (auto& w : layer.W) w = rng.uniform(-0.5, 0.5);
  for (auto& bv : layer.b) bv = rng.uniform(-0.1, 0.1);
  Tensor<double> x({1, 1, 6, 6});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor<double> y = layer.forward(x, true);
  Tensor<double> gy(y.shape());
  for (int64_t i = 0; i < gy.size(); ++i) gy.data()[i] = rng.uniform(-1.0, 1.0);
  std::fill(layer.gW.begin(), layer.gW.end(), 0.0);
  std::fill(layer.gb.begin(), layer.gb.end(), 0.0);
  Tensor<double> gx = layer.backward(gy);

  const double step = 1e-5;
  const bool pin = cal == Calibrator::Sb || cal == Calibrator::Gd;
  auto loss_at = [&](bool pinned) {
    Tensor<double> out = pinned ? layer.forward_pinned(x) : layer.forward(x, false);
    double L = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) L += gy.data()[i] * out.data()[i];
    return L;
  };
  double worst = 0.0;
  auto rel = [](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
  };
  for (int probe = 0; probe < 5; ++probe) {
    const int64_t i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(x.size())));
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double Lp = loss_at(pin);
    x.data()[i] = keep - step;
    const double Lm = loss_at(pin);
    x.data()[i] = keep;
    worst = std::max(worst, rel(gx.data()[i], (Lp - Lm) / (2 * step)));
  }
  for (int probe = 0; probe < 5; ++probe) {
    const size_t i = static_cast<size_t>(rng.below(layer.W.size()));
    const double keep = layer.W[i];
    layer.W[i] = keep + step;
    const double Lp = loss_at(false);
    layer.W[i] = keep - step;
    const double Lm = loss_at(false);
    layer.W[i] = keep;
    worst = std::max(worst, rel(layer.gW[i], (Lp - Lm) / (2 * step)));
  }
  {
    const double keep = layer.b[0];
    layer.b[0] = keep + step;
    const double Lp = loss_at(false);
    layer.b[0] = keep - step;
    const double Lm = loss_at(false);
    layer.b[0] = keep;
    worst = std::max(worst, rel(layer.gb[0], (Lp - Lm) / (2 * step)));
  }
  res.pass = worst <= 1e-6;
  res.detail = "worst finite-difference relative error " + fmt(worst);
  return res;
}

CheckResult shape_parity_check(const std::string& arch, int64_t want_params) {
  CheckResult res{"shape-parity/" + arch, false, ""};
  std::vector<int64_t> counts;
  std::vector<std::vector<Shape4>> shapes;
  for (Calibrator cal : all_calibrators()) {
    Network<float> net(make_graph(arch, cal, 1), {1, 1, 28, 28});
    counts.push_back(net.param_count());
    shapes.push_back(net.layer_shapes({1, 1, 28, 28}));
  }
  bool same = true;
  for (size_t i = 1; i < counts.size(); ++i) {
    same = same && counts[i] == counts[0];
    same = same && shapes[i] == shapes[0];
  }
  res.pass = same && counts[0] == want_params;
  res.detail = std::to_string(counts[0]) + " params (want " +
               std::to_string(want_params) + "), shapes " +
               (same ? "identical" : "DIFFER") + " across all 8 calibrators";
  return res;
}

CheckResult tiling_check() {
  CheckResult res{"tiling-equivalence", false, ""};
  Rng rng(0x7111);
  double worst = 0.0;
  for (Calibrator cal : {Calibrator::None, Calibrator::St}) {
    ConvLayer<double> layer("probe", 3, 2, 2, cal);
    for (auto& w : layer.W) w = rng.uniform(-0.5, 0.5);
    for (auto& bv : layer.b) bv = rng.uniform(-0.1, 0.1);
    Tensor<double> x({1, 2, 8, 8});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor<double> y = layer.forward(x, false);
    const auto& lat = PolarLattice::get(3);
    for (int64_t r = 0; r < 8; ++r)
      for (int64_t c = 0; c < 8; ++c) {
        // plain conv reads the grid cells; calibrated conv reads the polar
        // samples and realigns them. Both land in slot order and scatter to
        // the slot's cell for the weight dot.
        PolarPatch<double> cp;
        if (cal == Calibrator::None) {
          cp = extract_patch_grid(x, 0, r, c, 3);
        } else {
          PolarPatch<double> p = extract_patch(x, 0, r, c, 3);
          std::vector<double> key = multi_channel_key(p);
          Calibration cd =
              decide(cal, key.data(), lat, default_grad_eps<double>());
          cp = apply_calibration(cd, p).patch;
        }
        for (int64_t o = 0; o < 2; ++o) {
          double acc = layer.b[static_cast<size_t>(o)];
          for (int64_t ch = 0; ch < 2; ++ch) {
            const double* v = cp.chan(static_cast<int>(ch));
            const double* w = layer.W.data() + (o * 2 + ch) * 9;
            for (int s = 0; s < 9; ++s) acc += w[lat.cell_of_slot[s]] * v[s];
          }
          worst = std::max(worst, std::abs(acc - y.at(0, o, r, c)));
        }
      }
  }
  res.pass = worst <= 1e-12;
  res.detail =
      "conv output vs per-patch calibrate+dot differs by " + fmt(worst);
  return res;
}

CheckResult lbp_example_check() {
  CheckResult res{"lbp-example", false, ""};
  PolarPatch<double> p(3, 1);
  p.v = {0.5, 0.9, 0.1, 0.2, 0.8, 0.3, 0.35, 0.7, 0.4};
  const auto& lat = PolarLattice::get(3);
  std::vector<double> key = multi_channel_key(p);
  uint8_t code = 0;
  bool degen = true;
  const int k = code_rotation(key.data(), lat, false, &degen, &code);
  Calibrated<double> r = calibrate(Calibrator::Lbp, p);
  std::vector<double> key2 = multi_channel_key(r.patch);
  uint8_t code2 = 0;
  const int k2 = code_rotation(key2.data(), lat, false, &degen, &code2);
  res.pass = code == 73 && k == 2 && r.cal.k == 2 && r.patch.v[1] == 0.7 &&
             code2 == 37 && k2 == 0;
  res.detail = "code " + std::to_string(code) + " -> shift " +
               std::to_string(k) + " -> minimal code " + std::to_string(code2);
  return res;
}

}  // namespace

std::vector<CheckResult> run_selfchecks(const SelfcheckOptions& opt) {
  std::vector<CheckResult> out;
  auto want = [&](const std::string& name) {
    return opt.only.empty() || name.find(opt.only) != std::string::npos;
  };
  auto add = [&](CheckResult r) { out.push_back(std::move(r)); };

  for (Calibrator cal : all_calibrators()) {
    if (cal == Calibrator::None) continue;
    const std::string name = std::string("ring-shift/") + to_string(cal);
    if (want(name)) add(ring_shift_check(cal, opt));
  }
  for (Calibrator cal : all_calibrators()) {
    if (cal == Calibrator::None) continue;
    const std::string name =
        std::string("layer-equivariance/") + to_string(cal);
    if (want(name)) add(layer_equivariance_check(cal));
  }
  if (want("conv-not-invariant")) add(conv_variance_check());
  for (Calibrator cal : all_calibrators()) {
    const std::string name = std::string("gradcheck/") + to_string(cal);
    if (want(name)) add(gradcheck(cal));
  }
  if (want("shape-parity/six")) add(shape_parity_check("six", 575722));
  if (want("shape-parity/desk")) add(shape_parity_check("desk", 72442));
  if (want("tiling-equivalence")) add(tiling_check());
  if (want("lbp-example")) add(lbp_example_check());
  return out;
}

bool all_passed(const std::vector<CheckResult>& checks) {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.pass; });
}

std::string render_report(const std::vector<CheckResult>& checks) {
  std::string out;
  for (const CheckResult& c : checks) {
    out += c.pass ? "PASS " : "FAIL ";
    out += c.name;
    out += " — ";
    out += c.detail;
    out += '\n';
  }
  return out;
}

}  // namespace ricnn
