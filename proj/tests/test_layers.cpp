#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ricnn/net.hpp"
#include "ricnn/rng.hpp"

using namespace ricnn;

namespace {

template <class T>
Tensor<T> random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// plain SAME-padded convolution, accumulating channel-major then cell
// row-major -- the same order the matrix engine uses, so doubles match bit
// for bit
template <class T>
Tensor<T> conv_oracle(const Tensor<T>& x, int K, int64_t cout,
                      const std::vector<T>& W, const std::vector<T>& b) {
  const Shape4 s = x.shape();
  const int R = (K - 1) / 2;
  Tensor<T> out({s.n, cout, s.h, s.w});
  for (int64_t bi = 0; bi < s.n; ++bi)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t r = 0; r < s.h; ++r)
        for (int64_t c = 0; c < s.w; ++c) {
          T acc{};
          for (int64_t ch = 0; ch < s.c; ++ch)
            for (int kr = 0; kr < K; ++kr)
              for (int kc = 0; kc < K; ++kc) {
                int64_t rr = r + kr - R, cc = c + kc - R;
                if (rr < 0 || rr >= s.h || cc < 0 || cc >= s.w) continue;
                acc += W[static_cast<size_t>(((o * s.c + ch) * K + kr) * K +
                                             kc)] *
                       x.at(bi, ch, rr, cc);
              }
          out.at(bi, o, r, c) = acc + b[static_cast<size_t>(o)];
        }
  return out;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) -
                             static_cast<double>(b.data()[i])));
  return m;
}

template <class T>
ConvLayer<T> seeded_conv(int K, int64_t cin, int64_t cout, Calibrator cal,
                         uint64_t seed, int stride = 1) {
  ConvLayer<T> layer("conv", K, cin, cout, cal, stride);
  Rng rng(seed);
  layer.init_params(rng);
  for (auto& v : layer.b) v = static_cast<T>(rng.uniform(-0.1, 0.1));
  return layer;
}

// 1 where the channel-mean key gives a tied decision (periodic code / tied
// maximum): no canonical rotation exists there, so equivariance is graded
// only at the clean positions
template <class T>
std::vector<uint8_t> tie_positions(const Tensor<T>& x, Calibrator cal, int K) {
  const Shape4 s = x.shape();
  const auto& lat = PolarLattice::get(K);
  std::vector<uint8_t> out(static_cast<size_t>(s.h * s.w), 0);
  for (int64_t r = 0; r < s.h; ++r)
    for (int64_t c = 0; c < s.w; ++c) {
      auto key = multi_channel_key(extract_patch(x, 0, r, c, K));
      out[static_cast<size_t>(r * s.w + c)] =
          decide(cal, key.data(), lat, default_grad_eps<T>()).degenerate;
    }
  return out;
}

// max |want-got| skipping positions tied in either orientation; `clean`
// reports how many positions were graded
template <class T>
double diff_off_ties(const Tensor<T>& want, const Tensor<T>& got,
                     const Tensor<T>& x, const Tensor<T>& xr, Calibrator cal,
                     int K, int k, int64_t* clean = nullptr) {
  const Shape4 s = x.shape();
  Tensor<double> m({1, 1, s.h, s.w});
  auto ties = tie_positions(x, cal, K);
  for (int64_t i = 0; i < s.h * s.w; ++i)
    m.data()[i] = static_cast<double>(ties[i]);
  Tensor<double> mr = rot90(m, k);  // carry the mask into output coordinates
  auto ties_r = tie_positions(xr, cal, K);
  const Shape4 os = want.shape();
  double worst = 0.0;
  int64_t n_clean = 0;
  for (int64_t r = 0; r < os.h; ++r)
    for (int64_t c = 0; c < os.w; ++c) {
      if (mr.at(0, 0, r, c) != 0.0) continue;
      if (ties_r[static_cast<size_t>(r * os.w + c)]) continue;
      ++n_clean;
      for (int64_t bi = 0; bi < os.n; ++bi)
        for (int64_t o = 0; o < os.c; ++o)
          worst = std::max(
              worst, std::abs(static_cast<double>(want.at(bi, o, r, c)) -
                              static_cast<double>(got.at(bi, o, r, c))));
    }
  if (clean) *clean = n_clean;
  return worst;
}

}  // namespace

TEST_CASE("plain conv matches the nested-loop oracle exactly") {
  Rng rng(301);
  struct Case {
    int K;
    int64_t n, cin, cout, h, w;
  };
  for (Case cs : {Case{3, 1, 1, 1, 6, 6}, Case{3, 2, 3, 4, 8, 7},
                  Case{5, 1, 2, 3, 9, 6}, Case{7, 1, 1, 2, 7, 7}}) {
    ConvLayer<double> layer =
        seeded_conv<double>(cs.K, cs.cin, cs.cout, Calibrator::None, 77);
    Tensor<double> x = random_tensor<double>({cs.n, cs.cin, cs.h, cs.w}, rng);
    Tensor<double> got = layer.forward(x, false);
    Tensor<double> want = conv_oracle(x, cs.K, cs.cout, layer.W, layer.b);
    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.size(); ++i)
      REQUIRE(got.data()[i] == want.data()[i]);
  }
}

TEST_CASE("center-only kernel reproduces the input") {
  ConvLayer<double> layer("conv", 3, 1, 1, Calibrator::None);
  layer.W[4] = 2.5;  // kernel center
  Rng rng(302);
  Tensor<double> x = random_tensor<double>({1, 1, 5, 5}, rng);
  Tensor<double> y = layer.forward(x, false);
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(y.data()[i] == 2.5 * x.data()[i]);
}

TEST_CASE("constant field sums to the kernel weight total away from borders") {
  ConvLayer<double> layer("conv", 3, 2, 1, Calibrator::None);
  std::fill(layer.W.begin(), layer.W.end(), 1.0);
  Tensor<double> x({1, 2, 6, 6}, 0.5);
  Tensor<double> y = layer.forward(x, false);
  CHECK(y.at(0, 0, 3, 3) == 9.0);  // 2 channels * 9 cells * 0.5
  CHECK(y.at(0, 0, 0, 0) == 4.0);  // corner window sees 4 in-range cells
}

TEST_CASE("riconv with the none calibrator is the plain conv") {
  Rng rng(303);
  Tensor<double> x = random_tensor<double>({1, 2, 9, 9}, rng);
  ConvLayer<double> layer = seeded_conv<double>(3, 2, 3, Calibrator::None, 78);
  Tensor<double> a = conv_forward(x, 3, 3, layer.W, layer.b);
  Tensor<double> b = riconv_forward(x, Calibrator::None, 3, 3, layer.W,
                                    layer.b);
  for (int64_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
}

TEST_CASE("calibrated layers commute with quarter turns") {
  // code-based calibrators are graded away from tie positions (periodic
  // codes, tied maxima); on random dense data ties are common for the LBP
  // kinds and essentially absent for the argmax kinds
  const std::vector<Calibrator> cals = {
      Calibrator::Sb,  Calibrator::Gd,     Calibrator::St, Calibrator::Lbp,
      Calibrator::Max, Calibrator::LbpAdj, Calibrator::MaxAdj};
  Rng rng(304);
  for (Calibrator cal : cals) {
    const int K = cal == Calibrator::Gd ? 5 : 3;
    const bool coded = cal == Calibrator::Lbp || cal == Calibrator::LbpAdj ||
                       cal == Calibrator::Max || cal == Calibrator::MaxAdj;
    Tensor<double> xd = random_tensor<double>({1, 2, 12, 12}, rng);
    ConvLayer<double> ld = seeded_conv<double>(K, 2, 4, cal, 79);
    for (int k : {1, 2, 3}) {
      Tensor<double> yd = ld.forward(xd, false);
      Tensor<double> xr = rot90(xd, k);
      Tensor<double> want = rot90(yd, k);
      Tensor<double> got = ld.forward(xr, false);
      if (!coded) {
        CHECK(max_abs_diff(want, got) <= 1e-10);
      } else {
        int64_t clean = 0;
        CHECK(diff_off_ties(want, got, xd, xr, cal, K, k, &clean) <= 1e-10);
        CHECK(clean >= 72);  // at least half the 144 positions graded
      }
    }

    Tensor<float> xf(xd.shape());
    for (int64_t i = 0; i < xd.size(); ++i)
      xf.data()[i] = static_cast<float>(xd.data()[i]);
    ConvLayer<float> lf = seeded_conv<float>(K, 2, 4, cal, 79);
    Tensor<float> xfr = rot90(xf, 1);
    Tensor<float> want = rot90(lf.forward(xf, false), 1);
    Tensor<float> got = lf.forward(xfr, false);
    if (!coded)
      CHECK(max_abs_diff(want, got) <= 1e-4);
    else
      CHECK(diff_off_ties(want, got, xf, xfr, cal, K, 1) <= 1e-4);
  }
}

TEST_CASE("tied-code positions are where LBP equivariance genuinely fails") {
  // roughly a fifth of random positions have a periodic code (flat codes
  // from extremal centers dominate); there the smallest-shift rule cannot
  // track the rotation and the two paths split by O(1)
  Rng rng(304);
  Tensor<double> x = random_tensor<double>({1, 2, 12, 12}, rng);
  for (Calibrator cal : {Calibrator::Lbp, Calibrator::LbpAdj}) {
    ConvLayer<double> layer = seeded_conv<double>(3, 2, 4, cal, 79);
    Tensor<double> xr = rot90(x, 1);
    Tensor<double> want = rot90(layer.forward(x, false), 1);
    Tensor<double> got = layer.forward(xr, false);
    auto ties = tie_positions(x, cal, 3);
    int64_t n_ties = 0;
    for (uint8_t t : ties) n_ties += t;
    REQUIRE(n_ties > 0);
    CHECK(max_abs_diff(want, got) > 1e-2);
    CHECK(diff_off_ties(want, got, x, xr, cal, 3, 1) <= 1e-10);
  }
}

TEST_CASE("the uncalibrated conv visibly breaks under rotation") {
  Rng rng(305);
  Tensor<double> x = random_tensor<double>({1, 1, 10, 10}, rng);
  ConvLayer<double> layer = seeded_conv<double>(3, 1, 4, Calibrator::None, 80);
  Tensor<double> want = rot90(layer.forward(x, false), 1);
  Tensor<double> got = layer.forward(rot90(x, 1), false);
  CHECK(max_abs_diff(want, got) > 1e-2);
}

TEST_CASE("tile materialization reproduces forward bit for bit") {
  Rng rng(306);
  for (Calibrator cal : {Calibrator::None, Calibrator::Gd, Calibrator::St,
                         Calibrator::Lbp}) {
    for (int K : {3, 5}) {
      ConvLayer<double> layer = seeded_conv<double>(K, 2, 3, cal, 81);
      Tensor<double> x = random_tensor<double>({2, 2, 6, 5}, rng);
      Tensor<double> tiles = layer.make_tiles(x);
      CHECK(tiles.shape() == Shape4{2, 2, K * 6, K * 5});
      Tensor<double> a = layer.forward(x, false);
      Tensor<double> b = layer.forward_tiled(x);
      for (int64_t i = 0; i < a.size(); ++i)
        REQUIRE(a.data()[i] == b.data()[i]);
    }
  }
}

TEST_CASE("strided conv picks every second patch center") {
  Rng rng(307);
  for (Calibrator cal : {Calibrator::None, Calibrator::Gd}) {
    ConvLayer<double> full = seeded_conv<double>(3, 1, 2, cal, 82);
    ConvLayer<double> strided = seeded_conv<double>(3, 1, 2, cal, 82, 2);
    Tensor<double> x = random_tensor<double>({1, 1, 7, 6}, rng);
    Tensor<double> yf = full.forward(x, false);
    Tensor<double> ys = strided.forward(x, false);
    REQUIRE(ys.shape() == Shape4{1, 2, 4, 3});
    for (int64_t o = 0; o < 2; ++o)
      for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 3; ++c)
          REQUIRE(ys.at(0, o, r, c) == yf.at(0, o, 2 * r, 2 * c));
  }
  CHECK_THROWS_AS(ConvLayer<double>("conv", 3, 1, 1, Calibrator::None, 0),
                  InvalidArgument);
}

TEST_CASE("maxpool keeps the first maximum and routes gradients to it") {
  Tensor<double> x({1, 1, 4, 4});
  const double vals[16] = {1, 2, 3, 3, 4, 3, 1, 0,
                           0, 0, 9, 8, 0, 1, 7, 9};
  std::copy(vals, vals + 16, x.data());
  MaxPool2Layer<double> pool("pool");
  Tensor<double> y = pool.forward(x, true);
  REQUIRE(y.shape() == Shape4{1, 1, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 0, 1) == 3.0);
  CHECK(y.at(0, 0, 1, 0) == 1.0);
  CHECK(y.at(0, 0, 1, 1) == 9.0);

  Tensor<double> gy({1, 1, 2, 2});
  gy.data()[0] = 10;
  gy.data()[1] = 20;
  gy.data()[2] = 30;
  gy.data()[3] = 40;
  Tensor<double> gx = pool.backward(gy);
  CHECK(gx.at(0, 0, 1, 0) == 10.0);
  CHECK(gx.at(0, 0, 0, 2) == 20.0);  // tied 3s: first in scan order wins
  CHECK(gx.at(0, 0, 3, 1) == 30.0);
  CHECK(gx.at(0, 0, 2, 2) == 40.0);  // tied 9s likewise
  double total = 0;
  for (int64_t i = 0; i < gx.size(); ++i) total += gx.data()[i];
  CHECK(total == 100.0);

  Tensor<double> odd({1, 1, 3, 4});
  CHECK_THROWS_AS(pool.forward(odd, false), InvalidArgument);
}

TEST_CASE("global average pool matches the plane mean") {
  Rng rng(308);
  Tensor<double> x = random_tensor<double>({1, 2, 7, 7}, rng);
  AvgPoolLayer<double> avg("avg", 7);
  Tensor<double> y = avg.forward(x, false);
  REQUIRE(y.shape() == Shape4{1, 2, 1, 1});
  for (int64_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (int64_t i = 0; i < 49; ++i) mean += x.plane(0, c)[i];
    mean /= 49.0;
    CHECK(y.at(0, c, 0, 0) == doctest::Approx(mean).epsilon(1e-14));
  }
  Tensor<double> gy({1, 2, 1, 1}, 49.0);
  Tensor<double> gx = avg.backward(gy);
  for (int64_t i = 0; i < gx.size(); ++i)
    CHECK(gx.data()[i] == doctest::Approx(1.0).epsilon(1e-14));

  Tensor<double> bad({1, 2, 8, 7});
  CHECK_THROWS_AS(avg.forward(bad, false), InvalidArgument);
}

TEST_CASE("pooling after a calibrated conv still commutes with rotation") {
  Rng rng(309);
  Tensor<double> x = random_tensor<double>({1, 1, 12, 12}, rng);
  ConvLayer<double> conv = seeded_conv<double>(3, 1, 4, Calibrator::Gd, 83);
  ReluLayer<double> relu("relu");
  MaxPool2Layer<double> pool("pool");
  auto head = [&](const Tensor<double>& in) {
    return pool.forward(relu.forward(conv.forward(in, false), false), false);
  };
  Tensor<double> pooled_then_rotated = rot90(head(x), 1);
  Tensor<double> rotated_then_pooled = head(rot90(x, 1));
  CHECK(max_abs_diff(pooled_then_rotated, rotated_then_pooled) <= 1e-10);
}

TEST_CASE("relu clamps and gates") {
  Tensor<double> x({1, 1, 1, 4});
  x.data()[0] = -2;
  x.data()[1] = 0;
  x.data()[2] = 3;
  x.data()[3] = -0.5;
  ReluLayer<double> relu("relu");
  Tensor<double> y = relu.forward(x, true);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[2] == 3.0);
  CHECK(y.data()[3] == 0.0);
  Tensor<double> gy({1, 1, 1, 4}, 1.0);
  Tensor<double> gx = relu.backward(gy);
  CHECK(gx.data()[0] == 0.0);
  CHECK(gx.data()[1] == 0.0);  // gradient at exactly zero stays blocked
  CHECK(gx.data()[2] == 1.0);
  CHECK(gx.data()[3] == 0.0);
}

TEST_CASE("dense layer computes x W^T + b") {
  DenseLayer<double> fc("fc", 2, 2);
  fc.W = {3, 4, 5, 6};
  fc.b = {0.5, -0.5};
  Tensor<double> x({1, 2, 1, 1});
  x.data()[0] = 1;
  x.data()[1] = 2;
  Tensor<double> y = fc.forward(x, false);
  CHECK(y.data()[0] == 11.5);
  CHECK(y.data()[1] == 16.5);

  // flattens any (c,h,w) that multiplies out to its input dim
  DenseLayer<double> fc2("fc2", 12, 3);
  Tensor<double> img({2, 3, 2, 2});
  CHECK(fc2.out_shape(img.shape()) == Shape4{2, 3, 1, 1});
  Tensor<double> bad({1, 5, 1, 1});
  CHECK_THROWS_AS(fc2.out_shape(bad.shape()), InvalidArgument);
}

TEST_CASE("softmax cross entropy on uniform logits is ln(10)") {
  Tensor<double> logits({2, 10, 1, 1}, 0.25);
  LossResult<double> res = softmax_cross_entropy(logits, {3, 7});
  CHECK(res.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  for (int64_t bi = 0; bi < 2; ++bi)
    for (int64_t c = 0; c < 10; ++c) {
      double want = (0.1 - ((bi == 0 ? 3 : 7) == c ? 1.0 : 0.0)) / 2.0;
      CHECK(res.grad.at(bi, c, 0, 0) == doctest::Approx(want).epsilon(1e-12));
    }
  // argmax ties resolve to the lowest class, so class 0 "wins" both rows
  CHECK(res.correct == 0);
  LossResult<double> res2 = softmax_cross_entropy(logits, {0, 0});
  CHECK(res2.correct == 2);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), InvalidArgument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3, 10}), InvalidArgument);
}

TEST_CASE("every calibrator yields the same parameter count and shapes") {
  std::vector<int64_t> counts;
  std::vector<std::vector<Shape4>> shapes;
  for (Calibrator cal : all_calibrators()) {
    Network<float> net(six_layer_graph(cal), {1, 1, 28, 28});
    counts.push_back(net.param_count());
    shapes.push_back(net.layer_shapes({1, 1, 28, 28}));
  }
  for (size_t i = 1; i < counts.size(); ++i) {
    CHECK(counts[i] == counts[0]);
    CHECK(shapes[i] == shapes[0]);
  }
  CHECK(counts[0] == 575722);
  CHECK(shapes[0].front() == Shape4{1, 32, 28, 28});
  CHECK(shapes[0][4] == Shape4{1, 32, 14, 14});
  CHECK(shapes[0][9] == Shape4{1, 64, 7, 7});
  CHECK(shapes[0][14] == Shape4{1, 128, 1, 1});
  CHECK(shapes[0].back() == Shape4{1, 10, 1, 1});

  Network<float> desk(desk_graph(Calibrator::Gd), {1, 1, 28, 28});
  CHECK(desk.param_count() == 72442);
  CHECK(desk.output_shape() == Shape4{1, 10, 1, 1});
}

TEST_CASE("globally pooled features ignore quarter-turn rotations") {
  GraphSpec g{"mini", Calibrator::Gd, 1, {}};
  g.layers = {LayerDesc{LayerKind::Conv, 3, 8, 0, 0},
              LayerDesc{LayerKind::Relu, 0, 0, 0, 0},
              LayerDesc{LayerKind::Conv, 3, 8, 0, 0},
              LayerDesc{LayerKind::Relu, 0, 0, 0, 0},
              LayerDesc{LayerKind::MaxPool2, 0, 0, 0, 0},
              LayerDesc{LayerKind::AvgPool, 0, 0, 14, 0},
              LayerDesc{LayerKind::Dense, 0, 0, 0, 10}};
  Rng rng(310);
  Tensor<float> x = random_tensor<float>({1, 1, 28, 28}, rng, 0.0, 1.0);

  Network<float> net(g, {1, 1, 28, 28});
  net.init_params(99);
  Tensor<float> base = net.forward(x, false);
  for (int k : {1, 2, 3}) {
    Tensor<float> rotated = net.forward(rot90(x, k), false);
    CHECK(max_abs_diff(base, rotated) <= 1e-4);
  }

  // the uncalibrated baseline has no such protection
  Network<float> plain(six_layer_graph(Calibrator::None), {1, 1, 28, 28});
  plain.init_params(99);
  GraphSpec gn = g;
  gn.cal = Calibrator::None;
  Network<float> mini_plain(gn, {1, 1, 28, 28});
  mini_plain.init_params(99);
  Tensor<float> pb = mini_plain.forward(x, false);
  Tensor<float> pr = mini_plain.forward(rot90(x, 1), false);
  CHECK(max_abs_diff(pb, pr) > 1e-4);
}
