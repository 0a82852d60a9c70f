#pragma once
#include <memory>
#include <string>
#include <vector>

#include "ricnn/calibrate.hpp"
#include "ricnn/gemm.hpp"
#include "ricnn/polar.hpp"
#include "ricnn/rng.hpp"
#include "ricnn/tensor.hpp"

namespace ricnn {

template <class T>
struct ParamView {
  std::string name;
  std::vector<T>* w;
  std::vector<T>* g;
};

template <class T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual const char* kind() const = 0;
  virtual Shape4 out_shape(const Shape4& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
  virtual Tensor<T> backward(const Tensor<T>& gy) = 0;
  virtual void collect_params(std::vector<ParamView<T>>&) {}
  virtual void init_params(Rng&) {}
  virtual void zero_grads() {}
  virtual int64_t param_count() const { return 0; }

 private:
  std::string name_;
};

// KxK convolution over calibrated polar neighborhoods with SAME zero
// padding. Stride picks every stride-th patch center, so the strided output
// is the stride-1 output subsampled. `Calibrator::None` degrades to a plain
// convolution: slots then read their grid cells directly and no realignment
// happens, which keeps the baseline bit-identical to a standard conv layer.
//
// Weights are stored grid-row-major ([out][in][kr][kc]); calibrated polar
// slots are scattered to their paired cells before the matrix multiply, so
// every dot product accumulates in the same canonical cell order no matter
// which engine produced the columns.
template <class T>
class ConvLayer : public Layer<T> {
 public:
  ConvLayer(std::string name, int K, int64_t cin, int64_t cout, Calibrator cal,
            int stride = 1)
      : Layer<T>(std::move(name)),
        W(static_cast<size_t>(cout * cin * K * K), T{}),
        b(static_cast<size_t>(cout), T{}),
        gW(W.size(), T{}),
        gb(b.size(), T{}),
        lat_(PolarLattice::get(K)),
        K_(K),
        stride_(stride),
        cin_(cin),
        cout_(cout),
        cal_(cal) {
    if (cin < 1 || cout < 1) throw InvalidArgument("conv channels must be >= 1");
    if (stride < 1) throw InvalidArgument("conv stride must be >= 1");
    if (cal_ == Calibrator::Sb) gkp_ = sobel_polar_weights();
    if (cal_ == Calibrator::Gd) gkp_ = gaussian_polar_weights(K);
  }

  const char* kind() const override { return "conv"; }
  int K() const { return K_; }
  int stride() const { return stride_; }
  int64_t cin() const { return cin_; }
  int64_t cout() const { return cout_; }
  Calibrator calibrator() const { return cal_; }

  Shape4 out_shape(const Shape4& in) const override {
    if (in.c != cin_)
      throw InvalidArgument(this->name() + ": expected " +
                            std::to_string(cin_) + " input channels, got " +
                            in.str());
    return {in.n, cout_, (in.h + stride_ - 1) / stride_,
            (in.w + stride_ - 1) / stride_};
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    const Shape4 s = x.shape();
    Shape4 os = out_shape(s);
    Tensor<T> out(os);
    const int64_t P = os.h * os.w;
    const int64_t rows = cin_ * K_ * K_;
    colT_.resize(static_cast<size_t>(P * rows));
    const bool routed = cal_ != Calibrator::None;
    if (train) {
      x_cache_ = x;
      have_cache_ = true;
      if (routed) {
        plan_src1_.resize(static_cast<size_t>(s.n) * P * K_ * K_);
        plan_src2_.resize(plan_src1_.size());
        plan_frac_.resize(static_cast<size_t>(s.n) * P * (lat_.rings + 1));
      }
    } else {
      have_cache_ = false;
    }
    scratch_.resize(static_cast<size_t>(cin_) * K_ * K_);
    key_.resize(static_cast<size_t>(K_) * K_);
    cal_buf_.resize(static_cast<size_t>(K_) * K_);
    if (routed && !train) {
      plan_src1_.resize(static_cast<size_t>(K_) * K_);
      plan_src2_.resize(static_cast<size_t>(K_) * K_);
      plan_frac_.resize(static_cast<size_t>(lat_.rings) + 1);
    }
    for (int64_t bi = 0; bi < s.n; ++bi) {
      build_cols(x, bi, train);
      T* op = out.plane(bi, 0);
      gemm::run_nt(cout_, P, rows, W.data(), colT_.data(), op, T{0});
      for (int64_t o = 0; o < cout_; ++o) {
        T bo = b[static_cast<size_t>(o)];
        T* row = op + o * P;
        for (int64_t p = 0; p < P; ++p) row[p] += bo;
      }
    }
    return out;
  }

  // Forward with the routing frozen at the last training forward: the exact
  // affine map backward() differentiates. Finite-difference probes go
  // through here for the gradient calibrators, where re-deciding plans at a
  // perturbed input would fold the deliberately dropped d(routing)/d(input)
  // term back in.
  Tensor<T> forward_pinned(const Tensor<T>& x) {
    if (!have_cache_)
      throw InvalidArgument(this->name() + ": pinned forward needs a cached "
                                           "training forward");
    if (!(x.shape() == x_cache_.shape()))
      throw InvalidArgument(this->name() + ": pinned forward shape mismatch");
    Shape4 os = out_shape(x.shape());
    const int64_t P = os.h * os.w;
    const int64_t rows = cin_ * K_ * K_;
    colT_.resize(static_cast<size_t>(P * rows));
    scratch_.resize(static_cast<size_t>(cin_) * K_ * K_);
    Tensor<T> out(os);
    for (int64_t bi = 0; bi < os.n; ++bi) {
      rebuild_cols(x, bi);
      T* op = out.plane(bi, 0);
      gemm::run_nt(cout_, P, rows, W.data(), colT_.data(), op, T{0});
      for (int64_t o = 0; o < cout_; ++o) {
        T bo = b[static_cast<size_t>(o)];
        T* row = op + o * P;
        for (int64_t p = 0; p < P; ++p) row[p] += bo;
      }
    }
    return out;
  }

  // Calibrated patches written out as KxK blocks of one big (K*h)x(K*w)
  // plane per channel. Convolving the tiles at stride K with no padding is
  // the alternate evaluation route and must match forward() bit for bit.
  Tensor<T> make_tiles(const Tensor<T>& x) {
    const Shape4 s = x.shape();
    Shape4 os = out_shape(s);
    const int64_t P = os.h * os.w;
    const int KK = K_ * K_;
    colT_.resize(static_cast<size_t>(P * cin_ * KK));
    scratch_.resize(static_cast<size_t>(cin_) * KK);
    key_.resize(static_cast<size_t>(KK));
    cal_buf_.resize(static_cast<size_t>(KK));
    if (cal_ != Calibrator::None) {
      plan_src1_.resize(static_cast<size_t>(KK));
      plan_src2_.resize(static_cast<size_t>(KK));
      plan_frac_.resize(static_cast<size_t>(lat_.rings) + 1);
    }
    Tensor<T> tiles({s.n, cin_, K_ * os.h, K_ * os.w});
    const int64_t tw = K_ * os.w;
    for (int64_t bi = 0; bi < s.n; ++bi) {
      build_cols(x, bi, false);
      for (int64_t p = 0; p < P; ++p) {
        const int64_t tr = p / os.w, tc = p % os.w;
        const T* rowseg = colT_.data() + p * cin_ * KK;
        for (int64_t ch = 0; ch < cin_; ++ch) {
          T* tp = tiles.plane(bi, ch);
          const T* src = rowseg + ch * KK;
          for (int cell = 0; cell < KK; ++cell)
            tp[(K_ * tr + cell / K_) * tw + K_ * tc + cell % K_] = src[cell];
        }
      }
    }
    return tiles;
  }

  Tensor<T> forward_tiled(const Tensor<T>& x) {
    const Shape4 s = x.shape();
    Tensor<T> tiles = make_tiles(x);
    Shape4 os = out_shape(s);
    Tensor<T> out(os);
    const int64_t P = os.h * os.w;
    const int KK = K_ * K_;
    const int64_t rows = cin_ * KK;
    const int64_t tw = K_ * os.w;
    for (int64_t bi = 0; bi < s.n; ++bi) {
      for (int64_t p = 0; p < P; ++p) {
        const int64_t tr = p / os.w, tc = p % os.w;
        T* rowseg = colT_.data() + p * rows;
        for (int64_t ch = 0; ch < cin_; ++ch) {
          const T* tp = tiles.plane(bi, ch);
          T* dst = rowseg + ch * KK;
          for (int cell = 0; cell < KK; ++cell)
            dst[cell] = tp[(K_ * tr + cell / K_) * tw + K_ * tc + cell % K_];
        }
      }
      T* op = out.plane(bi, 0);
      gemm::run_nt(cout_, P, rows, W.data(), colT_.data(), op, T{0});
      for (int64_t o = 0; o < cout_; ++o) {
        T bo = b[static_cast<size_t>(o)];
        T* row = op + o * P;
        for (int64_t pp = 0; pp < P; ++pp) row[pp] += bo;
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    if (!have_cache_)
      throw InvalidArgument(this->name() + ": backward without forward");
    const Shape4 s = x_cache_.shape();
    if (!(gy.shape() == out_shape(s)))
      throw InvalidArgument(this->name() + ": bad upstream gradient shape");
    const int64_t P = gy.shape().h * gy.shape().w;
    const int64_t rows = cin_ * K_ * K_;
    Tensor<T> gx(s, T{});
    gcolT_.resize(static_cast<size_t>(P * rows));
    colT_.resize(static_cast<size_t>(P * rows));
    for (int64_t bi = 0; bi < s.n; ++bi) {
      rebuild_cols(x_cache_, bi);
      const T* gp = gy.plane(bi, 0);
      gemm::run(cout_, rows, P, gp, colT_.data(), gW.data(), T{1});
      for (int64_t o = 0; o < cout_; ++o) {
        double acc = 0.0;
        const T* row = gp + o * P;
        for (int64_t p = 0; p < P; ++p) acc += static_cast<double>(row[p]);
        gb[static_cast<size_t>(o)] += static_cast<T>(acc);
      }
      gemm::run_tn(P, rows, cout_, gp, W.data(), gcolT_.data(), T{0});
      scatter_cols(gx, bi);
    }
    return gx;
  }

  void collect_params(std::vector<ParamView<T>>& out) override {
    out.push_back({this->name() + ".weight", &W, &gW});
    out.push_back({this->name() + ".bias", &b, &gb});
  }

  void init_params(Rng& rng) override {
    double a = 1.0 / std::sqrt(static_cast<double>(cin_ * K_ * K_));
    for (auto& v : W) v = static_cast<T>(rng.uniform(-a, a));
    for (auto& v : b) v = T{0};
  }

  void zero_grads() override {
    std::fill(gW.begin(), gW.end(), T{0});
    std::fill(gb.begin(), gb.end(), T{0});
  }

  int64_t param_count() const override {
    return static_cast<int64_t>(W.size() + b.size());
  }

  std::vector<T> W, b, gW, gb;

 private:
  // One row of colT per window position, laid out [cin][cell] with cells in
  // row-major kernel order.
  void build_cols(const Tensor<T>& x, int64_t bi, bool store) {
    const Shape4 s = x.shape();
    const int64_t h = s.h, w = s.w;
    const int64_t ow = (w + stride_ - 1) / stride_;
    const int64_t P = ((h + stride_ - 1) / stride_) * ow;
    const int KK = K_ * K_, R = lat_.rings;
    const bool routed = cal_ != Calibrator::None;
    for (int64_t p = 0; p < P; ++p) {
      const int64_t r0 = stride_ * (p / ow), c0 = stride_ * (p % ow);
      T* rowseg = colT_.data() + p * cin_ * KK;
      if (!routed) {
        for (int64_t ch = 0; ch < cin_; ++ch) {
          const T* plane = x.plane(bi, ch);
          T* dst = rowseg + ch * KK;
          for (int cell = 0; cell < KK; ++cell) {
            int64_t rr = r0 + cell / K_ - R, cc = c0 + cell % K_ - R;
            dst[cell] = (rr >= 0 && rr < h && cc >= 0 && cc < w)
                            ? plane[rr * w + cc]
                            : T{};
          }
        }
        continue;
      }
      for (int64_t ch = 0; ch < cin_; ++ch)
        gather_polar(x.plane(bi, ch), h, w, r0, c0, lat_,
                     scratch_.data() + ch * KK);
      build_key();
      uint8_t* s1;
      uint8_t* s2;
      double* fr;
      if (store) {
        size_t pi = static_cast<size_t>(bi * P + p);
        s1 = plan_src1_.data() + pi * KK;
        s2 = plan_src2_.data() + pi * KK;
        fr = plan_frac_.data() + pi * (R + 1);
      } else {
        s1 = plan_src1_.data();
        s2 = plan_src2_.data();
        fr = plan_frac_.data();
      }
      decide_into(s1, s2, fr);
      for (int64_t ch = 0; ch < cin_; ++ch)
        apply_and_scatter(scratch_.data() + ch * KK, s1, s2, fr,
                          rowseg + ch * KK);
    }
  }

  void rebuild_cols(const Tensor<T>& x, int64_t bi) {
    const Shape4 s = x.shape();
    const int64_t h = s.h, w = s.w;
    const int64_t ow = (w + stride_ - 1) / stride_;
    const int64_t P = ((h + stride_ - 1) / stride_) * ow;
    const int KK = K_ * K_, R = lat_.rings;
    const bool routed = cal_ != Calibrator::None;
    for (int64_t p = 0; p < P; ++p) {
      const int64_t r0 = stride_ * (p / ow), c0 = stride_ * (p % ow);
      T* rowseg = colT_.data() + p * cin_ * KK;
      if (!routed) {
        for (int64_t ch = 0; ch < cin_; ++ch) {
          const T* plane = x.plane(bi, ch);
          T* dst = rowseg + ch * KK;
          for (int cell = 0; cell < KK; ++cell) {
            int64_t rr = r0 + cell / K_ - R, cc = c0 + cell % K_ - R;
            dst[cell] = (rr >= 0 && rr < h && cc >= 0 && cc < w)
                            ? plane[rr * w + cc]
                            : T{};
          }
        }
        continue;
      }
      size_t pi = static_cast<size_t>(bi * P + p);
      const uint8_t* s1 = plan_src1_.data() + pi * KK;
      const uint8_t* s2 = plan_src2_.data() + pi * KK;
      const double* fr = plan_frac_.data() + pi * (R + 1);
      for (int64_t ch = 0; ch < cin_; ++ch) {
        gather_polar(x.plane(bi, ch), h, w, r0, c0, lat_,
                     scratch_.data() + ch * KK);
        apply_and_scatter(scratch_.data() + ch * KK, s1, s2, fr,
                          rowseg + ch * KK);
      }
    }
  }

  void scatter_cols(Tensor<T>& gx, int64_t bi) {
    const Shape4 s = gx.shape();
    const int64_t h = s.h, w = s.w;
    const int64_t ow = (w + stride_ - 1) / stride_;
    const int64_t P = ((h + stride_ - 1) / stride_) * ow;
    const int KK = K_ * K_, R = lat_.rings;
    const bool routed = cal_ != Calibrator::None;
    std::vector<T> gpatch(static_cast<size_t>(KK));
    for (int64_t p = 0; p < P; ++p) {
      const int64_t r0 = stride_ * (p / ow), c0 = stride_ * (p % ow);
      const T* rowseg = gcolT_.data() + p * cin_ * KK;
      if (!routed) {
        for (int64_t ch = 0; ch < cin_; ++ch) {
          T* plane = gx.plane(bi, ch);
          const T* src = rowseg + ch * KK;
          for (int cell = 0; cell < KK; ++cell) {
            int64_t rr = r0 + cell / K_ - R, cc = c0 + cell % K_ - R;
            if (rr >= 0 && rr < h && cc >= 0 && cc < w)
              plane[rr * w + cc] += src[cell];
          }
        }
        continue;
      }
      size_t pi = static_cast<size_t>(bi * P + p);
      const uint8_t* s1 = plan_src1_.data() + pi * KK;
      const uint8_t* s2 = plan_src2_.data() + pi * KK;
      const double* fr = plan_frac_.data() + pi * (R + 1);
      for (int64_t ch = 0; ch < cin_; ++ch) {
        const T* src = rowseg + ch * KK;
        std::fill(gpatch.begin(), gpatch.end(), T{0});
        // undo the cell scatter and the routing
        for (int slot = 0; slot < KK; ++slot) {
          T g = src[lat_.cell_of_slot[slot]];
          T f = static_cast<T>(fr[lat_.ring_of_slot[slot]]);
          if (f == T{0}) {
            gpatch[s1[slot]] += g;
          } else {
            gpatch[s1[slot]] += (T(1) - f) * g;
            gpatch[s2[slot]] += f * g;
          }
        }
        // undo the bilinear sampling
        T* plane = gx.plane(bi, ch);
        for (int slot = 0; slot < KK; ++slot) {
          T g = gpatch[static_cast<size_t>(slot)];
          if (g == T{0}) continue;
          const auto& tap = lat_.taps[slot];
          for (int q = 0; q < 4; ++q) {
            if (tap.w[q] == 0.0) continue;
            int64_t rr = r0 + tap.dr[q], cc = c0 + tap.dc[q];
            if (rr >= 0 && rr < h && cc >= 0 && cc < w)
              plane[rr * w + cc] += static_cast<T>(tap.w[q]) * g;
          }
        }
      }
    }
  }

  void build_key() {
    const int KK = K_ * K_;
    const double inv = 1.0 / static_cast<double>(cin_);
    for (int s = 0; s < KK; ++s) key_[s] = static_cast<double>(scratch_[s]);
    for (int64_t ch = 1; ch < cin_; ++ch) {
      const T* v = scratch_.data() + ch * KK;
      for (int s = 0; s < KK; ++s) key_[s] += static_cast<double>(v[s]);
    }
    for (int s = 0; s < KK; ++s) key_[s] *= inv;
  }

  void decide_into(uint8_t* s1, uint8_t* s2, double* fr) {
    const double eps = default_grad_eps<T>();
    switch (cal_) {
      case Calibrator::Sb:
      case Calibrator::Gd: {
        bool degen;
        int64_t q = gradient_q(key_.data(), lat_, gkp_, eps, &degen);
        plan_from_q(q, lat_, s1, s2, fr, nullptr);
        return;
      }
      case Calibrator::St: {
        sort_perm(key_.data(), lat_, s1);
        std::copy(s1, s1 + K_ * K_, s2);
        std::fill(fr, fr + lat_.rings + 1, 0.0);
        return;
      }
      case Calibrator::Lbp:
      case Calibrator::LbpAdj: {
        int k = code_rotation(key_.data(), lat_, cal_ == Calibrator::LbpAdj,
                              nullptr);
        plan_from_q(int64_t{(8 - k) % 8} << kAngleBits, lat_, s1, s2, fr,
                    nullptr);
        return;
      }
      case Calibrator::Max:
      case Calibrator::MaxAdj: {
        int k = argmax_rotation(key_.data(), lat_, cal_ == Calibrator::MaxAdj,
                                nullptr);
        plan_from_q(int64_t{k} << kAngleBits, lat_, s1, s2, fr, nullptr);
        return;
      }
      case Calibrator::None:
        return;
    }
  }

  void apply_and_scatter(const T* in, const uint8_t* s1, const uint8_t* s2,
                         const double* fr, T* rowseg) {
    const int KK = K_ * K_;
    T* cb = cal_buf_.data();
    cb[0] = in[0];
    for (int j = 1; j <= lat_.rings; ++j) {
      const int base = lat_.ring_base[j], nj = lat_.ring_size[j];
      const T f = static_cast<T>(fr[j]);
      if (f == T{0}) {
        for (int i = 0; i < nj; ++i) cb[base + i] = in[s1[base + i]];
      } else {
        for (int i = 0; i < nj; ++i)
          cb[base + i] =
              (T(1) - f) * in[s1[base + i]] + f * in[s2[base + i]];
      }
    }
    for (int slot = 0; slot < KK; ++slot)
      rowseg[lat_.cell_of_slot[slot]] = cb[slot];
  }

  const PolarLattice& lat_;
  int K_;
  int stride_;
  int64_t cin_, cout_;
  Calibrator cal_;
  GradientKernelPair gkp_;

  std::vector<T> colT_, gcolT_, scratch_, cal_buf_;
  std::vector<double> key_;
  std::vector<uint8_t> plan_src1_, plan_src2_;
  std::vector<double> plan_frac_;
  Tensor<T> x_cache_;
  bool have_cache_ = false;
};

template <class T>
class ReluLayer : public Layer<T> {
 public:
  explicit ReluLayer(std::string name) : Layer<T>(std::move(name)) {}
  const char* kind() const override { return "relu"; }
  Shape4 out_shape(const Shape4& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    Tensor<T> out(x.shape());
    if (train) mask_.assign(static_cast<size_t>(x.size()), 0);
    for (int64_t i = 0; i < x.size(); ++i) {
      bool pos = x.data()[i] > T{0};
      out.data()[i] = pos ? x.data()[i] : T{0};
      if (train && pos) mask_[static_cast<size_t>(i)] = 1;
    }
    shape_ = x.shape();
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    if (mask_.size() != static_cast<size_t>(gy.size()))
      throw InvalidArgument(this->name() + ": backward without forward");
    Tensor<T> gx(shape_);
    for (int64_t i = 0; i < gy.size(); ++i)
      gx.data()[i] = mask_[static_cast<size_t>(i)] ? gy.data()[i] : T{0};
    return gx;
  }

 private:
  std::vector<uint8_t> mask_;
  Shape4 shape_;
};

// 2x2 window, stride 2; ties keep the first maximum in row-major scan order
template <class T>
class MaxPool2Layer : public Layer<T> {
 public:
  explicit MaxPool2Layer(std::string name) : Layer<T>(std::move(name)) {}
  const char* kind() const override { return "maxpool2"; }

  Shape4 out_shape(const Shape4& in) const override {
    if (in.h % 2 || in.w % 2)
      throw InvalidArgument(this->name() + ": spatial extents must be even, got " +
                            in.str());
    return {in.n, in.c, in.h / 2, in.w / 2};
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    in_shape_ = x.shape();
    Shape4 os = out_shape(in_shape_);
    Tensor<T> out(os);
    if (train) idx_.assign(static_cast<size_t>(os.elems()), 0);
    const int64_t w = in_shape_.w;
    int64_t oi = 0;
    for (int64_t b = 0; b < os.n; ++b)
      for (int64_t c = 0; c < os.c; ++c) {
        const T* plane = x.plane(b, c);
        for (int64_t r = 0; r < os.h; ++r)
          for (int64_t col = 0; col < os.w; ++col, ++oi) {
            const T* cell = plane + 2 * r * w + 2 * col;
            T best = cell[0];
            int bi = 0;
            if (cell[1] > best) { best = cell[1]; bi = 1; }
            if (cell[w] > best) { best = cell[w]; bi = 2; }
            if (cell[w + 1] > best) { best = cell[w + 1]; bi = 3; }
            out.data()[oi] = best;
            if (train) idx_[static_cast<size_t>(oi)] = static_cast<uint8_t>(bi);
          }
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Shape4 os = out_shape(in_shape_);
    if (!(gy.shape() == os) || idx_.size() != static_cast<size_t>(os.elems()))
      throw InvalidArgument(this->name() + ": backward without matching forward");
    Tensor<T> gx(in_shape_, T{});
    const int64_t w = in_shape_.w;
    int64_t oi = 0;
    for (int64_t b = 0; b < os.n; ++b)
      for (int64_t c = 0; c < os.c; ++c) {
        T* plane = gx.plane(b, c);
        for (int64_t r = 0; r < os.h; ++r)
          for (int64_t col = 0; col < os.w; ++col, ++oi) {
            int bi = idx_[static_cast<size_t>(oi)];
            plane[(2 * r + bi / 2) * w + 2 * col + bi % 2] += gy.data()[oi];
          }
      }
    return gx;
  }

 private:
  Shape4 in_shape_;
  std::vector<uint8_t> idx_;
};

// non-overlapping exe window mean; extent must divide both spatial extents
template <class T>
class AvgPoolLayer : public Layer<T> {
 public:
  AvgPoolLayer(std::string name, int extent)
      : Layer<T>(std::move(name)), e_(extent) {
    if (extent < 1) throw InvalidArgument("pool extent must be >= 1");
  }
  const char* kind() const override { return "avgpool"; }

  Shape4 out_shape(const Shape4& in) const override {
    if (in.h % e_ || in.w % e_)
      throw InvalidArgument(this->name() + ": extent " + std::to_string(e_) +
                            " does not divide " + in.str());
    return {in.n, in.c, in.h / e_, in.w / e_};
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_shape_ = x.shape();
    Shape4 os = out_shape(in_shape_);
    Tensor<T> out(os);
    const int64_t w = in_shape_.w;
    const T inv = T(1) / static_cast<T>(e_ * e_);
    int64_t oi = 0;
    for (int64_t b = 0; b < os.n; ++b)
      for (int64_t c = 0; c < os.c; ++c) {
        const T* plane = x.plane(b, c);
        for (int64_t r = 0; r < os.h; ++r)
          for (int64_t col = 0; col < os.w; ++col, ++oi) {
            T acc = T{0};
            for (int dr = 0; dr < e_; ++dr)
              for (int dc = 0; dc < e_; ++dc)
                acc += plane[(r * e_ + dr) * w + col * e_ + dc];
            out.data()[oi] = acc * inv;
          }
      }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Shape4 os = out_shape(in_shape_);
    if (!(gy.shape() == os))
      throw InvalidArgument(this->name() + ": backward without matching forward");
    Tensor<T> gx(in_shape_, T{});
    const int64_t w = in_shape_.w;
    const T inv = T(1) / static_cast<T>(e_ * e_);
    int64_t oi = 0;
    for (int64_t b = 0; b < os.n; ++b)
      for (int64_t c = 0; c < os.c; ++c) {
        T* plane = gx.plane(b, c);
        for (int64_t r = 0; r < os.h; ++r)
          for (int64_t col = 0; col < os.w; ++col, ++oi) {
            T g = gy.data()[oi] * inv;
            for (int dr = 0; dr < e_; ++dr)
              for (int dc = 0; dc < e_; ++dc)
                plane[(r * e_ + dr) * w + col * e_ + dc] += g;
          }
      }
    return gx;
  }

  int extent() const { return e_; }

 private:
  int e_;
  Shape4 in_shape_;
};

template <class T>
class DenseLayer : public Layer<T> {
 public:
  DenseLayer(std::string name, int64_t dim, int64_t units)
      : Layer<T>(std::move(name)),
        W(static_cast<size_t>(units * dim), T{}),
        b(static_cast<size_t>(units), T{}),
        gW(W.size(), T{}),
        gb(b.size(), T{}),
        dim_(dim),
        units_(units) {
    if (dim < 1 || units < 1) throw InvalidArgument("dense extents must be >= 1");
  }

  const char* kind() const override { return "dense"; }
  int64_t dim() const { return dim_; }
  int64_t units() const { return units_; }

  Shape4 out_shape(const Shape4& in) const override {
    if (in.c * in.h * in.w != dim_)
      throw InvalidArgument(this->name() + ": expected " +
                            std::to_string(dim_) + " inputs, got " + in.str());
    return {in.n, units_, 1, 1};
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    Shape4 os = out_shape(x.shape());
    if (train) {
      x_cache_ = x;
      have_cache_ = true;
    }
    in_shape_ = x.shape();
    Tensor<T> out(os);
    gemm::run_nt(x.shape().n, units_, dim_, x.data(), W.data(), out.data(),
                 T{0});
    for (int64_t bi = 0; bi < os.n; ++bi)
      for (int64_t u = 0; u < units_; ++u)
        out.data()[bi * units_ + u] += b[static_cast<size_t>(u)];
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    if (!have_cache_)
      throw InvalidArgument(this->name() + ": backward without forward");
    const int64_t n = in_shape_.n;
    if (!(gy.shape() == Shape4{n, units_, 1, 1}))
      throw InvalidArgument(this->name() + ": bad upstream gradient shape");
    gemm::run_tn(units_, dim_, n, gy.data(), x_cache_.data(), gW.data(), T{1});
    for (int64_t u = 0; u < units_; ++u) {
      double acc = 0.0;
      for (int64_t bi = 0; bi < n; ++bi)
        acc += static_cast<double>(gy.data()[bi * units_ + u]);
      gb[static_cast<size_t>(u)] += static_cast<T>(acc);
    }
    Tensor<T> gx(in_shape_);
    gemm::run(n, dim_, units_, gy.data(), W.data(), gx.data(), T{0});
    return gx;
  }

  void collect_params(std::vector<ParamView<T>>& out) override {
    out.push_back({this->name() + ".weight", &W, &gW});
    out.push_back({this->name() + ".bias", &b, &gb});
  }

  void init_params(Rng& rng) override {
    double a = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (auto& v : W) v = static_cast<T>(rng.uniform(-a, a));
    for (auto& v : b) v = T{0};
  }

  void zero_grads() override {
    std::fill(gW.begin(), gW.end(), T{0});
    std::fill(gb.begin(), gb.end(), T{0});
  }

  int64_t param_count() const override {
    return static_cast<int64_t>(W.size() + b.size());
  }

  std::vector<T> W, b, gW, gb;

 private:
  int64_t dim_, units_;
  Tensor<T> x_cache_;
  Shape4 in_shape_;
  bool have_cache_ = false;
};

}  // namespace ricnn
