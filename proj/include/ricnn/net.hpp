#pragma once
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ricnn/layers.hpp"

namespace ricnn {

enum class LayerKind { Conv, Relu, MaxPool2, AvgPool, Dense };

struct LayerDesc {
  LayerKind kind;
  int K = 0;          // conv
  int64_t cout = 0;   // conv
  int extent = 0;     // avgpool
  int64_t units = 0;  // dense
};

struct GraphSpec {
  std::string arch;
  Calibrator cal = Calibrator::None;
  int64_t in_channels = 1;
  std::vector<LayerDesc> layers;
};

// conv(7)x32 x2, pool, conv(7)x64 x2, pool, conv(3)x128 x2, global avg, fc10
inline GraphSpec six_layer_graph(Calibrator cal, int64_t in_channels = 1) {
  GraphSpec g{"six", cal, in_channels, {}};
  auto conv = [](int K, int64_t c) {
    return LayerDesc{LayerKind::Conv, K, c, 0, 0};
  };
  LayerDesc relu{LayerKind::Relu, 0, 0, 0, 0};
  LayerDesc pool{LayerKind::MaxPool2, 0, 0, 0, 0};
  g.layers = {conv(7, 32), relu, conv(7, 32), relu, pool,
              conv(7, 64), relu, conv(7, 64), relu, pool,
              conv(3, 128), relu, conv(3, 128), relu,
              {LayerKind::AvgPool, 0, 0, 7, 0},
              {LayerKind::Dense, 0, 0, 0, 10}};
  return g;
}

// thinner 3x3 stack with the same topology, sized for quick CPU runs
inline GraphSpec desk_graph(Calibrator cal, int64_t in_channels = 1) {
  GraphSpec g{"desk", cal, in_channels, {}};
  auto conv = [](int K, int64_t c) {
    return LayerDesc{LayerKind::Conv, K, c, 0, 0};
  };
  LayerDesc relu{LayerKind::Relu, 0, 0, 0, 0};
  LayerDesc pool{LayerKind::MaxPool2, 0, 0, 0, 0};
  g.layers = {conv(3, 16), relu, conv(3, 16), relu, pool,
              conv(3, 32), relu, conv(3, 32), relu, pool,
              conv(3, 64), relu, conv(3, 64), relu,
              {LayerKind::AvgPool, 0, 0, 7, 0},
              {LayerKind::Dense, 0, 0, 0, 10}};
  return g;
}

inline GraphSpec make_graph(const std::string& arch, Calibrator cal,
                            int64_t in_channels = 1) {
  if (arch == "six") return six_layer_graph(cal, in_channels);
  if (arch == "desk") return desk_graph(cal, in_channels);
  throw InvalidArgument("unknown architecture '" + arch +
                        "' (expected six|desk)");
}

template <class T>
class Network {
 public:
  Network(GraphSpec spec, Shape4 input_shape) : spec_(std::move(spec)) {
    input_shape.n = 1;
    input_shape.c = spec_.in_channels;
    input_shape.validate();
    in_shape_ = input_shape;
    Shape4 s = input_shape;
    int nconv = 0, npool = 0, ndense = 0, nrelu = 0, navg = 0;
    for (const auto& d : spec_.layers) {
      switch (d.kind) {
        case LayerKind::Conv:
          layers_.push_back(std::make_unique<ConvLayer<T>>(
              "conv" + std::to_string(++nconv), d.K, s.c, d.cout, spec_.cal));
          break;
        case LayerKind::Relu:
          layers_.push_back(std::make_unique<ReluLayer<T>>(
              "relu" + std::to_string(++nrelu)));
          break;
        case LayerKind::MaxPool2:
          layers_.push_back(std::make_unique<MaxPool2Layer<T>>(
              "pool" + std::to_string(++npool)));
          break;
        case LayerKind::AvgPool:
          layers_.push_back(std::make_unique<AvgPoolLayer<T>>(
              "avg" + std::to_string(++navg), d.extent));
          break;
        case LayerKind::Dense: {
          layers_.push_back(std::make_unique<DenseLayer<T>>(
              "dense" + std::to_string(++ndense), s.c * s.h * s.w, d.units));
          break;
        }
      }
      s = layers_.back()->out_shape(s);
    }
    out_shape_ = s;
  }

  const GraphSpec& graph() const { return spec_; }
  const Shape4& input_shape() const { return in_shape_; }
  const Shape4& output_shape() const { return out_shape_; }
  std::vector<std::unique_ptr<Layer<T>>>& layers() { return layers_; }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> cur = dlogits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      cur = (*it)->backward(cur);
    return cur;
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  void init_params(uint64_t seed) {
    Rng rng(seed);
    for (auto& l : layers_) l->init_params(rng);
  }

  void zero_grads() {
    for (auto& l : layers_) l->zero_grads();
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
  }

  std::vector<Shape4> layer_shapes(Shape4 in) const {
    in.c = spec_.in_channels;
    std::vector<Shape4> out;
    Shape4 s = in;
    for (const auto& l : layers_) {
      s = l->out_shape(s);
      out.push_back(s);
    }
    return out;
  }

 private:
  GraphSpec spec_;
  Shape4 in_shape_, out_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <class T>
struct LossResult {
  double loss = 0.0;
  int64_t correct = 0;
  Tensor<T> grad;
};

// mean negative log softmax over the batch; grad is (softmax - onehot)/n
template <class T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    const std::vector<int>& labels) {
  const Shape4 s = logits.shape();
  if (s.h != 1 || s.w != 1)
    throw InvalidArgument("logits must be (n, classes, 1, 1), got " + s.str());
  if (static_cast<int64_t>(labels.size()) != s.n)
    throw InvalidArgument("label count does not match batch");
  LossResult<T> res;
  res.grad = Tensor<T>(s);
  const int64_t classes = s.c;
  const double invn = 1.0 / static_cast<double>(s.n);
  std::vector<double> prob(static_cast<size_t>(classes));
  for (int64_t bi = 0; bi < s.n; ++bi) {
    int y = labels[static_cast<size_t>(bi)];
    if (y < 0 || y >= classes)
      throw InvalidArgument("label " + std::to_string(y) + " out of range");
    const T* row = logits.data() + bi * classes;
    double mx = static_cast<double>(row[0]);
    for (int64_t c = 1; c < classes; ++c)
      mx = std::max(mx, static_cast<double>(row[c]));
    double z = 0.0;
    for (int64_t c = 0; c < classes; ++c) {
      prob[static_cast<size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
      z += prob[static_cast<size_t>(c)];
    }
    double invz = 1.0 / z;
    for (int64_t c = 0; c < classes; ++c) {
      double p = prob[static_cast<size_t>(c)] * invz;
      res.grad.data()[bi * classes + c] =
          static_cast<T>((p - (c == y ? 1.0 : 0.0)) * invn);
    }
    res.loss -= std::log(prob[static_cast<size_t>(y)] * invz);
    if (argmax(row, classes) == y) ++res.correct;
  }
  res.loss *= invn;
  return res;
}

// Convenience single-call forms used by the checks.
template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, int K, int64_t cout,
                       const std::vector<T>& W, const std::vector<T>& b,
                       int stride = 1) {
  ConvLayer<T> layer("conv", K, x.shape().c, cout, Calibrator::None, stride);
  if (W.size() != layer.W.size() || b.size() != layer.b.size())
    throw InvalidArgument("conv_forward: weight extents do not match");
  layer.W = W;
  layer.b = b;
  return layer.forward(x, false);
}

template <class T>
Tensor<T> riconv_forward(const Tensor<T>& x, Calibrator cal, int K,
                         int64_t cout, const std::vector<T>& W,
                         const std::vector<T>& b, int stride = 1) {
  ConvLayer<T> layer("riconv", K, x.shape().c, cout, cal, stride);
  if (W.size() != layer.W.size() || b.size() != layer.b.size())
    throw InvalidArgument("riconv_forward: weight extents do not match");
  layer.W = W;
  layer.b = b;
  return layer.forward(x, false);
}

}  // namespace ricnn
