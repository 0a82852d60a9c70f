#pragma once
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ricnn/dataset.hpp"
#include "ricnn/net.hpp"
#include "ricnn/optim.hpp"
#include "ricnn/rng.hpp"

namespace ricnn {

struct TrainConfig {
  int epochs = 20;
  int batch = 100;
  double lr = 1e-4;
  double decay_factor = 0.8;
  int decay_interval = 10;
  uint64_t seed = 1;
  std::string precision = "f32";  // f32 | f64
  Calibrator cal = Calibrator::None;
  std::string arch = "desk";
  int64_t train_size = 10000;  // 0 = use everything
  bool augment_rotate = false;
  std::string data_dir;
  std::string out_dir;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch < 1) throw InvalidArgument("batch must be >= 1");
    if (!(lr > 0.0)) throw InvalidArgument("learning rate must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw InvalidArgument("decay factor must be in (0,1]");
    if (decay_interval < 1) throw InvalidArgument("decay interval must be >= 1");
    if (train_size < 0) throw InvalidArgument("train size must be >= 0");
    if (precision != "f32" && precision != "f64")
      throw InvalidArgument("precision must be f32 or f64");
  }
};

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double seconds = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  int64_t n = 0;
  std::vector<int64_t> class_correct, class_total;
};

struct SweepRecord {
  double angle_deg = 0.0;
  int64_t n_samples = 0;
  double accuracy = 0.0;
};

namespace detail {

// one example into row `i` of the batch, optionally rotated
template <class T>
void place_example(Tensor<T>& xb, int64_t i, const Tensor<float>& images,
                   int64_t src, double angle_deg) {
  const Shape4 s = images.shape();
  const int64_t plane = s.h * s.w;
  const float* px = images.data() + src * plane;
  if (angle_deg == 0.0) {
    T* dst = xb.data() + i * plane;
    for (int64_t p = 0; p < plane; ++p) dst[p] = static_cast<T>(px[p]);
    return;
  }
  Tensor<T> tmp({1, 1, s.h, s.w});
  for (int64_t p = 0; p < plane; ++p) tmp.data()[p] = static_cast<T>(px[p]);
  Tensor<T> rot = rotate_image(tmp, angle_deg);
  std::memcpy(xb.data() + i * plane, rot.data(),
              sizeof(T) * static_cast<size_t>(plane));
}

}  // namespace detail

// Shuffled mini-batch Adam from scratch. Initializes the network from
// cfg.seed, so one config fixes the whole trajectory bit for bit.
template <class T>
std::vector<EpochRow> train(Network<T>& net, const DatasetBundle& data,
                            const TrainConfig& cfg,
                            const std::function<void(const EpochRow&)>&
                                on_epoch = {}) {
  cfg.validate();
  const int64_t n = data.size();
  if (n < 1) throw InvalidArgument("empty training set");
  data.validate();
  net.init_params(cfg.seed);
  Adam<T> opt(net.params());
  const LrSchedule sched{cfg.lr, cfg.decay_factor, cfg.decay_interval};
  const Shape4 ds = data.images.shape();

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  std::vector<EpochRow> rows;
  rows.reserve(static_cast<size_t>(cfg.epochs));
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng erng(derive_seed(cfg.seed, 0x5e5 + static_cast<uint64_t>(e)));
    erng.shuffle(order.begin(), order.end());
    const double lr = sched.at(e);
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += cfg.batch) {
      const int64_t bsz = std::min<int64_t>(cfg.batch, n - start);
      Tensor<T> xb({bsz, 1, ds.h, ds.w});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int64_t i = 0; i < bsz; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        const double ang =
            cfg.augment_rotate ? 360.0 - erng.uniform(0.0, 360.0) : 0.0;
        detail::place_example(xb, i, data.images, src, ang);
        yb[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
      }
      Tensor<T> logits = net.forward(xb, true);
      LossResult<T> res = softmax_cross_entropy(logits, yb);
      if (!std::isfinite(res.loss))
        throw Error("non-finite loss at epoch " + std::to_string(e) +
                    ", batch offset " + std::to_string(start) +
                    " (lr=" + std::to_string(lr) + ")");
      net.zero_grads();
      net.backward(res.grad);
      opt.step(net.params(), lr);
      loss_sum += res.loss * static_cast<double>(bsz);
      correct += res.correct;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    rows.push_back({e, lr, loss_sum / static_cast<double>(n),
                    static_cast<double>(correct) / static_cast<double>(n),
                    secs});
    if (on_epoch) on_epoch(rows.back());
  }
  return rows;
}

template <class T>
EvalResult evaluate(Network<T>& net, const DatasetBundle& data,
                    int64_t batch = 256) {
  const int64_t n = data.size();
  if (n < 1) throw InvalidArgument("empty evaluation set");
  const Shape4 ds = data.images.shape();
  const int64_t classes = net.output_shape().c;
  EvalResult res;
  res.n = n;
  res.class_correct.assign(static_cast<size_t>(classes), 0);
  res.class_total.assign(static_cast<size_t>(classes), 0);
  int64_t correct = 0;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t bsz = std::min<int64_t>(batch, n - start);
    Tensor<T> xb({bsz, 1, ds.h, ds.w});
    for (int64_t i = 0; i < bsz; ++i)
      detail::place_example(xb, i, data.images, start + i, 0.0);
    Tensor<T> logits = net.forward(xb, false);
    for (int64_t i = 0; i < bsz; ++i) {
      const T* row = logits.data() + i * classes;
      int64_t best = 0;
      for (int64_t c = 1; c < classes; ++c)
        if (row[c] > row[best]) best = c;  // ties keep the lowest class
      const int lb = data.labels[static_cast<size_t>(start + i)];
      if (lb < 0 || lb >= classes)
        throw InvalidArgument("label " + std::to_string(lb) +
                              " outside the model's " +
                              std::to_string(classes) + " classes");
      res.class_total[static_cast<size_t>(lb)] += 1;
      if (best == lb) {
        res.class_correct[static_cast<size_t>(lb)] += 1;
        ++correct;
      }
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

template <class T>
std::vector<SweepRecord> rotation_sweep(Network<T>& net,
                                        const DatasetBundle& test,
                                        const std::vector<double>& angles,
                                        int64_t batch = 256) {
  if (angles.empty()) throw InvalidArgument("empty angle list");
  std::vector<SweepRecord> out;
  out.reserve(angles.size());
  for (double a : angles) {
    DatasetBundle rotated;
    rotated.images = rotate_image(test.images, a);
    rotated.labels = test.labels;
    rotated.split = test.split;
    rotated.note = test.note;
    const EvalResult ev = evaluate(net, rotated, batch);
    out.push_back({a, ev.n, ev.accuracy});
  }
  return out;
}

}  // namespace ricnn
