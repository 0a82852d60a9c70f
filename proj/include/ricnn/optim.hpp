#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "ricnn/layers.hpp"

namespace ricnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are kept in double for both precisions so the
// update sequence is the trajectory the run manifest claims it is.
template <class T>
class Adam {
 public:
  explicit Adam(const std::vector<ParamView<T>>& params, AdamConfig cfg = {})
      : cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.w->size(), 0.0);
      v_.emplace_back(p.w->size(), 0.0);
    }
  }

  void step(const std::vector<ParamView<T>>& params, double lr) {
    if (params.size() != m_.size())
      throw InvalidArgument("adam: parameter group count changed");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      std::vector<T>& w = *params[i].w;
      const std::vector<T>& g = *params[i].g;
      if (m_[i].size() != w.size() || g.size() != w.size())
        throw InvalidArgument("adam: state shape mismatch for " +
                              params[i].name);
      double* m = m_[i].data();
      double* v = v_[i].data();
      for (size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mh = m[j] / c1;
        const double vh = v[j] / c2;
        w[j] = static_cast<T>(static_cast<double>(w[j]) -
                              lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LrSchedule {
  double lr0 = 1e-4;
  double factor = 0.8;
  int interval = 10;

  double at(int epoch) const {
    if (epoch < 0) throw InvalidArgument("negative epoch");
    return lr0 * std::pow(factor, static_cast<double>(epoch / interval));
  }
};

}  // namespace ricnn
