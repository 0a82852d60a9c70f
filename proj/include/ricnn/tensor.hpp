#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ricnn/errors.hpp"

namespace ricnn {

struct Shape4 {
  int64_t n = 1, c = 1, h = 1, w = 1;

  int64_t elems() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  void validate() const {
    if (n < 1 || c < 1 || h < 1 || w < 1)
      throw InvalidArgument("tensor extents must be positive, got " + str());
  }
};

// Dense NCHW tensor.
template <class T>
class Tensor {
 public:
  Tensor() : shape_{1, 1, 1, 1}, data_(1, T{}) {}

  explicit Tensor(Shape4 s, T fill = T{}) : shape_(s) {
    s.validate();
    data_.assign(static_cast<size_t>(s.elems()), fill);
  }

  Tensor(Shape4 s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    s.validate();
    if (static_cast<int64_t>(data_.size()) != s.elems())
      throw InvalidArgument("tensor data size " + std::to_string(data_.size()) +
                            " does not match shape " + s.str());
  }

  const Shape4& shape() const { return shape_; }
  int64_t size() const { return shape_.elems(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T* plane(int64_t b, int64_t ch) {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }
  const T* plane(int64_t b, int64_t ch) const {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }

  T& at(int64_t b, int64_t ch, int64_t r, int64_t col) {
    check_index(b, ch, r, col);
    return data_[((b * shape_.c + ch) * shape_.h + r) * shape_.w + col];
  }
  const T& at(int64_t b, int64_t ch, int64_t r, int64_t col) const {
    check_index(b, ch, r, col);
    return data_[((b * shape_.c + ch) * shape_.h + r) * shape_.w + col];
  }

  bool operator==(const Tensor&) const = default;

 private:
  void check_index(int64_t b, int64_t ch, int64_t r, int64_t col) const {
    if (b < 0 || b >= shape_.n || ch < 0 || ch >= shape_.c || r < 0 ||
        r >= shape_.h || col < 0 || col >= shape_.w)
      throw InvalidArgument("index (" + std::to_string(b) + "," +
                            std::to_string(ch) + "," + std::to_string(r) + "," +
                            std::to_string(col) + ") out of range for " +
                            shape_.str());
  }

  Shape4 shape_;
  std::vector<T> data_;
};

namespace detail {
inline void require_same_shape(const Shape4& a, const Shape4& b) {
  if (!(a == b))
    throw InvalidArgument("shape mismatch: " + a.str() + " vs " + b.str());
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
  return out;
}

// axis: 0..3 collapses that axis to 1, -1 reduces everything.
constexpr int kAllAxes = -1;

template <class T>
double reduce_sum(const Tensor<T>& t) {
  double acc = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t.data()[i]);
  return acc;
}

template <class T>
double reduce_mean(const Tensor<T>& t) {
  return reduce_sum(t) / static_cast<double>(t.size());
}

template <class T>
Tensor<T> reduce_sum_axis(const Tensor<T>& t, int axis) {
  if (axis < 0 || axis > 3) throw InvalidArgument("reduce axis must be 0..3");
  const Shape4 s = t.shape();
  int64_t ext[4] = {s.n, s.c, s.h, s.w};
  Shape4 os = s;
  (axis == 0 ? os.n : axis == 1 ? os.c : axis == 2 ? os.h : os.w) = 1;
  Tensor<T> out(os, T{});
  int64_t idx[4];
  for (idx[0] = 0; idx[0] < ext[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < ext[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < ext[2]; ++idx[2])
        for (idx[3] = 0; idx[3] < ext[3]; ++idx[3]) {
          int64_t o[4] = {idx[0], idx[1], idx[2], idx[3]};
          o[axis] = 0;
          out.at(o[0], o[1], o[2], o[3]) += t.at(idx[0], idx[1], idx[2], idx[3]);
        }
  return out;
}

template <class T>
Tensor<T> reduce_mean_axis(const Tensor<T>& t, int axis) {
  if (axis < 0 || axis > 3) throw InvalidArgument("reduce axis must be 0..3");
  const Shape4 s = t.shape();
  int64_t ext = (axis == 0 ? s.n : axis == 1 ? s.c : axis == 2 ? s.h : s.w);
  return scale(reduce_sum_axis(t, axis), T(1) / static_cast<T>(ext));
}

// flat index of the largest element; ties go to the lowest index
template <class T>
int64_t argmax(const T* v, int64_t n) {
  if (n <= 0) throw InvalidArgument("argmax over empty range");
  int64_t best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <class T>
int64_t reduce_argmax(const Tensor<T>& t) {
  return argmax(t.data(), t.size());
}

}  // namespace ricnn
