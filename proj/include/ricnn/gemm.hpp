#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ricnn/errors.hpp"

namespace ricnn {

// Row-major matrix, the 2-D workhorse behind conv/dense.
template <class T>
struct Matrix {
  int64_t rows = 0, cols = 0;
  std::vector<T> v;

  Matrix() = default;
  Matrix(int64_t r, int64_t c, T fill = T{}) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw InvalidArgument("negative matrix extent");
    v.assign(static_cast<size_t>(r * c), fill);
  }

  T& at(int64_t r, int64_t c) { return v[r * cols + c]; }
  const T& at(int64_t r, int64_t c) const { return v[r * cols + c]; }
  T* row(int64_t r) { return v.data() + r * cols; }
  const T* row(int64_t r) const { return v.data() + r * cols; }
};

namespace gemm {

// C = A*B + beta*C, row-major, A is MxK, B is KxN, C is MxN.
// float dispatches to BLAS; double uses the in-repo kernel whose per-cell
// summation order is exactly k ascending (bitwise reproducible and equal to
// a naive triple loop compiled without FMA contraction).
void run(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
         float* C, float beta);
void run(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
         double* C, double beta);

// C = A*B^T + beta*C with A MxK, B NxK
void run_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
            float* C, float beta);
void run_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
            double* C, double beta);

// C = A^T*B + beta*C with A KxM, B KxN
void run_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
            float* C, float beta);
void run_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
            double* C, double beta);

void set_threads(int n);
int threads();

}  // namespace gemm

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows)
    throw InvalidArgument("matmul inner extents differ: " +
                          std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows));
  Matrix<T> c(a.rows, b.cols);
  gemm::run(a.rows, b.cols, a.cols, a.v.data(), b.v.data(), c.v.data(), T{0});
  return c;
}

}  // namespace ricnn
