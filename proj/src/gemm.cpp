#include "ricnn/gemm.hpp"

#include <cblas.h>

#include <atomic>
#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace ricnn::gemm {

namespace {
std::atomic<int> g_threads{1};
std::once_flag g_init;

void ensure_init() {
  std::call_once(g_init, [] { openblas_set_num_threads(g_threads.load()); });
}
}  // namespace

void set_threads(int n) {
  if (n < 1) throw InvalidArgument("thread count must be >= 1");
  g_threads.store(n);
  ensure_init();
  openblas_set_num_threads(n);
}

int threads() { return g_threads.load(); }

void run(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
         float* C, float beta) {
  ensure_init();
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(M),
              static_cast<int>(N), static_cast<int>(K), 1.0f, A,
              static_cast<int>(K), B, static_cast<int>(N), beta, C,
              static_cast<int>(N));
}

// Packs B transposed so every output cell is one contiguous dot product with
// k strictly ascending. No BLAS here: the double path promises bit equality
// with the naive i/j/k loop.
void run(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
         double* C, double beta) {
  std::vector<double> bt(static_cast<size_t>(N * K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t j = 0; j < N; ++j) bt[j * K + k] = B[k * N + j];
  for (int64_t i = 0; i < M; ++i) {
    const double* ai = A + i * K;
    for (int64_t j = 0; j < N; ++j) {
      const double* bj = bt.data() + j * K;
      double acc = 0.0;
      for (int64_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
      C[i * N + j] = (beta == 0.0) ? acc : beta * C[i * N + j] + acc;
    }
  }
}

void run_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
            float* C, float beta) {
  ensure_init();
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(M),
              static_cast<int>(N), static_cast<int>(K), 1.0f, A,
              static_cast<int>(K), B, static_cast<int>(K), beta, C,
              static_cast<int>(N));
}

void run_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
            double* C, double beta) {
  for (int64_t i = 0; i < M; ++i) {
    const double* ai = A + i * K;
    for (int64_t j = 0; j < N; ++j) {
      const double* bj = B + j * K;
      double acc = 0.0;
      for (int64_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
      C[i * N + j] = (beta == 0.0) ? acc : beta * C[i * N + j] + acc;
    }
  }
}

void run_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
            float* C, float beta) {
  ensure_init();
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(M),
              static_cast<int>(N), static_cast<int>(K), 1.0f, A,
              static_cast<int>(M), B, static_cast<int>(N), beta, C,
              static_cast<int>(N));
}

void run_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B,
            double* C, double beta) {
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < K; ++k) acc += A[k * M + i] * B[k * N + j];
      C[i * N + j] = (beta == 0.0) ? acc : beta * C[i * N + j] + acc;
    }
  }
}

}  // namespace ricnn::gemm
