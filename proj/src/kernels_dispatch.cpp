#include <atomic>

#include "akd/kernels.hpp"

namespace akd::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline bool pick_omp(int64_t work) { return g_parallel.load() && work >= kParallelThreshold; }
}  // namespace

void set_parallel_enabled(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  if (pick_omp(m * k * n))
    omp::matmul_nn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  if (pick_omp(m * k * n))
    omp::matmul_nt(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  if (pick_omp(m * k * n))
    omp::matmul_tn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void ew_binary(int kind, const double* a, const double* b, double* out, int64_t n) {
  if (pick_omp(n))
    omp::ew_binary(kind, a, b, out, n);
  else
    serial::ew_binary(kind, a, b, out, n);
}

void relu_fwd(const double* x, double* out, int64_t n) {
  if (pick_omp(n))
    omp::relu_fwd(x, out, n);
  else
    serial::relu_fwd(x, out, n);
}

void relu_bwd(double* dst, const double* g, const double* x, int64_t n) {
  if (pick_omp(n))
    omp::relu_bwd(dst, g, x, n);
  else
    serial::relu_bwd(dst, g, x, n);
}

void acc_mul(double* dst, const double* g, const double* other, int64_t n) {
  if (pick_omp(n))
    omp::acc_mul(dst, g, other, n);
  else
    serial::acc_mul(dst, g, other, n);
}

void acc_scale(double* dst, const double* g, double c, int64_t n) {
  if (pick_omp(n))
    omp::acc_scale(dst, g, c, n);
  else
    serial::acc_scale(dst, g, c, n);
}

void acc_div(double* dst, const double* g, const double* x, int64_t n) {
  if (pick_omp(n))
    omp::acc_div(dst, g, x, n);
  else
    serial::acc_div(dst, g, x, n);
}

void acc_div_den(double* dst, const double* g, const double* a, const double* b, int64_t n) {
  if (pick_omp(n))
    omp::acc_div_den(dst, g, a, b, n);
  else
    serial::acc_div_den(dst, g, a, b, n);
}

void softmax_rows(const double* z, double* p, int64_t rows, int64_t cols, double t) {
  if (pick_omp(rows * cols))
    omp::softmax_rows(z, p, rows, cols, t);
  else
    serial::softmax_rows(z, p, rows, cols, t);
}

void softmax_rows_bwd(double* dst, const double* g, const double* p, int64_t rows, int64_t cols,
                      double t) {
  if (pick_omp(rows * cols))
    omp::softmax_rows_bwd(dst, g, p, rows, cols, t);
  else
    serial::softmax_rows_bwd(dst, g, p, rows, cols, t);
}

void log_softmax_rows(const double* z, double* lp, int64_t rows, int64_t cols, double t) {
  if (pick_omp(rows * cols))
    omp::log_softmax_rows(z, lp, rows, cols, t);
  else
    serial::log_softmax_rows(z, lp, rows, cols, t);
}

void log_softmax_rows_bwd(double* dst, const double* g, const double* lp, int64_t rows,
                          int64_t cols, double t) {
  if (pick_omp(rows * cols))
    omp::log_softmax_rows_bwd(dst, g, lp, rows, cols, t);
  else
    serial::log_softmax_rows_bwd(dst, g, lp, rows, cols, t);
}

void maxpool_planes(const double* x, double* out, int64_t* argmax, int64_t rows, int64_t plane) {
  if (pick_omp(rows * plane))
    omp::maxpool_planes(x, out, argmax, rows, plane);
  else
    serial::maxpool_planes(x, out, argmax, rows, plane);
}

void conv3x3_fwd(const double* x, const double* w, const double* bias, double* out, int64_t B,
                 int64_t Ci, int64_t Co, int64_t H, int64_t W) {
  if (pick_omp(B * Ci * Co * H * W * 9))
    omp::conv3x3_fwd(x, w, bias, out, B, Ci, Co, H, W);
  else
    serial::conv3x3_fwd(x, w, bias, out, B, Ci, Co, H, W);
}

void conv3x3_bwd_input(double* dx, const double* g, const double* w, int64_t B, int64_t Ci,
                       int64_t Co, int64_t H, int64_t W) {
  if (pick_omp(B * Ci * Co * H * W * 9))
    omp::conv3x3_bwd_input(dx, g, w, B, Ci, Co, H, W);
  else
    serial::conv3x3_bwd_input(dx, g, w, B, Ci, Co, H, W);
}

void conv3x3_bwd_weight(double* dw, const double* g, const double* x, int64_t B, int64_t Ci,
                        int64_t Co, int64_t H, int64_t W) {
  if (pick_omp(B * Ci * Co * H * W * 9))
    omp::conv3x3_bwd_weight(dw, g, x, B, Ci, Co, H, W);
  else
    serial::conv3x3_bwd_weight(dw, g, x, B, Ci, Co, H, W);
}

}  // namespace akd::kernels
