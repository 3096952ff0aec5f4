#pragma once

#include <cstdint>

namespace akd::kernels {

// Dense numeric kernels behind the tensor ops. Every kernel exists in two
// variants with identical per-element arithmetic order:
//   serial::  - reference implementation, kept for testing
//   omp::     - OpenMP parallel over independent output elements
// Each output element is produced by exactly one loop iteration whose inner
// reduction runs serially, so the two variants agree bitwise and results do
// not depend on the thread count.
//
// The unprefixed functions dispatch to omp:: when parallelism is enabled and
// the problem is large enough to amortize the fork, else to serial::.

#define AKD_KERNEL_LIST(X)                                                               \
  /* c[m,n] = a[m,k] * b[k,n]; accumulate: += instead of = */                            \
  X(void, matmul_nn,                                                                     \
    (const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,       \
     bool accumulate))                                                                   \
  /* c[m,n] = a[m,k] * b[n,k]^T */                                                       \
  X(void, matmul_nt,                                                                     \
    (const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,       \
     bool accumulate))                                                                   \
  /* c[m,n] = a[k,m]^T * b[k,n] */                                                       \
  X(void, matmul_tn,                                                                     \
    (const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,       \
     bool accumulate))                                                                   \
  /* out = a (+|-|*|/) b, elementwise; kind: 0 add, 1 sub, 2 mul, 3 div */               \
  X(void, ew_binary, (int kind, const double* a, const double* b, double* out, int64_t n)) \
  X(void, relu_fwd, (const double* x, double* out, int64_t n))                           \
  /* dst += g where x > 0 */                                                             \
  X(void, relu_bwd, (double* dst, const double* g, const double* x, int64_t n))          \
  /* dst += g * other */                                                                 \
  X(void, acc_mul, (double* dst, const double* g, const double* other, int64_t n))       \
  /* dst += c * g */                                                                     \
  X(void, acc_scale, (double* dst, const double* g, double c, int64_t n))                \
  /* dst += g / x */                                                                     \
  X(void, acc_div, (double* dst, const double* g, const double* x, int64_t n))           \
  /* dst += -g * a / b^2 */                                                              \
  X(void, acc_div_den, (double* dst, const double* g, const double* a, const double* b,  \
                        int64_t n))                                                      \
  /* row-wise softmax of z[rows,cols] at temperature t, max-subtracted */                \
  X(void, softmax_rows, (const double* z, double* p, int64_t rows, int64_t cols, double t)) \
  /* dst += dL/dz given dL/dp = g and p = softmax_rows(z, t) */                          \
  X(void, softmax_rows_bwd,                                                              \
    (double* dst, const double* g, const double* p, int64_t rows, int64_t cols, double t)) \
  /* row-wise log-softmax at temperature t; never underflows to -inf for     */          \
  /* finite inputs                                                           */          \
  X(void, log_softmax_rows,                                                              \
    (const double* z, double* lp, int64_t rows, int64_t cols, double t))                 \
  /* dst += dL/dz given dL/d(lp) = g and lp = log_softmax_rows(z, t) */                  \
  X(void, log_softmax_rows_bwd,                                                          \
    (double* dst, const double* g, const double* lp, int64_t rows, int64_t cols, double t)) \
  /* out[r] = max over plane r of x[r, plane]; argmax: first index row-major */          \
  X(void, maxpool_planes,                                                                \
    (const double* x, double* out, int64_t* argmax, int64_t rows, int64_t plane))        \
  /* conv 3x3, stride 1, pad 1: out[b,co,h,w] = bias[co] + sum x*w */                    \
  X(void, conv3x3_fwd,                                                                   \
    (const double* x, const double* w, const double* bias, double* out, int64_t B,       \
     int64_t Ci, int64_t Co, int64_t H, int64_t W))                                      \
  /* dx += conv_bwd_input(g, w) */                                                       \
  X(void, conv3x3_bwd_input,                                                             \
    (double* dx, const double* g, const double* w, int64_t B, int64_t Ci, int64_t Co,    \
     int64_t H, int64_t W))                                                              \
  /* dw += conv_bwd_weight(g, x) */                                                      \
  X(void, conv3x3_bwd_weight,                                                            \
    (double* dw, const double* g, const double* x, int64_t B, int64_t Ci, int64_t Co,    \
     int64_t H, int64_t W))

#define AKD_DECLARE_KERNEL(ret, name, args) ret name args;

namespace serial {
AKD_KERNEL_LIST(AKD_DECLARE_KERNEL)
}

namespace omp {
AKD_KERNEL_LIST(AKD_DECLARE_KERNEL)
}

AKD_KERNEL_LIST(AKD_DECLARE_KERNEL)

#undef AKD_DECLARE_KERNEL

/// Enables/disables the OpenMP variants globally (default: enabled).
void set_parallel_enabled(bool enabled);
bool parallel_enabled();

/// Minimum per-call work (inner-loop iterations) before dispatch picks omp::.
inline constexpr int64_t kParallelThreshold = 1 << 16;

}  // namespace akd::kernels
