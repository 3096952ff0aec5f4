#include <algorithm>
#include <cmath>

#include "akd/kernels.hpp"

// Parallel variants. Pragmas sit on loops whose iterations each own a
// distinct output slot, so results match serial:: bitwise for any thread
// count. Reductions stay inside an iteration.

namespace akd::kernels::omp {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
#pragma omp parallel for
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
#pragma omp parallel for
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
#pragma omp parallel for
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void ew_binary(int kind, const double* a, const double* b, double* out, int64_t n) {
  switch (kind) {
    case 0:
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
      break;
    case 1:
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    case 2:
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
      break;
    default:
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
      break;
  }
}

void relu_fwd(const double* x, double* out, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(double* dst, const double* g, const double* x, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dst[i] += g[i];
}

void acc_mul(double* dst, const double* g, const double* other, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i] * other[i];
}

void acc_scale(double* dst, const double* g, double c, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] += c * g[i];
}

void acc_div(double* dst, const double* g, const double* x, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i] / x[i];
}

void acc_div_den(double* dst, const double* g, const double* a, const double* b, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] -= g[i] * a[i] / (b[i] * b[i]);
}

void softmax_rows(const double* z, double* p, int64_t rows, int64_t cols, double t) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const double* zr = z + r * cols;
    double* pr = p + r * cols;
    double zmax = zr[0];
    for (int64_t j = 1; j < cols; ++j) zmax = std::max(zmax, zr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      pr[j] = std::exp((zr[j] - zmax) / t);
      sum += pr[j];
    }
    for (int64_t j = 0; j < cols; ++j) pr[j] /= sum;
  }
}

void softmax_rows_bwd(double* dst, const double* g, const double* p, int64_t rows, int64_t cols,
                      double t) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const double* gr = g + r * cols;
    const double* pr = p + r * cols;
    double* dr = dst + r * cols;
    double dot = 0.0;
    for (int64_t j = 0; j < cols; ++j) dot += gr[j] * pr[j];
    for (int64_t j = 0; j < cols; ++j) dr[j] += pr[j] * (gr[j] - dot) / t;
  }
}

void log_softmax_rows(const double* z, double* lp, int64_t rows, int64_t cols, double t) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const double* zr = z + r * cols;
    double* lr = lp + r * cols;
    double zmax = zr[0];
    for (int64_t j = 1; j < cols; ++j) zmax = std::max(zmax, zr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      lr[j] = (zr[j] - zmax) / t;
      sum += std::exp(lr[j]);
    }
    double lse = std::log(sum);
    for (int64_t j = 0; j < cols; ++j) lr[j] -= lse;
  }
}

void log_softmax_rows_bwd(double* dst, const double* g, const double* lp, int64_t rows,
                          int64_t cols, double t) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const double* gr = g + r * cols;
    const double* lr = lp + r * cols;
    double* dr = dst + r * cols;
    double gsum = 0.0;
    for (int64_t j = 0; j < cols; ++j) gsum += gr[j];
    for (int64_t j = 0; j < cols; ++j) dr[j] += (gr[j] - std::exp(lr[j]) * gsum) / t;
  }
}

void maxpool_planes(const double* x, double* out, int64_t* argmax, int64_t rows, int64_t plane) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * plane;
    int64_t best = 0;
    for (int64_t i = 1; i < plane; ++i)
      if (xr[i] > xr[best]) best = i;
    out[r] = xr[best];
    argmax[r] = best;
  }
}

void conv3x3_fwd(const double* x, const double* w, const double* bias, double* out, int64_t B,
                 int64_t Ci, int64_t Co, int64_t H, int64_t W) {
#pragma omp parallel for collapse(2)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t co = 0; co < Co; ++co) {
      for (int64_t h = 0; h < H; ++h) {
        for (int64_t ww = 0; ww < W; ++ww) {
          double acc = bias ? bias[co] : 0.0;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const double* xp = x + ((b * Ci + ci) * H) * W;
            const double* wp = w + ((co * Ci + ci) * 3) * 3;
            for (int64_t ky = 0; ky < 3; ++ky) {
              int64_t y = h + ky - 1;
              if (y < 0 || y >= H) continue;
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xx = ww + kx - 1;
                if (xx < 0 || xx >= W) continue;
                acc += xp[y * W + xx] * wp[ky * 3 + kx];
              }
            }
          }
          out[((b * Co + co) * H + h) * W + ww] = acc;
        }
      }
    }
  }
}

void conv3x3_bwd_input(double* dx, const double* g, const double* w, int64_t B, int64_t Ci,
                       int64_t Co, int64_t H, int64_t W) {
#pragma omp parallel for collapse(2)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ci = 0; ci < Ci; ++ci) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (int64_t co = 0; co < Co; ++co) {
            const double* gp = g + ((b * Co + co) * H) * W;
            const double* wp = w + ((co * Ci + ci) * 3) * 3;
            for (int64_t ky = 0; ky < 3; ++ky) {
              int64_t oy = y - ky + 1;
              if (oy < 0 || oy >= H) continue;
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t ox = x - kx + 1;
                if (ox < 0 || ox >= W) continue;
                acc += gp[oy * W + ox] * wp[ky * 3 + kx];
              }
            }
          }
          dx[((b * Ci + ci) * H + y) * W + x] += acc;
        }
      }
    }
  }
}

void conv3x3_bwd_weight(double* dw, const double* g, const double* x, int64_t B, int64_t Ci,
                        int64_t Co, int64_t H, int64_t W) {
#pragma omp parallel for collapse(2)
  for (int64_t co = 0; co < Co; ++co) {
    for (int64_t ci = 0; ci < Ci; ++ci) {
      for (int64_t ky = 0; ky < 3; ++ky) {
        for (int64_t kx = 0; kx < 3; ++kx) {
          double acc = 0.0;
          for (int64_t b = 0; b < B; ++b) {
            const double* gp = g + ((b * Co + co) * H) * W;
            const double* xp = x + ((b * Ci + ci) * H) * W;
            for (int64_t h = 0; h < H; ++h) {
              int64_t y = h + ky - 1;
              if (y < 0 || y >= H) continue;
              for (int64_t ww = 0; ww < W; ++ww) {
                int64_t xx = ww + kx - 1;
                if (xx < 0 || xx >= W) continue;
                acc += gp[h * W + ww] * xp[y * W + xx];
              }
            }
          }
          dw[((co * Ci + ci) * 3 + ky) * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace akd::kernels::omp
