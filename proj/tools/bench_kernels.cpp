// Times the serial reference kernels against the OpenMP variants and checks
// they agree bitwise on every run.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "akd/kernels.hpp"
#include "akd/rng.hpp"

namespace {

using akd::Rng;
namespace kernels = akd::kernels;

std::vector<double> random_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void report(const std::string& name, double serial_s, double parallel_s, bool bitwise_equal) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              bitwise_equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(42);
  const int reps = 3;

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif

  {
    int64_t m = 384, k = 384, n = 384;
    auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1);
    double ts = time_best_of(reps, [&] { kernels::serial::matmul_nn(a.data(), b.data(), c1.data(), m, k, n, false); });
    double tp = time_best_of(reps, [&] { kernels::omp::matmul_nn(a.data(), b.data(), c2.data(), m, k, n, false); });
    report("matmul_nn 384x384x384", ts, tp,
           std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
  }
  {
    int64_t B = 16, Ci = 8, Co = 16, H = 32, W = 32;
    auto x = random_vec(B * Ci * H * W, rng), w = random_vec(Co * Ci * 9, rng), bias = random_vec(Co, rng);
    std::vector<double> o1(static_cast<size_t>(B * Co * H * W)), o2(o1);
    double ts = time_best_of(reps, [&] { kernels::serial::conv3x3_fwd(x.data(), w.data(), bias.data(), o1.data(), B, Ci, Co, H, W); });
    double tp = time_best_of(reps, [&] { kernels::omp::conv3x3_fwd(x.data(), w.data(), bias.data(), o2.data(), B, Ci, Co, H, W); });
    report("conv3x3_fwd 16x8->16 32^2", ts, tp,
           std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);

    auto g = random_vec(B * Co * H * W, rng);
    std::vector<double> dx1(static_cast<size_t>(B * Ci * H * W), 0.0), dx2(dx1);
    ts = time_best_of(reps, [&] { kernels::serial::conv3x3_bwd_input(dx1.data(), g.data(), w.data(), B, Ci, Co, H, W); });
    tp = time_best_of(reps, [&] { kernels::omp::conv3x3_bwd_input(dx2.data(), g.data(), w.data(), B, Ci, Co, H, W); });
    report("conv3x3_bwd_input", ts, tp,
           std::memcmp(dx1.data(), dx2.data(), dx1.size() * sizeof(double)) == 0);

    std::vector<double> dw1(static_cast<size_t>(Co * Ci * 9), 0.0), dw2(dw1);
    ts = time_best_of(reps, [&] { kernels::serial::conv3x3_bwd_weight(dw1.data(), g.data(), x.data(), B, Ci, Co, H, W); });
    tp = time_best_of(reps, [&] { kernels::omp::conv3x3_bwd_weight(dw2.data(), g.data(), x.data(), B, Ci, Co, H, W); });
    report("conv3x3_bwd_weight", ts, tp,
           std::memcmp(dw1.data(), dw2.data(), dw1.size() * sizeof(double)) == 0);
  }
  {
    int64_t n = 1 << 22;
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    std::vector<double> o1(static_cast<size_t>(n)), o2(o1);
    double ts = time_best_of(reps, [&] { kernels::serial::ew_binary(2, a.data(), b.data(), o1.data(), n); });
    double tp = time_best_of(reps, [&] { kernels::omp::ew_binary(2, a.data(), b.data(), o2.data(), n); });
    report("elementwise mul 4M", ts, tp,
           std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);
  }
  {
    int64_t rows = 4096, cols = 256;
    auto z = random_vec(rows * cols, rng);
    std::vector<double> p1(static_cast<size_t>(rows * cols)), p2(p1);
    double ts = time_best_of(reps, [&] { kernels::serial::softmax_rows(z.data(), p1.data(), rows, cols, 5.0); });
    double tp = time_best_of(reps, [&] { kernels::omp::softmax_rows(z.data(), p2.data(), rows, cols, 5.0); });
    report("softmax_rows 4096x256", ts, tp,
           std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);
  }
  {
    int64_t rows = 1 << 14, plane = 256;
    auto x = random_vec(rows * plane, rng);
    std::vector<double> o1(static_cast<size_t>(rows)), o2(o1);
    std::vector<int64_t> a1(static_cast<size_t>(rows)), a2(a1);
    double ts = time_best_of(reps, [&] { kernels::serial::maxpool_planes(x.data(), o1.data(), a1.data(), rows, plane); });
    double tp = time_best_of(reps, [&] { kernels::omp::maxpool_planes(x.data(), o2.data(), a2.data(), rows, plane); });
    report("maxpool_planes 16Kx256", ts, tp,
           std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0 &&
               std::memcmp(a1.data(), a2.data(), a1.size() * sizeof(int64_t)) == 0);
  }
  return 0;
}
