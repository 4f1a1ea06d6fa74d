// Microbenchmark comparing the serial reference kernels against the
// OpenMP-parallel ones. Outputs per-kernel timings (min over reps) and the
// max |serial - parallel| output difference, which must be exactly zero.
//
// Usage: echomap_bench [reps]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "echomap/kernels.hpp"
#include "echomap/rng.hpp"

using namespace echomap;

namespace {

double time_min_ms(int reps, const std::function<void()>& fn) {
  fn();  // warmup
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void fill(std::vector<double>& v, Rng& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

void report(const char* name, const std::string& size, double ser_ms, double par_ms,
            double diff) {
  std::printf("%-20s %-18s %10.3f ms %10.3f ms %7.2fx   %s\n", name, size.c_str(), ser_ms,
              par_ms, ser_ms / par_ms, diff == 0.0 ? "identical" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
  if (reps < 1) {
    std::fprintf(stderr, "usage: echomap_bench [reps>=1]\n");
    return 1;
  }
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP: disabled at build time\n");
#endif
  std::printf("reps: %d (reporting min)\n\n", reps);
  std::printf("%-20s %-18s %13s %13s %9s   %s\n", "kernel", "size", "serial", "parallel",
              "speedup", "outputs");

  Rng rng(42);

  // image-shaped workloads: 256x256 image, 39x25 PSF-sized kernel
  const int H = 256, W = 256, kh = 25, kw = 39;
  const int a = kh / 2, b = kw / 2;
  const int Hp = H + 2 * a, Wp = W + 2 * b;
  std::vector<double> img(static_cast<size_t>(H) * W), ker(static_cast<size_t>(kh) * kw);
  fill(img, rng);
  fill(ker, rng);
  std::vector<double> pad_s(static_cast<size_t>(Hp) * Wp), pad_p(pad_s.size());
  {
    const double ser = time_min_ms(
        reps, [&] { kernels::replicate_pad_serial(img.data(), H, W, a, b, pad_s.data()); });
    const double par = time_min_ms(
        reps, [&] { kernels::replicate_pad_parallel(img.data(), H, W, a, b, pad_p.data()); });
    report("replicate_pad", "256x256 +12+19", ser, par, max_abs_diff(pad_s, pad_p));
  }
  std::vector<double> conv_s(static_cast<size_t>(H) * W), conv_p(conv_s.size());
  {
    const double ser = time_min_ms(reps, [&] {
      kernels::conv2d_valid_serial(pad_s.data(), Hp, Wp, ker.data(), kh, kw, conv_s.data());
    });
    const double par = time_min_ms(reps, [&] {
      kernels::conv2d_valid_parallel(pad_s.data(), Hp, Wp, ker.data(), kh, kw, conv_p.data());
    });
    report("conv2d_valid", "256x256 * 25x39", ser, par, max_abs_diff(conv_s, conv_p));
  }
  std::vector<double> corr_s(pad_s.size()), corr_p(pad_s.size());
  {
    const double ser = time_min_ms(reps, [&] {
      kernels::corr2d_full_serial(conv_s.data(), H, W, ker.data(), kh, kw, corr_s.data());
    });
    const double par = time_min_ms(reps, [&] {
      kernels::corr2d_full_parallel(conv_s.data(), H, W, ker.data(), kh, kw, corr_p.data());
    });
    report("corr2d_full", "256x256 * 25x39", ser, par, max_abs_diff(corr_s, corr_p));
  }
  std::vector<double> unpad_s(img.size()), unpad_p(img.size());
  {
    const double ser = time_min_ms(
        reps, [&] { kernels::pad_adjoint_serial(corr_s.data(), H, W, a, b, unpad_s.data()); });
    const double par = time_min_ms(
        reps, [&] { kernels::pad_adjoint_parallel(corr_s.data(), H, W, a, b, unpad_p.data()); });
    report("pad_adjoint", "256x256 +12+19", ser, par, max_abs_diff(unpad_s, unpad_p));
  }

  // MLP-shaped workloads: 16384-point batch through a 64-wide layer
  const int B = 16384, n = 64, m = 64;
  std::vector<double> X(static_cast<size_t>(B) * n), Wt(static_cast<size_t>(m) * n), bias(m);
  std::vector<double> dY(static_cast<size_t>(B) * m);
  fill(X, rng);
  fill(Wt, rng);
  fill(bias, rng);
  fill(dY, rng);
  std::vector<double> Y_s(static_cast<size_t>(B) * m), Y_p(Y_s.size());
  {
    const double ser = time_min_ms(reps, [&] {
      kernels::linear_forward_serial(X.data(), B, n, Wt.data(), m, bias.data(), Y_s.data());
    });
    const double par = time_min_ms(reps, [&] {
      kernels::linear_forward_parallel(X.data(), B, n, Wt.data(), m, bias.data(), Y_p.data());
    });
    report("linear_forward", "16384x64 -> 64", ser, par, max_abs_diff(Y_s, Y_p));
  }
  std::vector<double> dX_s(X.size()), dX_p(X.size());
  {
    const double ser = time_min_ms(reps, [&] {
      std::fill(dX_s.begin(), dX_s.end(), 0.0);
      kernels::linear_grad_input_serial(dY.data(), B, m, Wt.data(), n, dX_s.data());
    });
    const double par = time_min_ms(reps, [&] {
      std::fill(dX_p.begin(), dX_p.end(), 0.0);
      kernels::linear_grad_input_parallel(dY.data(), B, m, Wt.data(), n, dX_p.data());
    });
    report("linear_grad_input", "16384x64 -> 64", ser, par, max_abs_diff(dX_s, dX_p));
  }
  std::vector<double> dW_s(Wt.size()), dW_p(Wt.size());
  {
    const double ser = time_min_ms(reps, [&] {
      std::fill(dW_s.begin(), dW_s.end(), 0.0);
      kernels::linear_grad_weight_serial(dY.data(), B, m, X.data(), n, dW_s.data());
    });
    const double par = time_min_ms(reps, [&] {
      std::fill(dW_p.begin(), dW_p.end(), 0.0);
      kernels::linear_grad_weight_parallel(dY.data(), B, m, X.data(), n, dW_p.data());
    });
    report("linear_grad_weight", "16384x64 -> 64", ser, par, max_abs_diff(dW_s, dW_p));
  }
  return 0;
}
