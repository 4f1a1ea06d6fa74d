#include "echomap/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace echomap::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline int clampi(int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); }
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

// --- replicate padding -----------------------------------------------------

static inline void pad_row(const double* x, int W, int b, double* dst, int src_row, int cols) {
  const double* src = x + static_cast<size_t>(src_row) * W;
  for (int q = 0; q < cols; ++q) dst[q] = src[clampi(q - b, 0, W - 1)];
}

void replicate_pad_serial(const double* x, int H, int W, int a, int b, double* xp) {
  const int Wp = W + 2 * b;
  for (int p = 0; p < H + 2 * a; ++p)
    pad_row(x, W, b, xp + static_cast<size_t>(p) * Wp, clampi(p - a, 0, H - 1), Wp);
}

void replicate_pad_parallel(const double* x, int H, int W, int a, int b, double* xp) {
  const int Wp = W + 2 * b;
  const int Hp = H + 2 * a;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < Hp; ++p)
    pad_row(x, W, b, xp + static_cast<size_t>(p) * Wp, clampi(p - a, 0, H - 1), Wp);
}

void replicate_pad(const double* x, int H, int W, int a, int b, double* xp) {
  if (parallel_enabled())
    replicate_pad_parallel(x, H, W, a, b, xp);
  else
    replicate_pad_serial(x, H, W, a, b, xp);
}

// --- pad adjoint -----------------------------------------------------------

// Padded row p maps to source row clamp(p-a); row i therefore collects
// p = i+a plus, on the border rows, the pad rows that clamped onto them.
static inline void pad_adjoint_row(const double* gxp, int W, int a, int b, int H, int i,
                                   double* out) {
  const int Wp = W + 2 * b;
  const int p_lo = (i == 0) ? 0 : i + a;
  const int p_hi = (i == H - 1) ? H - 1 + 2 * a : i + a;
  for (int j = 0; j < W; ++j) out[j] = 0.0;
  for (int p = p_lo; p <= p_hi; ++p) {
    const double* row = gxp + static_cast<size_t>(p) * Wp;
    for (int j = 0; j < W; ++j) {
      const int q_lo = (j == 0) ? 0 : j + b;
      const int q_hi = (j == W - 1) ? W - 1 + 2 * b : j + b;
      double s = out[j];
      for (int q = q_lo; q <= q_hi; ++q) s += row[q];
      out[j] = s;
    }
  }
}

void pad_adjoint_serial(const double* gxp, int H, int W, int a, int b, double* gx) {
  std::vector<double> tmp(W);
  for (int i = 0; i < H; ++i) {
    pad_adjoint_row(gxp, W, a, b, H, i, tmp.data());
    double* dst = gx + static_cast<size_t>(i) * W;
    for (int j = 0; j < W; ++j) dst[j] += tmp[j];
  }
}

void pad_adjoint_parallel(const double* gxp, int H, int W, int a, int b, double* gx) {
#pragma omp parallel
  {
    std::vector<double> tmp(W);
#pragma omp for schedule(static)
    for (int i = 0; i < H; ++i) {
      pad_adjoint_row(gxp, W, a, b, H, i, tmp.data());
      double* dst = gx + static_cast<size_t>(i) * W;
      for (int j = 0; j < W; ++j) dst[j] += tmp[j];
    }
  }
}

void pad_adjoint(const double* gxp, int H, int W, int a, int b, double* gx) {
  if (parallel_enabled())
    pad_adjoint_parallel(gxp, H, W, a, b, gx);
  else
    pad_adjoint_serial(gxp, H, W, a, b, gx);
}

// --- convolution -----------------------------------------------------------

static inline void conv_row(const double* xp, int Wp, const double* k, int kh, int kw, int i,
                            int Wout, double* yrow) {
  for (int j = 0; j < Wout; ++j) yrow[j] = 0.0;
  for (int r = 0; r < kh; ++r) {
    const double* xrow = xp + static_cast<size_t>(i + r) * Wp;
    const double* krow = k + static_cast<size_t>(r) * kw;
    for (int c = 0; c < kw; ++c) {
      const double kv = krow[c];
      const double* xs = xrow + c;
      for (int j = 0; j < Wout; ++j) yrow[j] += kv * xs[j];
    }
  }
}

void conv2d_valid_serial(const double* xp, int Hp, int Wp, const double* k, int kh, int kw,
                         double* y) {
  const int Hout = Hp - kh + 1, Wout = Wp - kw + 1;
  for (int i = 0; i < Hout; ++i)
    conv_row(xp, Wp, k, kh, kw, i, Wout, y + static_cast<size_t>(i) * Wout);
}

void conv2d_valid_parallel(const double* xp, int Hp, int Wp, const double* k, int kh, int kw,
                           double* y) {
  const int Hout = Hp - kh + 1, Wout = Wp - kw + 1;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < Hout; ++i)
    conv_row(xp, Wp, k, kh, kw, i, Wout, y + static_cast<size_t>(i) * Wout);
}

void conv2d_valid(const double* xp, int Hp, int Wp, const double* k, int kh, int kw, double* y) {
  if (parallel_enabled())
    conv2d_valid_parallel(xp, Hp, Wp, k, kh, kw, y);
  else
    conv2d_valid_serial(xp, Hp, Wp, k, kh, kw, y);
}

static inline void corr_row(const double* gy, int H, int W, const double* k, int kh, int kw,
                            int p, int Wpad, double* out) {
  for (int q = 0; q < Wpad; ++q) out[q] = 0.0;
  const int r_lo = std::max(0, p - (H - 1));
  const int r_hi = std::min(kh - 1, p);
  for (int r = r_lo; r <= r_hi; ++r) {
    const double* gyrow = gy + static_cast<size_t>(p - r) * W;
    const double* krow = k + static_cast<size_t>(r) * kw;
    for (int c = 0; c < kw; ++c) {
      const double kv = krow[c];
      const int q_lo = c, q_hi = c + W - 1;
      const double* gs = gyrow - c;
      for (int q = q_lo; q <= q_hi; ++q) out[q] += kv * gs[q];
    }
  }
}

void corr2d_full_serial(const double* gy, int H, int W, const double* k, int kh, int kw,
                        double* gxp) {
  const int Hpad = H + kh - 1, Wpad = W + kw - 1;
  for (int p = 0; p < Hpad; ++p)
    corr_row(gy, H, W, k, kh, kw, p, Wpad, gxp + static_cast<size_t>(p) * Wpad);
}

void corr2d_full_parallel(const double* gy, int H, int W, const double* k, int kh, int kw,
                          double* gxp) {
  const int Hpad = H + kh - 1, Wpad = W + kw - 1;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < Hpad; ++p)
    corr_row(gy, H, W, k, kh, kw, p, Wpad, gxp + static_cast<size_t>(p) * Wpad);
}

void corr2d_full(const double* gy, int H, int W, const double* k, int kh, int kw, double* gxp) {
  if (parallel_enabled())
    corr2d_full_parallel(gy, H, W, k, kh, kw, gxp);
  else
    corr2d_full_serial(gy, H, W, k, kh, kw, gxp);
}

// --- batched linear layers ---------------------------------------------------

// Broadcast/axpy forms below: the inner loops run over independent output
// elements (no floating-point reduction), so they vectorize while keeping a
// fixed per-element accumulation order shared by serial and parallel paths.

static inline void linear_row_axpy(const double* xrow, int n, const double* WT, int m,
                                   const double* bias, double* yrow) {
  if (bias)
    for (int j = 0; j < m; ++j) yrow[j] = bias[j];
  else
    for (int j = 0; j < m; ++j) yrow[j] = 0.0;
  for (int t = 0; t < n; ++t) {
    const double xv = xrow[t];
    const double* wt = WT + static_cast<size_t>(t) * m;
    for (int j = 0; j < m; ++j) yrow[j] += xv * wt[j];
  }
}

static std::vector<double> transpose_weights(const double* W, int m, int n) {
  std::vector<double> WT(static_cast<size_t>(n) * m);
  for (int j = 0; j < m; ++j)
    for (int t = 0; t < n; ++t) WT[static_cast<size_t>(t) * m + j] = W[static_cast<size_t>(j) * n + t];
  return WT;
}

void linear_forward_serial(const double* X, int B, int n, const double* W, int m,
                           const double* bias, double* Y) {
  const std::vector<double> WT = transpose_weights(W, m, n);
  for (int bi = 0; bi < B; ++bi)
    linear_row_axpy(X + static_cast<size_t>(bi) * n, n, WT.data(), m, bias,
                    Y + static_cast<size_t>(bi) * m);
}

void linear_forward_parallel(const double* X, int B, int n, const double* W, int m,
                             const double* bias, double* Y) {
  const std::vector<double> WT = transpose_weights(W, m, n);
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < B; ++bi)
    linear_row_axpy(X + static_cast<size_t>(bi) * n, n, WT.data(), m, bias,
                    Y + static_cast<size_t>(bi) * m);
}

void linear_forward(const double* X, int B, int n, const double* W, int m, const double* bias,
                    double* Y) {
  if (parallel_enabled())
    linear_forward_parallel(X, B, n, W, m, bias, Y);
  else
    linear_forward_serial(X, B, n, W, m, bias, Y);
}

static inline void grad_input_row(const double* dyrow, int m, const double* W, int n,
                                  double* dxrow) {
  for (int j = 0; j < m; ++j) {
    const double g = dyrow[j];
    const double* wrow = W + static_cast<size_t>(j) * n;
    for (int t = 0; t < n; ++t) dxrow[t] += g * wrow[t];
  }
}

void linear_grad_input_serial(const double* dY, int B, int m, const double* W, int n, double* dX) {
  for (int bi = 0; bi < B; ++bi)
    grad_input_row(dY + static_cast<size_t>(bi) * m, m, W, n, dX + static_cast<size_t>(bi) * n);
}

void linear_grad_input_parallel(const double* dY, int B, int m, const double* W, int n,
                                double* dX) {
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < B; ++bi)
    grad_input_row(dY + static_cast<size_t>(bi) * m, m, W, n, dX + static_cast<size_t>(bi) * n);
}

void linear_grad_input(const double* dY, int B, int m, const double* W, int n, double* dX) {
  if (parallel_enabled())
    linear_grad_input_parallel(dY, B, m, W, n, dX);
  else
    linear_grad_input_serial(dY, B, m, W, n, dX);
}

// One pass over X accumulating a contiguous block [j_lo, j_hi) of dW rows;
// per (j, t) element the batch index always ascends, so any row partition
// gives the same bits.
static inline void grad_weight_rows(const double* dY, int B, int m, const double* X, int n,
                                    int j_lo, int j_hi, double* dW) {
  for (int bi = 0; bi < B; ++bi) {
    const double* xrow = X + static_cast<size_t>(bi) * n;
    const double* dyrow = dY + static_cast<size_t>(bi) * m;
    for (int j = j_lo; j < j_hi; ++j) {
      const double g = dyrow[j];
      double* dwrow = dW + static_cast<size_t>(j) * n;
      for (int t = 0; t < n; ++t) dwrow[t] += g * xrow[t];
    }
  }
}

void linear_grad_weight_serial(const double* dY, int B, int m, const double* X, int n,
                               double* dW) {
  grad_weight_rows(dY, B, m, X, n, 0, m, dW);
}

void linear_grad_weight_parallel(const double* dY, int B, int m, const double* X, int n,
                                 double* dW) {
#pragma omp parallel
  {
#ifdef _OPENMP
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
#else
    const int nt = 1, tid = 0;
#endif
    const int chunk = (m + nt - 1) / nt;
    const int j_lo = std::min(m, tid * chunk);
    const int j_hi = std::min(m, j_lo + chunk);
    if (j_lo < j_hi) grad_weight_rows(dY, B, m, X, n, j_lo, j_hi, dW);
  }
}

void linear_grad_weight(const double* dY, int B, int m, const double* X, int n, double* dW) {
  if (parallel_enabled())
    linear_grad_weight_parallel(dY, B, m, X, n, dW);
  else
    linear_grad_weight_serial(dY, B, m, X, n, dW);
}

void col_sums(const double* dY, int B, int m, double* db) {
  for (int bi = 0; bi < B; ++bi) {
    const double* row = dY + static_cast<size_t>(bi) * m;
    for (int j = 0; j < m; ++j) db[j] += row[j];
  }
}

double sum_all(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace echomap::kernels
