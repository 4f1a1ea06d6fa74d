#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "echomap/kernels.hpp"
#include "echomap/rng.hpp"

using namespace echomap;

namespace {

std::vector<double> random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Brute-force 'same' convolution with replicate padding: the oracle every
// fast path is judged against.
std::vector<double> same_conv_brute(const std::vector<double>& x, int H, int W,
                                    const std::vector<double>& k, int kh, int kw) {
  const int a = kh / 2, b = kw / 2;
  std::vector<double> y(static_cast<size_t>(H) * W, 0.0);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int r = 0; r < kh; ++r)
        for (int c = 0; c < kw; ++c) {
          const int p = std::clamp(i + r - a, 0, H - 1);
          const int q = std::clamp(j + c - b, 0, W - 1);
          acc += k[static_cast<size_t>(r) * kw + c] * x[static_cast<size_t>(p) * W + q];
        }
      y[static_cast<size_t>(i) * W + j] = acc;
    }
  return y;
}

std::vector<double> same_conv_fast(const std::vector<double>& x, int H, int W,
                                   const std::vector<double>& k, int kh, int kw) {
  const int a = kh / 2, b = kw / 2;
  std::vector<double> xp(static_cast<size_t>(H + 2 * a) * (W + 2 * b));
  kernels::replicate_pad(x.data(), H, W, a, b, xp.data());
  std::vector<double> y(static_cast<size_t>(H) * W);
  kernels::conv2d_valid(xp.data(), H + 2 * a, W + 2 * b, k.data(), kh, kw, y.data());
  return y;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("replicate_pad clamps edge pixels") {
  // 2x3 image, pad 1x2: check a few cells by hand
  const std::vector<double> x = {1, 2, 3, 4, 5, 6};
  std::vector<double> xp(static_cast<size_t>(4) * 7, -99.0);
  kernels::replicate_pad(x.data(), 2, 3, 1, 2, xp.data());
  CHECK(xp[0] == 1.0);                       // top-left corner replicates x[0][0]
  CHECK(xp[6] == 3.0);                       // top-right corner
  CHECK(xp[static_cast<size_t>(3) * 7 + 0] == 4.0);  // bottom-left
  CHECK(xp[static_cast<size_t>(3) * 7 + 6] == 6.0);  // bottom-right
  CHECK(xp[static_cast<size_t>(1) * 7 + 2] == 1.0);  // interior row, left pad
  CHECK(xp[static_cast<size_t>(1) * 7 + 3] == 2.0);  // original pixel
  CHECK(xp[static_cast<size_t>(2) * 7 + 3] == 5.0);  // original pixel, second row
  CHECK(xp[static_cast<size_t>(2) * 7 + 4] == 6.0);
}

TEST_CASE("conv2d_same matches brute force on 50 random pairs") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int H = 2 + static_cast<int>(rng.uniform() * 31);  // up to 32
    const int W = 2 + static_cast<int>(rng.uniform() * 31);
    const int kh = 1 + 2 * static_cast<int>(rng.uniform() * 4.999);  // odd, <= 9
    const int kw = 1 + 2 * static_cast<int>(rng.uniform() * 4.999);
    if (kh > H || kw > W) continue;
    const auto x = random_vec(rng, H * W);
    const auto k = random_vec(rng, kh * kw);
    const auto fast = same_conv_fast(x, H, W, k, kh, kw);
    const auto brute = same_conv_brute(x, H, W, k, kh, kw);
    CHECK(max_abs_diff(fast, brute) < 1e-12);
  }
}

TEST_CASE("pad_adjoint is the transpose of replicate_pad") {
  // <pad(x), y> == <x, pad_adjoint(y)> for random x, y
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int H = 2 + static_cast<int>(rng.uniform() * 10);
    const int W = 2 + static_cast<int>(rng.uniform() * 10);
    const int a = static_cast<int>(rng.uniform() * 4);
    const int b = static_cast<int>(rng.uniform() * 4);
    const int Hp = H + 2 * a, Wp = W + 2 * b;
    const auto x = random_vec(rng, H * W);
    const auto y = random_vec(rng, Hp * Wp);
    std::vector<double> xp(static_cast<size_t>(Hp) * Wp);
    kernels::replicate_pad(x.data(), H, W, a, b, xp.data());
    std::vector<double> xty(static_cast<size_t>(H) * W);
    kernels::pad_adjoint(y.data(), H, W, a, b, xty.data());
    CHECK(std::abs(dot(xp, y) - dot(x, xty)) < 1e-10);
  }
}

TEST_CASE("corr2d_full is the transpose of conv2d_valid") {
  // <conv(xp), gy> == <xp, corr(gy)>
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int kh = 1 + 2 * static_cast<int>(rng.uniform() * 3);
    const int kw = 1 + 2 * static_cast<int>(rng.uniform() * 3);
    const int H = 1 + static_cast<int>(rng.uniform() * 8);
    const int W = 1 + static_cast<int>(rng.uniform() * 8);
    const int Hp = H + kh - 1, Wp = W + kw - 1;
    const auto xp = random_vec(rng, Hp * Wp);
    const auto gy = random_vec(rng, H * W);
    const auto k = random_vec(rng, kh * kw);
    std::vector<double> y(static_cast<size_t>(H) * W);
    kernels::conv2d_valid(xp.data(), Hp, Wp, k.data(), kh, kw, y.data());
    std::vector<double> gxp(static_cast<size_t>(Hp) * Wp);
    kernels::corr2d_full(gy.data(), H, W, k.data(), kh, kw, gxp.data());
    const double lhs = dot(y, gy), rhs = dot(xp, gxp);
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("linear kernels match a naive triple loop") {
  Rng rng(13);
  const int B = 17, n = 9, m = 5;
  const auto X = random_vec(rng, B * n);
  const auto W = random_vec(rng, m * n);
  const auto bias = random_vec(rng, m);
  const auto dY = random_vec(rng, B * m);

  std::vector<double> Y(static_cast<size_t>(B) * m);
  kernels::linear_forward(X.data(), B, n, W.data(), m, bias.data(), Y.data());
  for (int bi = 0; bi < B; ++bi)
    for (int j = 0; j < m; ++j) {
      double acc = bias[static_cast<size_t>(j)];
      for (int t = 0; t < n; ++t)
        acc += X[static_cast<size_t>(bi) * n + t] * W[static_cast<size_t>(j) * n + t];
      CHECK(std::abs(Y[static_cast<size_t>(bi) * m + j] - acc) < 1e-12);
    }

  std::vector<double> dX(static_cast<size_t>(B) * n, 0.0);
  kernels::linear_grad_input(dY.data(), B, m, W.data(), n, dX.data());
  for (int bi = 0; bi < B; ++bi)
    for (int t = 0; t < n; ++t) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j)
        acc += dY[static_cast<size_t>(bi) * m + j] * W[static_cast<size_t>(j) * n + t];
      CHECK(std::abs(dX[static_cast<size_t>(bi) * n + t] - acc) < 1e-12);
    }

  std::vector<double> dW(static_cast<size_t>(m) * n, 0.0);
  kernels::linear_grad_weight(dY.data(), B, m, X.data(), n, dW.data());
  for (int j = 0; j < m; ++j)
    for (int t = 0; t < n; ++t) {
      double acc = 0.0;
      for (int bi = 0; bi < B; ++bi)
        acc += dY[static_cast<size_t>(bi) * m + j] * X[static_cast<size_t>(bi) * n + t];
      CHECK(std::abs(dW[static_cast<size_t>(j) * n + t] - acc) < 1e-12);
    }

  std::vector<double> db(static_cast<size_t>(m), 0.0);
  kernels::col_sums(dY.data(), B, m, db.data());
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int bi = 0; bi < B; ++bi) acc += dY[static_cast<size_t>(bi) * m + j];
    CHECK(std::abs(db[static_cast<size_t>(j)] - acc) < 1e-12);
  }
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  Rng rng(99);
  const int H = 37, W = 29, kh = 7, kw = 5, a = kh / 2, b = kw / 2;
  const auto x = random_vec(rng, H * W);
  const auto k = random_vec(rng, kh * kw);

  const int Hp = H + 2 * a, Wp = W + 2 * b;
  std::vector<double> p1(static_cast<size_t>(Hp) * Wp), p2(p1.size());
  kernels::replicate_pad_serial(x.data(), H, W, a, b, p1.data());
  kernels::replicate_pad_parallel(x.data(), H, W, a, b, p2.data());
  CHECK(p1 == p2);

  std::vector<double> y1(static_cast<size_t>(H) * W), y2(y1.size());
  kernels::conv2d_valid_serial(p1.data(), Hp, Wp, k.data(), kh, kw, y1.data());
  kernels::conv2d_valid_parallel(p1.data(), Hp, Wp, k.data(), kh, kw, y2.data());
  CHECK(y1 == y2);

  std::vector<double> g1(static_cast<size_t>(Hp) * Wp), g2(g1.size());
  kernels::corr2d_full_serial(y1.data(), H, W, k.data(), kh, kw, g1.data());
  kernels::corr2d_full_parallel(y1.data(), H, W, k.data(), kh, kw, g2.data());
  CHECK(g1 == g2);

  std::vector<double> a1(static_cast<size_t>(H) * W), a2(a1.size());
  kernels::pad_adjoint_serial(g1.data(), H, W, a, b, a1.data());
  kernels::pad_adjoint_parallel(g1.data(), H, W, a, b, a2.data());
  CHECK(a1 == a2);

  const int B = 23, n = 15, m = 11;
  const auto X = random_vec(rng, B * n);
  const auto Wt = random_vec(rng, m * n);
  const auto bias = random_vec(rng, m);
  const auto dY = random_vec(rng, B * m);

  std::vector<double> f1(static_cast<size_t>(B) * m), f2(f1.size());
  kernels::linear_forward_serial(X.data(), B, n, Wt.data(), m, bias.data(), f1.data());
  kernels::linear_forward_parallel(X.data(), B, n, Wt.data(), m, bias.data(), f2.data());
  CHECK(f1 == f2);

  std::vector<double> dx1(static_cast<size_t>(B) * n, 0.0), dx2(dx1);
  kernels::linear_grad_input_serial(dY.data(), B, m, Wt.data(), n, dx1.data());
  kernels::linear_grad_input_parallel(dY.data(), B, m, Wt.data(), n, dx2.data());
  CHECK(dx1 == dx2);

  std::vector<double> dw1(static_cast<size_t>(m) * n, 0.0), dw2(dw1);
  kernels::linear_grad_weight_serial(dY.data(), B, m, X.data(), n, dw1.data());
  kernels::linear_grad_weight_parallel(dY.data(), B, m, X.data(), n, dw2.data());
  CHECK(dw1 == dw2);
}

TEST_CASE("set_parallel toggles the dispatcher without changing results") {
  Rng rng(5);
  const int H = 12, W = 9;
  const auto x = random_vec(rng, H * W);
  std::vector<double> with(static_cast<size_t>(H + 2) * (W + 2)), without(with.size());
  const bool was = kernels::parallel_enabled();
  kernels::set_parallel(true);
  kernels::replicate_pad(x.data(), H, W, 1, 1, with.data());
  kernels::set_parallel(false);
  kernels::replicate_pad(x.data(), H, W, 1, 1, without.data());
  kernels::set_parallel(was);
  CHECK(with == without);
}

TEST_CASE("sum_all adds left to right") {
  const std::vector<double> v = {0.1, 0.2, 0.3, 0.4};
  double ref = 0.0;
  for (double x : v) ref += x;
  CHECK(kernels::sum_all(v.data(), v.size()) == ref);
  CHECK(kernels::sum_all(v.data(), 0) == 0.0);
}
