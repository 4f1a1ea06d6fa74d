#include "echomap/rl.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "echomap/error.hpp"
#include "echomap/kernels.hpp"

namespace echomap {

void RlConfig::validate() const {
  if (iterations < 1) throw ValidationError("rl: iterations must be >= 1");
  if (!(eps > 0.0)) throw ValidationError("rl: eps must be > 0");
  if (stop_tol < 0.0) throw ValidationError("rl: stop tolerance must be >= 0");
}

namespace {

void check_kernel(const Image2D& d, const PsfKernel& k) {
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
  };
  if (!close(k.dx_mm, d.dx_mm) || !close(k.dz_mm, d.dz_mm))
    throw ValidationError("rl: kernel spacing does not match the image spacing");
  if (k.values.rows > d.rows || k.values.cols > d.cols)
    throw ValidationError("rl: kernel (" + k.values.shape_str() + ") larger than the image");
  double sum = 0.0;
  for (double w : k.values.v) sum += std::abs(w);
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("rl: kernel is not L1-normalized (sum " + std::to_string(sum) + ")");
}

// replicate-pad 'same' convolution, the renderer's forward op
void conv_same(const std::vector<double>& x, int H, int W, const Tensor& k,
               std::vector<double>& pad_buf, std::vector<double>& y) {
  const int a = k.rows / 2, b = k.cols / 2;
  pad_buf.resize(static_cast<size_t>(H + 2 * a) * (W + 2 * b));
  kernels::replicate_pad(x.data(), H, W, a, b, pad_buf.data());
  y.resize(static_cast<size_t>(H) * W);
  kernels::conv2d_valid(pad_buf.data(), H + 2 * a, W + 2 * b, k.v.data(), k.rows, k.cols,
                        y.data());
}

Tensor flipped(const Tensor& k) {
  Tensor t(k.rows, k.cols);
  for (int r = 0; r < k.rows; ++r)
    for (int c = 0; c < k.cols; ++c)
      t.v[static_cast<size_t>(r) * k.cols + c] =
          k.v[static_cast<size_t>(k.rows - 1 - r) * k.cols + (k.cols - 1 - c)];
  return t;
}

}  // namespace

Image2D rl_deconvolve(const Image2D& d, const PsfKernel& k, const RlConfig& cfg) {
  cfg.validate();
  check_kernel(d, k);
  for (double x : d.v)
    if (!(x >= 0.0)) throw ValidationError("rl: input image has a negative pixel");

  const int H = d.rows, W = d.cols;
  const size_t n = d.v.size();
  const Tensor kbar = flipped(k.values);

  Image2D f = d;  // f0 = d
  std::vector<double> blur, factor, ratio(n), pad_buf;
  for (int it = 0; it < cfg.iterations; ++it) {
    conv_same(f.v, H, W, k.values, pad_buf, blur);
    for (size_t i = 0; i < n; ++i) ratio[i] = d.v[i] / std::max(blur[i], cfg.eps);
    conv_same(ratio, H, W, kbar, pad_buf, factor);
    double change = 0.0, norm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double next = f.v[i] * factor[i];
      change += std::abs(next - f.v[i]);
      norm += std::abs(f.v[i]);
      f.v[i] = next;
    }
    for (size_t i = 0; i < n; ++i)
      if (!std::isfinite(f.v[i]))
        throw NumericError("rl: non-finite value at iteration " + std::to_string(it));
    if (cfg.stop_tol > 0.0 && change <= cfg.stop_tol * std::max(norm, 1e-300)) break;
  }
  return f;
}

double rl_residual(const Image2D& d, const PsfKernel& k, const Image2D& f) {
  if (d.rows != f.rows || d.cols != f.cols) throw ValidationError("rl: residual shape mismatch");
  check_kernel(d, k);
  std::vector<double> blur, pad_buf;
  conv_same(f.v, d.rows, d.cols, k.values, pad_buf, blur);
  double acc = 0.0;
  for (size_t i = 0; i < d.v.size(); ++i) acc += std::abs(d.v[i] - blur[i]);
  return acc / static_cast<double>(d.v.size());
}

}  // namespace echomap
