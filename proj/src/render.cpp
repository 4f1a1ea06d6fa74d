#include "echomap/render.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "echomap/error.hpp"
#include "echomap/kernels.hpp"

namespace echomap {
namespace render {

namespace {
void check_spacing(const Image2D& s, const PsfKernel& k) {
  const double rtol = 1e-9;
  if (std::abs(s.dx_mm - k.dx_mm) > rtol * std::max(s.dx_mm, k.dx_mm) ||
      std::abs(s.dz_mm - k.dz_mm) > rtol * std::max(s.dz_mm, k.dz_mm))
    throw ValidationError("convolve_psf: kernel spacing (" + std::to_string(k.dx_mm) + ", " +
                          std::to_string(k.dz_mm) + ") mm does not match map spacing (" +
                          std::to_string(s.dx_mm) + ", " + std::to_string(s.dz_mm) + ") mm");
  if (k.values.rows > s.rows || k.values.cols > s.cols)
    throw ValidationError("convolve_psf: kernel (" + std::to_string(k.values.rows) + "x" +
                          std::to_string(k.values.cols) + ") exceeds map (" +
                          std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")");
}
}  // namespace

Image2D convolve_psf(const Image2D& s, const PsfKernel& k) {
  check_spacing(s, k);
  const int H = s.rows, W = s.cols;
  const int a = k.half_rows(), b = k.half_cols();
  Image2D out(H, W, s.dx_mm, s.dz_mm);
  std::vector<double> xp(static_cast<size_t>(H + 2 * a) * (W + 2 * b));
  kernels::replicate_pad(s.v.data(), H, W, a, b, xp.data());
  kernels::conv2d_valid(xp.data(), H + 2 * a, W + 2 * b, k.values.v.data(), k.values.rows,
                        k.values.cols, out.v.data());
  return out;
}

Image2D log_compress(const Image2D& e, double dr_db, double eps) {
  if (!(dr_db > 0.0)) throw ValidationError("log_compress: dr_db must be > 0");
  if (!(eps > 0.0)) throw ValidationError("log_compress: eps must be > 0");
  Image2D out(e.rows, e.cols, e.dx_mm, e.dz_mm);
  // same operation order as the tape path (log10, scale, shift, clamp) so
  // the two renderers stay bitwise interchangeable
  const double scale = 20.0 / dr_db;
  for (int i = 0; i < e.size(); ++i) {
    const double x = e.v[static_cast<size_t>(i)];
    if (x < 0.0)
      throw ValidationError("log_compress: negative envelope value " + std::to_string(x));
    const double b = std::log10(x + eps) * scale + 1.0;
    out.v[static_cast<size_t>(i)] = b < 0.0 ? 0.0 : (b > 1.0 ? 1.0 : b);
  }
  return out;
}

Image2D add_noise(const Image2D& e, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ValidationError("add_noise: sigma must be >= 0");
  if (sigma == 0.0) return e;
  Image2D out = e;
  for (int i = 0; i < out.size(); ++i) {
    const double x = out.v[static_cast<size_t>(i)] + sigma * rng.gaussian();
    out.v[static_cast<size_t>(i)] = x < 0.0 ? 0.0 : x;
  }
  return out;
}

Image2D bmode(const Image2D& s, const PsfKernel& k, double dr_db, double eps) {
  return log_compress(convolve_psf(s, k), dr_db, eps);
}

Image2D rebeam(const Image2D& s, const PsfParams& p, double new_f_c_mhz, double dr_db,
               double eps) {
  if (!(new_f_c_mhz > 0.0)) throw ValidationError("rebeam: frequency must be > 0");
  PsfParams q = p;
  q.f_c_mhz = new_f_c_mhz;
  const PsfKernel k = build_kernel(q, s.dx_mm, s.dz_mm);
  return bmode(s, k, dr_db, eps);
}

Var convolve_psf_node(Tape& tape, Var s, const PsfKernel& k) {
  return tape.conv2d_same(s, as_conv_kernel(k));
}

Var log_compress_node(Tape& tape, Var e, double dr_db, double eps) {
  if (!(dr_db > 0.0)) throw ValidationError("log_compress: dr_db must be > 0");
  Var logd = tape.log10_guarded(e, eps);
  Var scaled = tape.add_scalar(tape.mul_scalar(logd, 20.0 / dr_db), 1.0);
  return tape.clamp(scaled, 0.0, 1.0);
}

}  // namespace render
}  // namespace echomap
