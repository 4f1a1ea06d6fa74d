#include "echomap/psf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "echomap/error.hpp"

namespace echomap {

double PsfParams::sigma_z_mm() const {
  // pulse length n_cycles * lambda as the envelope FWHM
  return n_cycles * wavelength_mm() / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

void PsfParams::validate() const {
  if (!(f_c_mhz > 0.0)) throw ValidationError("psf: f_c_mhz must be > 0");
  if (!(sos_mm_us > 0.0)) throw ValidationError("psf: sos_mm_us must be > 0");
  if (!(focal_mm > 0.0)) throw ValidationError("psf: focal_mm must be > 0");
  if (!(f_number > 0.0)) throw ValidationError("psf: f_number must be > 0");
  if (n_cycles < 1) throw ValidationError("psf: n_cycles must be >= 1");
}

namespace {
double sinc(double u) {
  if (u == 0.0) return 1.0;
  const double pu = std::numbers::pi * u;
  return std::sin(pu) / pu;
}
}  // namespace

double lateral_profile(double x_mm, const PsfParams& p) {
  const double D = p.aperture_mm();
  const double s = sinc(D * x_mm / (p.focal_mm * p.wavelength_mm()));
  return D * D * s * s;
}

double axial_profile(double z_mm, const PsfParams& p) {
  const double sz = p.sigma_z_mm();
  return std::exp(-z_mm * z_mm / (2.0 * sz * sz));
}

PsfKernel build_kernel(const PsfParams& p, double dx_mm, double dz_mm) {
  p.validate();
  if (!(dx_mm > 0.0) || !(dz_mm > 0.0)) throw ValidationError("build_kernel: spacing must be > 0");
  const double lambda = p.wavelength_mm();
  const double nyq = lambda / 2.0 * (1.0 + 1e-9);
  if (dx_mm > nyq || dz_mm > nyq)
    throw ValidationError(
        "build_kernel: spacing (dx=" + std::to_string(dx_mm) + ", dz=" + std::to_string(dz_mm) +
        " mm) exceeds lambda/2 = " + std::to_string(lambda / 2.0) + " mm at " +
        std::to_string(p.f_c_mhz) + " MHz; sample the map on a finer grid (oversample)");

  const double half_x = 2.0 * p.first_lateral_zero_mm();
  const double half_z = 3.0 * p.sigma_z_mm();
  const int hc = static_cast<int>(std::floor(half_x / dx_mm + 1e-12));
  const int hr = static_cast<int>(std::floor(half_z / dz_mm + 1e-12));

  // Profiles evaluated on the non-negative half axes and mirrored, so the
  // symmetry K[i][j] == K[R-1-i][C-1-j] is exact in floating point.
  std::vector<double> lat(static_cast<size_t>(hc) + 1), ax(static_cast<size_t>(hr) + 1);
  for (int j = 0; j <= hc; ++j) lat[static_cast<size_t>(j)] = lateral_profile(j * dx_mm, p);
  for (int i = 0; i <= hr; ++i) ax[static_cast<size_t>(i)] = axial_profile(i * dz_mm, p);

  const int rowsn = 2 * hr + 1, colsn = 2 * hc + 1;
  PsfKernel k;
  k.dx_mm = dx_mm;
  k.dz_mm = dz_mm;
  k.values = Tensor(rowsn, colsn);
  for (int i = 0; i < rowsn; ++i) {
    const double a = ax[static_cast<size_t>(std::abs(i - hr))];
    for (int j = 0; j < colsn; ++j)
      k.values.at(i, j) = a * lat[static_cast<size_t>(std::abs(j - hc))];
  }
  double total = 0.0;
  for (double x : k.values.v) total += x;
  for (double& x : k.values.v) x /= total;
  return k;
}

std::shared_ptr<const ConvKernel> as_conv_kernel(const PsfKernel& k) {
  auto ck = std::make_shared<ConvKernel>();
  ck->kh = k.values.rows;
  ck->kw = k.values.cols;
  ck->w = k.values.v;
  return ck;
}

}  // namespace echomap
