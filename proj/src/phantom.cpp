#include "echomap/phantom.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "echomap/error.hpp"

namespace echomap {

int PhantomSpec::rows() const { return static_cast<int>(std::lround(depth_mm / dz_mm)); }
int PhantomSpec::cols() const { return static_cast<int>(std::lround(width_mm / dx_mm)); }

void PhantomSpec::validate() const {
  if (!(width_mm > 0.0) || !(depth_mm > 0.0))
    throw ValidationError("phantom: width_mm and depth_mm must be > 0");
  if (!(dx_mm > 0.0) || !(dz_mm > 0.0))
    throw ValidationError("phantom: dx_mm and dz_mm must be > 0");
  if (rows() < 1 || cols() < 1) throw ValidationError("phantom: raster smaller than one pixel");
  if (background_mean < 0.0) throw ValidationError("phantom: background_mean must be >= 0");
  for (const Inclusion& c : inclusions)
    if (!(c.radius_mm > 0.0)) throw ValidationError("phantom: inclusion radius must be > 0");
  for (const Wire& w : wires)
    if (!(w.radius_mm > 0.0)) throw ValidationError("phantom: wire radius must be > 0");
  for (size_t i = 0; i < inclusions.size(); ++i)
    for (size_t j = i + 1; j < inclusions.size(); ++j) {
      const double ddx = inclusions[i].x_mm - inclusions[j].x_mm;
      const double ddz = inclusions[i].z_mm - inclusions[j].z_mm;
      const double d = std::sqrt(ddx * ddx + ddz * ddz);
      if (d < inclusions[i].radius_mm + inclusions[j].radius_mm - 1e-12)
        throw ValidationError("phantom: inclusions " + std::to_string(i) + " and " +
                              std::to_string(j) + " overlap (ambiguous contrast)");
    }
}

double sigma_from_mean(double mu) {
  if (mu < 0.0) throw ValidationError("sigma_from_mean: mean must be >= 0");
  return mu / std::sqrt(std::numbers::pi / 2.0);
}

double rayleigh_sample(double sigma, Rng& rng) {
  if (sigma < 0.0) throw ValidationError("rayleigh_sample: sigma must be >= 0");
  const double u = rng.uniform();
  return sigma * std::sqrt(-2.0 * std::log(1.0 - u));
}

namespace {
// fraction of the pixel covered by the disc, 8x8 subsamples
double coverage(double px_lo, double pz_lo, double dx, double dz, double cx, double cz,
                double r) {
  int inside = 0;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) {
      const double x = px_lo + (a + 0.5) / 8.0 * dx;
      const double z = pz_lo + (b + 0.5) / 8.0 * dz;
      const double ex = x - cx, ez = z - cz;
      if (ex * ex + ez * ez <= r * r) ++inside;
    }
  return inside / 64.0;
}
}  // namespace

Image2D rasterize(const PhantomSpec& spec, Rng& rng) {
  spec.validate();
  const int R = spec.rows(), C = spec.cols();
  Image2D img(R, C, spec.dx_mm, spec.dz_mm);

  for (int i = 0; i < R; ++i) {
    const double z = (i + 0.5) * spec.dz_mm;
    for (int j = 0; j < C; ++j) {
      const double x = (j + 0.5) * spec.dx_mm;
      double mu = spec.background_mean;
      for (const Inclusion& c : spec.inclusions) {
        const double ex = x - c.x_mm, ez = z - c.z_mm;
        if (ex * ex + ez * ez <= c.radius_mm * c.radius_mm) {
          mu = spec.background_mean * std::pow(10.0, c.contrast_db / 20.0);
          break;
        }
      }
      img.at(i, j) = rayleigh_sample(sigma_from_mean(mu), rng);
    }
  }

  for (const Wire& w : spec.wires) {
    const double val = spec.background_mean * std::pow(10.0, w.amplitude_db / 20.0);
    const int i_lo = std::max(0, static_cast<int>(std::floor((w.z_mm - w.radius_mm) / spec.dz_mm)) - 1);
    const int i_hi = std::min(R - 1, static_cast<int>(std::ceil((w.z_mm + w.radius_mm) / spec.dz_mm)) + 1);
    const int j_lo = std::max(0, static_cast<int>(std::floor((w.x_mm - w.radius_mm) / spec.dx_mm)) - 1);
    const int j_hi = std::min(C - 1, static_cast<int>(std::ceil((w.x_mm + w.radius_mm) / spec.dx_mm)) + 1);
    for (int i = i_lo; i <= i_hi; ++i)
      for (int j = j_lo; j <= j_hi; ++j) {
        const double f = coverage(j * spec.dx_mm, i * spec.dz_mm, spec.dx_mm, spec.dz_mm,
                                  w.x_mm, w.z_mm, w.radius_mm);
        if (f > 0.0) img.at(i, j) = f * val + (1.0 - f) * img.at(i, j);
      }
  }
  return img;
}

PhantomSpec default_cirs_spec() {
  PhantomSpec s;
  s.width_mm = 40.0;
  s.depth_mm = 45.0;
  s.dx_mm = 0.1;
  s.dz_mm = 0.1;
  s.background_mean = 1.0;
  s.seed = 1;
  s.inclusions = {
      {8.0, 15.0, 4.0, 6.0},
      {17.0, 15.0, 4.0, 3.0},
      {26.0, 15.0, 4.0, -3.0},
  };
  const double gaps[5] = {0.25, 0.5, 1.0, 2.0, 3.0};
  double x = 10.0;
  s.wires.push_back({x, 30.0, 0.04, 30.0});
  for (double g : gaps) {
    x += g;
    s.wires.push_back({x, 30.0, 0.04, 30.0});
  }
  double z = 26.0;
  s.wires.push_back({25.0, z, 0.04, 30.0});
  for (double g : gaps) {
    z += g;
    s.wires.push_back({25.0, z, 0.04, 30.0});
  }
  return s;
}

}  // namespace echomap
