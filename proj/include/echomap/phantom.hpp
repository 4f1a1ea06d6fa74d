#pragma once

#include <cstdint>
#include <vector>

#include "echomap/image.hpp"
#include "echomap/rng.hpp"

namespace echomap {

// Contrast in amplitude dB: inclusion mean = background_mean * 10^(db/20).
struct Inclusion {
  double x_mm = 0.0, z_mm = 0.0;
  double radius_mm = 0.0;
  double contrast_db = 0.0;
};

// Wires render deterministically (no speckle) at
// background_mean * 10^(amplitude_db/20), area-fraction weighted at edges.
struct Wire {
  double x_mm = 0.0, z_mm = 0.0;
  double radius_mm = 0.04;
  double amplitude_db = 30.0;
};

struct PhantomSpec {
  double width_mm = 0.0, depth_mm = 0.0;
  double dx_mm = 0.0, dz_mm = 0.0;
  double background_mean = 1.0;
  std::uint64_t seed = 0;
  std::vector<Inclusion> inclusions;
  std::vector<Wire> wires;

  int rows() const;
  int cols() const;
  void validate() const;
};

// sigma of the Rayleigh distribution whose mean is mu
double sigma_from_mean(double mu);
// inverse-CDF draw: sigma * sqrt(-2 ln(1 - u)), one uniform per sample
double rayleigh_sample(double sigma, Rng& rng);

// Speckle is drawn pixel by pixel in row-major order (one Rayleigh draw per
// pixel), wires composited afterwards, so the same spec and rng state give a
// bit-identical map. Overlapping inclusions are rejected.
Image2D rasterize(const PhantomSpec& spec, Rng& rng);

// Mimic of a general-purpose grayscale/resolution phantom: three 8 mm
// inclusions at (+6, +3, -3) dB and 12 wires of radius 0.04 mm around 30 mm
// depth, one lateral row of 6 and one axial column of 6 with gaps
// {0.25, 0.5, 1.0, 2.0, 3.0} mm.
PhantomSpec default_cirs_spec();

}  // namespace echomap
