#pragma once

#include <memory>

#include "echomap/tape.hpp"
#include "echomap/tensor.hpp"

namespace echomap {

// Transducer/pulse description for the separable point spread function.
// Units: mm, MHz, mm/us.
struct PsfParams {
  double f_c_mhz = 8.0;         // pulse center frequency
  double sos_mm_us = 1.54;      // speed of sound
  double focal_mm = 30.0;       // focal distance r
  double f_number = 2.0;        // r / aperture
  int n_cycles = 2;             // pulse length in carrier cycles

  double wavelength_mm() const { return sos_mm_us / f_c_mhz; }
  double aperture_mm() const { return focal_mm / f_number; }
  // FWHM of the pulse envelope equals the pulse length n_cycles * lambda
  double sigma_z_mm() const;
  // rayleigh distance of the sinc^2 lobe
  double first_lateral_zero_mm() const { return focal_mm * wavelength_mm() / aperture_mm(); }

  void validate() const;
};

// D^2 sinc^2(D x / (r lambda)); even, peak D^2 at x = 0.
double lateral_profile(double x_mm, const PsfParams& p);
// exp(-z^2 / (2 sigma_z^2)); even, peak 1 at z = 0.
double axial_profile(double z_mm, const PsfParams& p);

// Sampled separable kernel. Rows are axial (z), columns lateral (x).
// Odd dims, L1-normalized, exactly mirror-symmetric, peak at the center.
// Truncated at the second lateral zero (half-width 2 r lambda / D) and at
// 3 sigma_z axially.
struct PsfKernel {
  Tensor values;
  double dx_mm = 0.0;
  double dz_mm = 0.0;

  int half_rows() const { return values.rows / 2; }
  int half_cols() const { return values.cols / 2; }
};

// Requires dx <= lambda/2 and dz <= lambda/2; rejects otherwise with a hint
// to sample on a finer grid.
PsfKernel build_kernel(const PsfParams& p, double dx_mm, double dz_mm);

std::shared_ptr<const ConvKernel> as_conv_kernel(const PsfKernel& k);

}  // namespace echomap
