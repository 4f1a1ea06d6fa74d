#pragma once

#include "echomap/image.hpp"
#include "echomap/psf.hpp"

namespace echomap {

struct RlConfig {
  int iterations = 30;
  double eps = 1e-9;      // denominator guard
  double stop_tol = 0.0;  // relative-change stop; 0 runs all iterations

  void validate() const;
};

// Richardson-Lucy multiplicative deconvolution with replicate-pad
// convolutions matching the forward renderer. f0 = d; preserves
// nonnegativity. The division is guarded as d / max(h*f, eps) so a delta
// kernel is a bit-exact fixed point.
Image2D rl_deconvolve(const Image2D& d, const PsfKernel& k, const RlConfig& cfg);

// mean |d - h*f|
double rl_residual(const Image2D& d, const PsfKernel& k, const Image2D& f);

}  // namespace echomap
