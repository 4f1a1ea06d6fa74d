#pragma once

#include "echomap/image.hpp"
#include "echomap/psf.hpp"
#include "echomap/rng.hpp"
#include "echomap/tape.hpp"

namespace echomap {
namespace render {

// envelope e = k * s ('same' convolution, replicate padding); the kernel
// must have been built at the map's pixel spacing
Image2D convolve_psf(const Image2D& s, const PsfKernel& k);

// B = clamp(20 log10(e + eps) / dr_db + 1, 0, 1); 0 dB reference is
// envelope 1.0, so inputs are expected normalized below that
Image2D log_compress(const Image2D& e, double dr_db, double eps = 1e-8);

// zero-mean gaussian noise on the envelope, clamped at 0 from below;
// sigma = 0 returns the input unchanged
Image2D add_noise(const Image2D& e, double sigma, Rng& rng);

Image2D bmode(const Image2D& s, const PsfKernel& k, double dr_db, double eps = 1e-8);

// re-render a fixed echogenicity map under a new center frequency
Image2D rebeam(const Image2D& s, const PsfParams& p, double new_f_c_mhz, double dr_db,
               double eps = 1e-8);

// tape-node versions used by training; identical arithmetic
Var convolve_psf_node(Tape& tape, Var s, const PsfKernel& k);
Var log_compress_node(Tape& tape, Var e, double dr_db, double eps = 1e-8);

}  // namespace render
}  // namespace echomap
