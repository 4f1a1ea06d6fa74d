#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "echomap/image.hpp"
#include "echomap/rng.hpp"
#include "echomap/tape.hpp"
#include "echomap/tensor.hpp"

namespace echomap {

// Multi-resolution hash grid over the unit square.
struct HashGridConfig {
  int levels = 15;
  int features = 1;            // per table entry
  int table_size = 1 << 18;    // power of two
  int base_resolution = 16;
  int max_resolution = 128;    // usually the fine sampling grid dim

  void validate() const;
  // per-level growth factor exp((ln Nmax - ln Nmin) / (L - 1))
  double growth() const;
  // N_l = floor(Nmin * growth^l); non-decreasing in l
  int level_resolution(int level) const;
};

// (vx * 1) XOR (vz * 2654435761), modulo the table size.
std::uint32_t hash_index(int vx, int vz, int table_size);

// Hash tables plus a fixed 2x64 ReLU MLP with softplus output, so the field
// is continuous and non-negative. Output layer zero-initialized: a fresh
// model evaluates to softplus(0) = ln 2 everywhere.
struct InrModel {
  HashGridConfig cfg;
  std::vector<Tensor> tables;           // levels entries, each (T x F)
  Tensor w1, b1, w2, b2, w3, b3;

  static constexpr int kHidden = 64;

  static InrModel init(const HashGridConfig& cfg, std::uint64_t seed);
  std::size_t param_count() const;
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
};

// Leaves for one training iteration, in params() order.
struct ModelVars {
  std::vector<Var> tables;
  Var w1, b1, w2, b2, w3, b3;
  std::vector<Var> all;
};
ModelVars make_leaves(Tape& tape, const InrModel& model, bool requires_grad = true);

// Bilinear hash-grid features for a batch of normalized coordinates
// (both in [0, 1]); returns (n x levels*features).
Var encode_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
                std::span<const double> xs, std::span<const double> zs);

// softplus(mlp(encode(x, z))): (n x 1), differentiable wrt all leaves
Var field_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
               std::span<const double> xs, std::span<const double> zs);

double field_eval(const InrModel& model, double x, double z);

// Pixel grid to render: oversample subdivides every pixel o x o, jitter
// displaces each sample uniformly inside its subcell (otherwise centers).
struct SamplingSpec {
  int rows = 0, cols = 0;
  double dx_mm = 0.0, dz_mm = 0.0;
  int oversample = 1;
  bool jitter = false;

  void validate() const;
  int fine_rows() const { return rows * oversample; }
  int fine_cols() const { return cols * oversample; }
  double fine_dx() const { return dx_mm / oversample; }
  double fine_dz() const { return dz_mm / oversample; }
};

// The oversampled field as a tape node (fine_rows x fine_cols). Jitter
// draws two uniforms per sample in row-major order.
Var sample_grid_node(Tape& tape, const ModelVars& vars, const HashGridConfig& cfg,
                     const SamplingSpec& spec, Rng& rng);

Image2D sample_grid(const InrModel& model, const SamplingSpec& spec, Rng& rng);

// Versioned little-endian binary; round-trips bit-exactly.
void save_checkpoint(const InrModel& model, const std::string& path);
InrModel load_checkpoint(const std::string& path);

}  // namespace echomap
