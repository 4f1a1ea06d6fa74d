#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "echomap/image.hpp"
#include "echomap/inr.hpp"
#include "echomap/psf.hpp"
#include "echomap/tape.hpp"

namespace echomap {

// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2
// for unit dynamic range, replicate padding, mean over all window positions.
// Shared by the training loss and the evaluation metric.
Var ssim_node(Tape& tape, Var pred, Var target);

// Mean (default) or literal-sum squared difference.
Var l2_node(Tape& tape, Var pred, Var target, bool sum = false);

struct LossWeights {
  double lambda = 0.5;     // SSIM/L2 mix
  double epsilon_tv = 1e-4;
  bool l2_sum = false;     // restore the literal summed L2

  void validate() const;
};

struct LossTerms {
  Var total, ssim, l2, tv;
};

// total = lambda * (1 - ssim) + (1 - lambda) * l2 + epsilon_tv * tv(field)
LossTerms total_loss_node(Tape& tape, Var pred, Var target, Var field, const LossWeights& w);

// Bias-corrected Adam over in-place parameter tensors.
class Adam {
 public:
  explicit Adam(std::vector<Tensor*> params, double lr = 0.01, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // One grad per parameter, in constructor order. A null or empty entry means
  // a zero gradient for that parameter.
  void step(const std::vector<const std::vector<double>*>& grads);

  int timestep() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int iterations = 5000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights loss;
  SamplingSpec sampling;  // geometry must match the target image
  double dynamic_range = 60.0;
  std::uint64_t seed = 1;

  void validate() const;
  // Sampling geometry copied from the target image.
  static TrainConfig for_target(const Image2D& target, int oversample = 1, bool jitter = true);
};

struct IterRecord {
  double total = 0.0, ssim = 0.0, l2 = 0.0, tv = 0.0;
};

struct TrainReport {
  std::vector<IterRecord> history;  // one record per iteration
  double wall_seconds = 0.0;
};

using TrainLogFn = std::function<void(int iteration, const IterRecord&)>;

// Fit the model to the target B-mode through the rendering chain:
// sample (jittered) -> convolve at the fine grid -> average-pool to the pixel
// grid -> log-compress -> loss -> backward -> Adam. Deterministic given seed.
// Aborts with NumericError when the loss goes non-finite, naming the first
// offending node.
TrainReport train(InrModel& model, const Image2D& target, const PsfKernel& kernel,
                  const TrainConfig& cfg, const TrainLogFn& on_log = {});

struct GridCandidate {
  double f_number = 0.0;
  int n_cycles = 0;
  double score = 0.0;  // final training loss
};

struct GridSearchConfig {
  std::vector<double> f_numbers;  // defaults: 1.0 to 4.0 step 0.5
  std::vector<int> cycle_counts;  // defaults: 1 to 5
  int short_iters = 500;
  double dynamic_range = 60.0;
  double learning_rate = 0.01;
  LossWeights loss;
  HashGridConfig grid;  // small throwaway model per candidate
  std::uint64_t seed = 1;
  bool jitter = true;

  static GridSearchConfig defaults();
  void validate() const;
};

struct GridSearchResult {
  PsfParams best;
  std::size_t best_index = 0;
  std::vector<GridCandidate> table;  // f_number-major, cycles minor
};

using GridLogFn = std::function<void(std::size_t index, const GridCandidate&)>;

// Trains a fresh small model per (f_number, n_cycles) candidate for
// cfg.short_iters and returns the candidate with the lowest final loss.
// Candidate RNG streams derive from (seed, candidate index).
GridSearchResult psf_grid_search(const Image2D& target, const PsfParams& base,
                                 const GridSearchConfig& cfg, const GridLogFn& on_progress = {});

// CSV: iteration,total,ssim,l2,tv
void write_history_csv(const std::string& path, const TrainReport& report);
// CSV: f_number,n_cycles,score
void write_scores_csv(const std::string& path, const GridSearchResult& result);

}  // namespace echomap
