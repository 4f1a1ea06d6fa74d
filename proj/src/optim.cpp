#include "echomap/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "echomap/error.hpp"
#include "echomap/render.hpp"
#include "echomap/rng.hpp"

namespace echomap {

namespace {

// 11x11 Gaussian, sigma 1.5, normalized to unit sum. Symmetric by
// construction (integer offsets give identical exponents).
std::shared_ptr<const ConvKernel> ssim_window() {
  static const std::shared_ptr<const ConvKernel> win = [] {
    auto k = std::make_shared<ConvKernel>();
    k->kh = 11;
    k->kw = 11;
    k->w.resize(121);
    const double inv2s2 = 1.0 / (2.0 * 1.5 * 1.5);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        const double d2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
        k->w[static_cast<size_t>(i) * 11 + j] = std::exp(-d2 * inv2s2);
        sum += k->w[static_cast<size_t>(i) * 11 + j];
      }
    for (double& x : k->w) x /= sum;
    return std::shared_ptr<const ConvKernel>(k);
  }();
  return win;
}

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

}  // namespace

Var ssim_node(Tape& tape, Var pred, Var target) {
  if (tape.rows(pred) != tape.rows(target) || tape.cols(pred) != tape.cols(target))
    throw ValidationError("ssim: shape mismatch");
  auto win = ssim_window();
  Var mu_a = tape.conv2d_same(pred, win);
  Var mu_b = tape.conv2d_same(target, win);
  Var mu_aa = tape.mul(mu_a, mu_a);
  Var mu_bb = tape.mul(mu_b, mu_b);
  Var mu_ab = tape.mul(mu_a, mu_b);
  Var var_a = tape.sub(tape.conv2d_same(tape.mul(pred, pred), win), mu_aa);
  Var var_b = tape.sub(tape.conv2d_same(tape.mul(target, target), win), mu_bb);
  Var cov = tape.sub(tape.conv2d_same(tape.mul(pred, target), win), mu_ab);
  Var num = tape.mul(tape.add_scalar(tape.mul_scalar(mu_ab, 2.0), kSsimC1),
                     tape.add_scalar(tape.mul_scalar(cov, 2.0), kSsimC2));
  Var den = tape.mul(tape.add_scalar(tape.add(mu_aa, mu_bb), kSsimC1),
                     tape.add_scalar(tape.add(var_a, var_b), kSsimC2));
  return tape.mean(tape.div(num, den));
}

Var l2_node(Tape& tape, Var pred, Var target, bool sum) {
  if (tape.rows(pred) != tape.rows(target) || tape.cols(pred) != tape.cols(target))
    throw ValidationError("l2: shape mismatch");
  Var sq = tape.square(tape.sub(pred, target));
  return sum ? tape.sum(sq) : tape.mean(sq);
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ValidationError("loss: lambda must be in [0,1], got " + std::to_string(lambda));
  if (!(epsilon_tv >= 0.0)) throw ValidationError("loss: epsilon_tv must be >= 0");
}

LossTerms total_loss_node(Tape& tape, Var pred, Var target, Var field, const LossWeights& w) {
  w.validate();
  LossTerms t;
  t.ssim = ssim_node(tape, pred, target);
  t.l2 = l2_node(tape, pred, target, w.l2_sum);
  t.tv = tape.tv_mean(field);
  Var dissim = tape.add_scalar(tape.mul_scalar(t.ssim, -1.0), 1.0);
  t.total = tape.add(tape.add(tape.mul_scalar(dissim, w.lambda),
                              tape.mul_scalar(t.l2, 1.0 - w.lambda)),
                     tape.mul_scalar(t.tv, w.epsilon_tv));
  return t;
}

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr_ > 0.0)) throw ValidationError("adam: learning rate must be > 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* p : params_) {
    m_.emplace_back(p->rows, p->cols);
    v_.emplace_back(p->rows, p->cols);
  }
}

void Adam::step(const std::vector<const std::vector<double>*>& grads) {
  if (grads.size() != params_.size())
    throw ValidationError("adam: got " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(params_.size()) + " parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    const std::vector<double>* g = grads[k];
    if (g && !g->empty() && g->size() != p.v.size())
      throw ValidationError("adam: gradient size mismatch for parameter " + std::to_string(k));
    const size_t n = p.v.size();
    for (size_t i = 0; i < n; ++i) {
      const double gi = (g && !g->empty()) ? (*g)[i] : 0.0;
      m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * gi;
      v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * gi * gi;
      p.v[i] -= lr_ * (m.v[i] / bc1) / (std::sqrt(v.v[i] / bc2) + eps_);
    }
  }
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ValidationError("train: iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning rate must be > 0");
  if (!(dynamic_range > 0.0)) throw ValidationError("train: dynamic range must be > 0");
  loss.validate();
  sampling.validate();
}

TrainConfig TrainConfig::for_target(const Image2D& target, int oversample, bool jitter) {
  TrainConfig cfg;
  cfg.sampling.rows = target.rows;
  cfg.sampling.cols = target.cols;
  cfg.sampling.dx_mm = target.dx_mm;
  cfg.sampling.dz_mm = target.dz_mm;
  cfg.sampling.oversample = oversample;
  cfg.sampling.jitter = jitter;
  return cfg;
}

namespace {
bool close_rel(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}
}  // namespace

TrainReport train(InrModel& model, const Image2D& target, const PsfKernel& kernel,
                  const TrainConfig& cfg, const TrainLogFn& on_log) {
  cfg.validate();
  if (cfg.sampling.rows != target.rows || cfg.sampling.cols != target.cols ||
      !close_rel(cfg.sampling.dx_mm, target.dx_mm) || !close_rel(cfg.sampling.dz_mm, target.dz_mm))
    throw ValidationError("train: sampling geometry does not match the target image");
  if (!close_rel(kernel.dx_mm, cfg.sampling.fine_dx()) ||
      !close_rel(kernel.dz_mm, cfg.sampling.fine_dz()))
    throw ValidationError(
        "train: kernel spacing must match the fine sampling grid (rebuild the kernel at "
        "dx/oversample)");
  for (double x : target.v)
    if (!(x >= 0.0 && x <= 1.0))
      throw ValidationError("train: target must be normalized to [0,1]");

  Rng rng(cfg.seed);
  Adam opt(model.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  const Tensor target_t = target.tensor();

  TrainReport report;
  report.history.reserve(static_cast<size_t>(cfg.iterations));
  const auto t0 = std::chrono::steady_clock::now();
  Tape tape;
  for (int it = 0; it < cfg.iterations; ++it) {
    tape.reset();
    ModelVars vars = make_leaves(tape, model, true);
    Var field = sample_grid_node(tape, vars, model.cfg, cfg.sampling, rng);
    Var env = render::convolve_psf_node(tape, field, kernel);
    if (cfg.sampling.oversample > 1) env = tape.avg_pool(env, cfg.sampling.oversample);
    Var bmode = render::log_compress_node(tape, env, cfg.dynamic_range);
    Var tgt = tape.constant(target_t);
    LossTerms lt = total_loss_node(tape, bmode, tgt, field, cfg.loss);

    IterRecord rec;
    rec.total = tape.val(lt.total)[0];
    rec.ssim = tape.val(lt.ssim)[0];
    rec.l2 = tape.val(lt.l2)[0];
    rec.tv = tape.val(lt.tv)[0];
    if (!std::isfinite(rec.total)) {
      const int bad = tape.first_nonfinite();
      throw NumericError("train: non-finite loss at iteration " + std::to_string(it) +
                         "; first non-finite node is " +
                         (bad >= 0 ? tape.op_name(bad) + " (#" + std::to_string(bad) + ")"
                                   : std::string("unknown")));
    }

    tape.backward(lt.total);
    std::vector<const std::vector<double>*> grads;
    grads.reserve(vars.all.size());
    for (Var p : vars.all) grads.push_back(&tape.grad(p));
    opt.step(grads);

    report.history.push_back(rec);
    if (on_log) on_log(it, rec);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

GridSearchConfig GridSearchConfig::defaults() {
  GridSearchConfig cfg;
  for (int i = 0; i <= 6; ++i) cfg.f_numbers.push_back(1.0 + 0.5 * i);
  for (int c = 1; c <= 5; ++c) cfg.cycle_counts.push_back(c);
  cfg.grid.levels = 6;
  cfg.grid.features = 1;
  cfg.grid.table_size = 1 << 12;
  cfg.grid.base_resolution = 8;
  cfg.grid.max_resolution = 64;
  return cfg;
}

void GridSearchConfig::validate() const {
  if (f_numbers.empty() || cycle_counts.empty())
    throw ValidationError("grid-search: candidate ranges must be non-empty");
  if (short_iters < 1) throw ValidationError("grid-search: short_iters must be >= 1");
  if (!(dynamic_range > 0.0)) throw ValidationError("grid-search: dynamic range must be > 0");
  loss.validate();
  grid.validate();
}

GridSearchResult psf_grid_search(const Image2D& target, const PsfParams& base,
                                 const GridSearchConfig& cfg, const GridLogFn& on_progress) {
  cfg.validate();
  GridSearchResult result;
  result.table.reserve(cfg.f_numbers.size() * cfg.cycle_counts.size());
  std::size_t index = 0;
  for (double fn : cfg.f_numbers)
    for (int nc : cfg.cycle_counts) {
      PsfParams p = base;
      p.f_number = fn;
      p.n_cycles = nc;
      p.validate();
      const PsfKernel kernel = build_kernel(p, target.dx_mm, target.dz_mm);

      // derived per-candidate seeds, same mixing as Rng::stream
      const auto derive = [&](std::uint64_t id) {
        return Rng::splitmix64(cfg.seed + 0x9E3779B97F4A7C15ULL * (id + 1));
      };
      InrModel model = InrModel::init(cfg.grid, derive(2 * index));
      TrainConfig tc = TrainConfig::for_target(target, 1, cfg.jitter);
      tc.iterations = cfg.short_iters;
      tc.learning_rate = cfg.learning_rate;
      tc.loss = cfg.loss;
      tc.dynamic_range = cfg.dynamic_range;
      tc.seed = derive(2 * index + 1);
      const TrainReport rep = train(model, target, kernel, tc);

      GridCandidate cand{fn, nc, rep.history.back().total};
      result.table.push_back(cand);
      if (on_progress) on_progress(index, cand);
      ++index;
    }

  result.best_index = 0;
  for (std::size_t i = 1; i < result.table.size(); ++i)
    if (result.table[i].score < result.table[result.best_index].score) result.best_index = i;
  result.best = base;
  result.best.f_number = result.table[result.best_index].f_number;
  result.best.n_cycles = result.table[result.best_index].n_cycles;
  return result;
}

void write_history_csv(const std::string& path, const TrainReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("history: cannot open " + path + " for writing");
  std::fputs("iteration,total,ssim,l2,tv\n", f);
  for (size_t i = 0; i < report.history.size(); ++i) {
    const IterRecord& r = report.history[i];
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, r.total, r.ssim, r.l2, r.tv);
  }
  if (std::fclose(f) != 0) throw ValidationError("history: write to " + path + " failed");
}

void write_scores_csv(const std::string& path, const GridSearchResult& result) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("scores: cannot open " + path + " for writing");
  std::fputs("f_number,n_cycles,score\n", f);
  for (const GridCandidate& c : result.table)
    std::fprintf(f, "%.17g,%d,%.17g\n", c.f_number, c.n_cycles, c.score);
  if (std::fclose(f) != 0) throw ValidationError("scores: write to " + path + " failed");
}

}  // namespace echomap
