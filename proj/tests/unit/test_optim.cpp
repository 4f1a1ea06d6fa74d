#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "echomap/error.hpp"
#include "echomap/gradcheck.hpp"
#include "echomap/image.hpp"
#include "echomap/inr.hpp"
#include "echomap/optim.hpp"
#include "echomap/psf.hpp"
#include "echomap/render.hpp"
#include "echomap/rng.hpp"
#include "echomap/tape.hpp"
#include "echomap/tensor.hpp"

using namespace echomap;

namespace {

Tensor rand_tensor(Rng& rng, int r, int c, double lo, double hi) {
  Tensor t(r, c);
  for (double& x : t.v) x = lo + (hi - lo) * rng.uniform();
  return t;
}

Image2D rand_image(Rng& rng, int r, int c, double dx, double dz, double lo, double hi) {
  Image2D img(r, c, dx, dz);
  for (double& x : img.v) x = lo + (hi - lo) * rng.uniform();
  return img;
}

double ssim_value(const Tensor& a, const Tensor& b) {
  Tape tp;
  return tp.val(ssim_node(tp, tp.constant(a), tp.constant(b)))[0];
}

// Small model whose field varies visibly instead of sitting at the
// fresh-init constant; keeps train() tests away from the degenerate
// flat-field fixed point.
InrModel varied_model(const HashGridConfig& cfg, std::uint64_t seed) {
  InrModel m = InrModel::init(cfg, seed);
  Rng rng(seed ^ 0xfeedULL);
  for (Tensor& t : m.tables)
    for (double& x : t.v) x = 0.4 * rng.uniform() - 0.2;
  for (double& x : m.w3.v) x = 0.6 * rng.uniform() - 0.3;
  for (double& x : m.b1.v) x = 0.2 * rng.uniform() - 0.1;
  for (double& x : m.b2.v) x = 0.2 * rng.uniform() - 0.1;
  m.b3.v[0] = 0.2;
  return m;
}

HashGridConfig small_grid() {
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.features = 2;
  cfg.table_size = 1 << 10;
  cfg.base_resolution = 4;
  cfg.max_resolution = 16;
  return cfg;
}

std::filesystem::path fresh_dir(const char* tag) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("ssim of an image with itself is exactly 1") {
  Rng rng(401);
  // Identical inputs make num and den bitwise equal per pixel (x + x and
  // 2 * x round identically), so the mean is a sum of exact ones.
  const Tensor a = rand_tensor(rng, 20, 17, 0.0, 1.0);
  CHECK(ssim_value(a, a) == 1.0);

  const Tensor c(14, 14, 0.37);
  CHECK(ssim_value(c, c) == 1.0);
}

TEST_CASE("ssim is symmetric in its arguments, bitwise") {
  Rng rng(402);
  const Tensor a = rand_tensor(rng, 16, 16, 0.0, 1.0);
  const Tensor b = rand_tensor(rng, 16, 16, 0.0, 1.0);
  CHECK(ssim_value(a, b) == ssim_value(b, a));
}

TEST_CASE("ssim of a binary image against its inverse is small") {
  Rng rng(403);
  Tensor a(32, 32);
  Tensor b(32, 32);
  for (size_t i = 0; i < a.v.size(); ++i) {
    a.v[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    b.v[i] = 1.0 - a.v[i];
  }
  const double s = ssim_value(a, b);
  CHECK(s < 0.2);
}

TEST_CASE("ssim constant-vs-shifted matches the closed form") {
  // Constant images have zero variance everywhere, so only the luminance
  // term survives: (2*c*(c+d) + C1) / (c^2 + (c+d)^2 + C1).
  const double c = 0.4, d = 0.2, C1 = 1e-4;
  const Tensor a(14, 14, c);
  const Tensor b(14, 14, c + d);
  const double expect = (2.0 * c * (c + d) + C1) / (c * c + (c + d) * (c + d) + C1);
  CHECK(ssim_value(a, b) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ssim gradient passes a finite-difference check") {
  Rng rng(404);
  const Tensor target = rand_tensor(rng, 16, 16, 0.2, 0.8);
  const Tensor pred = rand_tensor(rng, 16, 16, 0.2, 0.8);
  const double rel = grad_check(
      [&](Tape& tp, const std::vector<Var>& xs) {
        return ssim_node(tp, xs[0], tp.constant(target));
      },
      {pred});
  CHECK(rel < 1e-4);
}

TEST_CASE("ssim rejects shape mismatches") {
  Tape tp;
  Var a = tp.constant(Tensor(12, 12, 0.5));
  Var b = tp.constant(Tensor(12, 13, 0.5));
  CHECK_THROWS_AS(ssim_node(tp, a, b), ValidationError);
  CHECK_THROWS_AS(l2_node(tp, a, b), ValidationError);
}

TEST_CASE("l2 of a constant offset is the squared offset") {
  Rng rng(405);
  const Tensor t = rand_tensor(rng, 12, 18, 0.0, 0.8);
  Tensor p = t;
  for (double& x : p.v) x += 0.1;
  Tape tp;
  const double mean_l2 = tp.val(l2_node(tp, tp.constant(p), tp.constant(t)))[0];
  CHECK(mean_l2 == doctest::Approx(0.01).epsilon(1e-12));

  const double sum_l2 = tp.val(l2_node(tp, tp.constant(p), tp.constant(t), true))[0];
  CHECK(sum_l2 == doctest::Approx(mean_l2 * (12.0 * 18.0)).epsilon(1e-14));
}

TEST_CASE("l2 gradient matches 2(pred-target)/n") {
  Rng rng(406);
  const int r = 7, c = 9;
  const Tensor t = rand_tensor(rng, r, c, 0.0, 1.0);
  const Tensor p = rand_tensor(rng, r, c, 0.0, 1.0);
  Tape tp;
  Var pv = tp.leaf(p, true);
  Var loss = l2_node(tp, pv, tp.constant(t));
  tp.backward(loss);
  const std::vector<double>& g = tp.grad(pv);
  const double n = static_cast<double>(r) * c;
  for (size_t i = 0; i < g.size(); ++i)
    CHECK(g[i] == doctest::Approx(2.0 * (p.v[i] - t.v[i]) / n).epsilon(1e-12));
}

TEST_CASE("tv_mean hand case: value 0.5, gradients +-0.25") {
  Tensor x(2, 2);
  x.v = {0.0, 1.0, 0.0, 1.0};
  Tape tp;
  Var xv = tp.leaf(x, true);
  Var tv = tp.tv_mean(xv);
  CHECK(tp.val(tv)[0] == 0.5);
  tp.backward(tv);
  const std::vector<double>& g = tp.grad(xv);
  CHECK(g[0] == -0.25);
  CHECK(g[1] == 0.25);
  CHECK(g[2] == -0.25);
  CHECK(g[3] == 0.25);
}

TEST_CASE("tv_mean is positively homogeneous; exact for power-of-two scales") {
  Rng rng(407);
  const Tensor x = rand_tensor(rng, 9, 11, -1.0, 1.0);
  Tensor x2 = x, xm2 = x;
  for (double& v : x2.v) v *= 2.0;
  for (double& v : xm2.v) v *= -2.0;
  Tape tp;
  const double tv1 = tp.val(tp.tv_mean(tp.constant(x)))[0];
  const double tv2 = tp.val(tp.tv_mean(tp.constant(x2)))[0];
  const double tvm = tp.val(tp.tv_mean(tp.constant(xm2)))[0];
  CHECK(tv2 == 2.0 * tv1);
  CHECK(tvm == 2.0 * tv1);

  const double tvc = tp.val(tp.tv_mean(tp.constant(Tensor(8, 8, 0.3))))[0];
  CHECK(tvc == 0.0);
}

TEST_CASE("total loss composes its reported terms") {
  Rng rng(408);
  const Tensor pred = rand_tensor(rng, 16, 16, 0.1, 0.9);
  const Tensor target = rand_tensor(rng, 16, 16, 0.1, 0.9);
  const Tensor field = rand_tensor(rng, 16, 16, 0.0, 1.0);
  LossWeights w;  // lambda 0.5, epsilon_tv 1e-4
  Tape tp;
  LossTerms lt = total_loss_node(tp, tp.constant(pred), tp.constant(target),
                                 tp.constant(field), w);
  const double total = tp.val(lt.total)[0];
  const double s = tp.val(lt.ssim)[0];
  const double l2 = tp.val(lt.l2)[0];
  const double tv = tp.val(lt.tv)[0];
  CHECK(total ==
        doctest::Approx(w.lambda * (1.0 - s) + (1.0 - w.lambda) * l2 + w.epsilon_tv * tv)
            .epsilon(1e-12));
}

TEST_CASE("perfect prediction of a constant field gives exactly zero loss") {
  Rng rng(409);
  const Tensor pred = rand_tensor(rng, 14, 14, 0.1, 0.9);
  const Tensor field(20, 20, 0.7);
  LossWeights w;
  Tape tp;
  LossTerms lt =
      total_loss_node(tp, tp.constant(pred), tp.constant(pred), tp.constant(field), w);
  CHECK(tp.val(lt.total)[0] == 0.0);
  CHECK(tp.val(lt.ssim)[0] == 1.0);
  CHECK(tp.val(lt.l2)[0] == 0.0);
  CHECK(tp.val(lt.tv)[0] == 0.0);
}

TEST_CASE("lambda endpoints reduce the total to a single term") {
  Rng rng(410);
  const Tensor pred = rand_tensor(rng, 16, 16, 0.1, 0.9);
  const Tensor target = rand_tensor(rng, 16, 16, 0.1, 0.9);
  const Tensor field = rand_tensor(rng, 16, 16, 0.0, 1.0);
  Tape tp;

  LossWeights w0;
  w0.lambda = 0.0;
  w0.epsilon_tv = 0.0;
  LossTerms a =
      total_loss_node(tp, tp.constant(pred), tp.constant(target), tp.constant(field), w0);
  CHECK(tp.val(a.total)[0] == tp.val(a.l2)[0]);

  LossWeights w1;
  w1.lambda = 1.0;
  w1.epsilon_tv = 0.0;
  LossTerms b =
      total_loss_node(tp, tp.constant(pred), tp.constant(target), tp.constant(field), w1);
  CHECK(tp.val(b.total)[0] == 1.0 - tp.val(b.ssim)[0]);
}

TEST_CASE("loss weights are validated") {
  LossWeights w;
  w.lambda = -0.1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w.lambda = 1.1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w.lambda = 0.5;
  w.epsilon_tv = -1e-9;
  CHECK_THROWS_AS(w.validate(), ValidationError);
}

TEST_CASE("adam leaves parameters untouched on zero or missing gradients") {
  Tensor p(3, 2);
  p.v = {0.1, -0.2, 0.3, -0.4, 0.5, -0.6};
  const std::vector<double> before = p.v;
  Adam opt({&p}, 0.05);

  const std::vector<double> zeros(p.v.size(), 0.0);
  opt.step({&zeros});
  CHECK(p.v == before);

  opt.step({nullptr});
  CHECK(p.v == before);

  const std::vector<double> empty;
  opt.step({&empty});
  CHECK(p.v == before);
  CHECK(opt.timestep() == 3);
}

TEST_CASE("adam first step moves each weight by about -lr * sign(grad)") {
  Tensor p(1, 3);
  p.v = {0.3, -0.1, 2.0};
  const double lr = 0.01;
  Adam opt({&p}, lr);
  const std::vector<double> g = {0.5, -2.0, 0.0};
  opt.step({&g});
  CHECK(p.v[0] == doctest::Approx(0.3 - lr).epsilon(1e-7));
  CHECK(p.v[1] == doctest::Approx(-0.1 + lr).epsilon(1e-7));
  CHECK(p.v[2] == 2.0);
}

TEST_CASE("adam drives the quadratic bowl toward zero") {
  // f(x) = x^2 from x = 1 with lr = 0.01: 200 steps land within 0.05.
  Tensor x(1, 1, 1.0);
  Adam opt({&x}, 0.01);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> g = {2.0 * x.v[0]};
    opt.step({&g});
  }
  CHECK(std::abs(x.v[0]) < 0.05);
}

TEST_CASE("adam validates its inputs") {
  Tensor p(2, 2, 0.0);
  CHECK_THROWS_AS(Adam({&p}, 0.0), ValidationError);
  CHECK_THROWS_AS(Adam({&p}, -1.0), ValidationError);

  Adam opt({&p}, 0.01);
  CHECK_THROWS_AS(opt.step({}), ValidationError);
  const std::vector<double> wrong(3, 0.0);
  CHECK_THROWS_AS(opt.step({&wrong}), ValidationError);
}

TEST_CASE("train rejects bad configuration and targets") {
  Rng rng(411);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.1, 0.9);
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);
  InrModel model = InrModel::init(small_grid(), 1);

  TrainConfig cfg = TrainConfig::for_target(target);
  cfg.iterations = 1;

  TrainConfig bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(train(model, target, kernel, bad), ValidationError);

  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(model, target, kernel, bad), ValidationError);

  bad = cfg;
  bad.sampling.rows = 23;  // geometry no longer matches the target
  CHECK_THROWS_AS(train(model, target, kernel, bad), ValidationError);

  bad = cfg;
  bad.sampling.dx_mm = 0.11;
  CHECK_THROWS_AS(train(model, target, kernel, bad), ValidationError);

  // Kernel built at the wrong spacing for the fine grid.
  const PsfKernel coarse = build_kernel(psf, 0.04, 0.04);
  CHECK_THROWS_AS(train(model, target, coarse, cfg), ValidationError);

  Image2D out_of_range = target;
  out_of_range.v[5] = 1.5;
  CHECK_THROWS_AS(train(model, out_of_range, kernel, cfg), ValidationError);
}

TEST_CASE("train records one consistent history entry per iteration") {
  Rng rng(412);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.2, 0.8);
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);
  InrModel model = varied_model(small_grid(), 7);

  TrainConfig cfg = TrainConfig::for_target(target);
  cfg.iterations = 12;
  int calls = 0;
  const TrainReport rep = train(model, target, kernel, cfg,
                                [&](int it, const IterRecord& r) {
                                  CHECK(it == calls);
                                  CHECK(std::isfinite(r.total));
                                  ++calls;
                                });
  CHECK(rep.history.size() == 12);
  CHECK(calls == 12);
  CHECK(rep.wall_seconds >= 0.0);
  for (const IterRecord& r : rep.history) {
    CHECK(std::isfinite(r.total));
    CHECK(r.total ==
          doctest::Approx(0.5 * (1.0 - r.ssim) + 0.5 * r.l2 + 1e-4 * r.tv).epsilon(1e-9));
  }
}

TEST_CASE("train is deterministic for a fixed seed and sensitive to it") {
  Rng rng(413);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.2, 0.8);
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);

  TrainConfig cfg = TrainConfig::for_target(target);
  cfg.iterations = 8;
  cfg.seed = 42;

  InrModel m1 = varied_model(small_grid(), 21);
  InrModel m2 = varied_model(small_grid(), 21);
  const TrainReport r1 = train(m1, target, kernel, cfg);
  const TrainReport r2 = train(m2, target, kernel, cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].total == r2.history[i].total);
    CHECK(r1.history[i].ssim == r2.history[i].ssim);
    CHECK(r1.history[i].l2 == r2.history[i].l2);
    CHECK(r1.history[i].tv == r2.history[i].tv);
  }
  REQUIRE(m1.tables.size() == m2.tables.size());
  for (size_t l = 0; l < m1.tables.size(); ++l) CHECK(m1.tables[l].v == m2.tables[l].v);
  CHECK(m1.w1.v == m2.w1.v);
  CHECK(m1.w3.v == m2.w3.v);

  InrModel m3 = varied_model(small_grid(), 21);
  TrainConfig other = cfg;
  other.seed = 43;
  const TrainReport r3 = train(m3, target, kernel, other);
  bool any_diff = false;
  for (size_t i = 0; i < r3.history.size(); ++i)
    if (r3.history[i].total != r1.history[i].total) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("train holds a self-consistent target near zero loss") {
  // Render the target from the model itself, then keep training: the model
  // starts at the optimum, so the loss must stay tiny throughout.
  const HashGridConfig gc = small_grid();
  InrModel model = varied_model(gc, 33);
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);

  SamplingSpec spec;
  spec.rows = 24;
  spec.cols = 24;
  spec.dx_mm = 0.08;
  spec.dz_mm = 0.08;
  spec.oversample = 1;
  spec.jitter = false;
  Rng rng(1);
  const Image2D field = sample_grid(model, spec, rng);
  const Image2D target = render::bmode(field, kernel, 60.0);

  TrainConfig cfg = TrainConfig::for_target(target, 1, true);
  cfg.iterations = 100;
  cfg.seed = 9;
  // moderate step size: at the default 0.01 Adam's bias-corrected first
  // steps briefly overshoot before settling back to the optimum
  cfg.learning_rate = 1e-3;
  const TrainReport rep = train(model, target, kernel, cfg);
  REQUIRE(rep.history.size() == 100);
  for (const IterRecord& r : rep.history) CHECK(r.total < 1e-3);
}

TEST_CASE("train fits a smooth target exactly through a delta kernel") {
  // Identity PSF, pure L2, no TV: the INR should drive the mean squared
  // error below 1e-4 on a 32x32 smooth target.
  const int n = 32;
  Image2D target(n, n, 0.1, 0.1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      target.at(i, j) = 0.55 + 0.25 * std::sin(2.0 * M_PI * j / n) * std::cos(2.0 * M_PI * i / n);

  PsfKernel delta;
  delta.values = Tensor(1, 1, 1.0);
  delta.dx_mm = 0.1;
  delta.dz_mm = 0.1;

  HashGridConfig gc;
  gc.levels = 6;
  gc.features = 2;
  gc.table_size = 1 << 12;
  gc.base_resolution = 4;
  gc.max_resolution = 32;
  InrModel model = InrModel::init(gc, 3);

  TrainConfig cfg = TrainConfig::for_target(target, 1, false);
  cfg.iterations = 600;
  cfg.loss.lambda = 0.0;
  cfg.loss.epsilon_tv = 0.0;
  const TrainReport rep = train(model, target, delta, cfg);
  CHECK(rep.history.back().l2 < 1e-4);
  CHECK(rep.history.back().total == rep.history.back().l2);
}

TEST_CASE("train makes clear progress through the full physics chain") {
  Rng rng(414);
  // Speckle-like target with a bright band, rendered range respected.
  Image2D target(24, 24, 0.08, 0.08);
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 24; ++j) {
      double v = 0.3 + 0.2 * rng.uniform();
      if (i >= 10 && i < 14) v += 0.35;
      target.at(i, j) = v;
    }
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);
  InrModel model = InrModel::init(small_grid(), 11);

  TrainConfig cfg = TrainConfig::for_target(target);
  cfg.iterations = 150;
  const TrainReport rep = train(model, target, kernel, cfg);
  CHECK(rep.history.back().total < 0.7 * rep.history.front().total);
}

TEST_CASE("train aborts with a numeric error when the loss explodes") {
  Rng rng(415);
  const Image2D target = rand_image(rng, 20, 20, 0.08, 0.08, 0.2, 0.8);
  PsfParams psf;
  psf.n_cycles = 2;
  const PsfKernel kernel = build_kernel(psf, 0.08, 0.08);
  InrModel model = varied_model(small_grid(), 5);

  TrainConfig cfg = TrainConfig::for_target(target);
  cfg.iterations = 10;
  cfg.learning_rate = 1e200;  // guarantees overflow on the next forward pass
  CHECK_THROWS_AS(train(model, target, kernel, cfg), NumericError);
}

TEST_CASE("grid search defaults enumerate the 7x5 candidate table") {
  const GridSearchConfig cfg = GridSearchConfig::defaults();
  REQUIRE(cfg.f_numbers.size() == 7);
  REQUIRE(cfg.cycle_counts.size() == 5);
  for (int i = 0; i < 7; ++i) CHECK(cfg.f_numbers[i] == doctest::Approx(1.0 + 0.5 * i));
  for (int c = 1; c <= 5; ++c) CHECK(cfg.cycle_counts[c - 1] == c);
  CHECK(cfg.short_iters == 500);
  CHECK(cfg.grid.levels == 6);
  CHECK(cfg.grid.table_size == (1 << 12));
  CHECK(cfg.grid.base_resolution == 8);
  CHECK(cfg.grid.max_resolution == 64);
}

TEST_CASE("grid search validation rejects empty ranges") {
  GridSearchConfig cfg = GridSearchConfig::defaults();
  cfg.f_numbers.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = GridSearchConfig::defaults();
  cfg.cycle_counts.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = GridSearchConfig::defaults();
  cfg.short_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

namespace {

GridSearchConfig tiny_search() {
  GridSearchConfig cfg;
  cfg.f_numbers = {1.5, 2.0};
  cfg.cycle_counts = {1, 2};
  cfg.short_iters = 3;
  cfg.grid.levels = 2;
  cfg.grid.features = 1;
  cfg.grid.table_size = 256;
  cfg.grid.base_resolution = 4;
  cfg.grid.max_resolution = 8;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("grid search walks candidates f-number-major and picks the argmin") {
  Rng rng(416);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.2, 0.8);
  PsfParams base;

  const GridSearchConfig cfg = tiny_search();
  std::vector<std::size_t> seen;
  const GridSearchResult res = psf_grid_search(target, base, cfg,
                                               [&](std::size_t i, const GridCandidate& c) {
                                                 CHECK(std::isfinite(c.score));
                                                 seen.push_back(i);
                                               });
  REQUIRE(res.table.size() == 4);
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(res.table[0].f_number == 1.5);
  CHECK(res.table[0].n_cycles == 1);
  CHECK(res.table[1].f_number == 1.5);
  CHECK(res.table[1].n_cycles == 2);
  CHECK(res.table[2].f_number == 2.0);
  CHECK(res.table[2].n_cycles == 1);
  CHECK(res.table[3].f_number == 2.0);
  CHECK(res.table[3].n_cycles == 2);

  std::size_t argmin = 0;
  for (std::size_t i = 1; i < res.table.size(); ++i)
    if (res.table[i].score < res.table[argmin].score) argmin = i;
  CHECK(res.best_index == argmin);
  CHECK(res.best.f_number == res.table[argmin].f_number);
  CHECK(res.best.n_cycles == res.table[argmin].n_cycles);
  // Untouched fields come from the base parameter set.
  CHECK(res.best.f_c_mhz == base.f_c_mhz);
  CHECK(res.best.focal_mm == base.focal_mm);
}

TEST_CASE("grid search with one candidate returns that candidate") {
  Rng rng(417);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.2, 0.8);
  GridSearchConfig cfg = tiny_search();
  cfg.f_numbers = {2.0};
  cfg.cycle_counts = {2};
  const GridSearchResult res = psf_grid_search(target, PsfParams{}, cfg);
  REQUIRE(res.table.size() == 1);
  CHECK(res.best_index == 0);
  CHECK(res.best.f_number == 2.0);
  CHECK(res.best.n_cycles == 2);
  CHECK(std::isfinite(res.table[0].score));
  CHECK(res.table[0].score >= 0.0);
}

TEST_CASE("grid search is deterministic for a fixed seed") {
  Rng rng(418);
  const Image2D target = rand_image(rng, 24, 24, 0.08, 0.08, 0.2, 0.8);
  const GridSearchConfig cfg = tiny_search();
  const GridSearchResult a = psf_grid_search(target, PsfParams{}, cfg);
  const GridSearchResult b = psf_grid_search(target, PsfParams{}, cfg);
  REQUIRE(a.table.size() == b.table.size());
  for (size_t i = 0; i < a.table.size(); ++i) CHECK(a.table[i].score == b.table[i].score);
  CHECK(a.best_index == b.best_index);
}

TEST_CASE("history csv round-trips every record through 17 digits") {
  TrainReport rep;
  rep.history.push_back({0.123456789012345678, 0.9, 1e-300, 3.0});
  rep.history.push_back({2.0 / 3.0, -0.25, 1.5e17, 0.0});

  const auto dir = fresh_dir("echomap_optim_csv");
  const std::string path = (dir / "hist.csv").string();
  write_history_csv(path, rep);

  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "iteration,total,ssim,l2,tv");
  for (size_t i = 0; i < rep.history.size(); ++i) {
    const std::string& row = lines[i + 1];
    char* end = nullptr;
    const char* s = row.c_str();
    CHECK(std::strtoul(s, &end, 10) == i);
    REQUIRE(*end == ',');
    const double total = std::strtod(end + 1, &end);
    REQUIRE(*end == ',');
    const double ssim = std::strtod(end + 1, &end);
    REQUIRE(*end == ',');
    const double l2 = std::strtod(end + 1, &end);
    REQUIRE(*end == ',');
    const double tv = std::strtod(end + 1, &end);
    CHECK(*end == '\0');
    CHECK(total == rep.history[i].total);
    CHECK(ssim == rep.history[i].ssim);
    CHECK(l2 == rep.history[i].l2);
    CHECK(tv == rep.history[i].tv);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("scores csv lists the candidate table in order") {
  GridSearchResult res;
  res.table.push_back({2.0, 1, 0.25});
  res.table.push_back({2.5, 3, 1.0 / 3.0});

  const auto dir = fresh_dir("echomap_optim_scores");
  const std::string path = (dir / "scores.csv").string();
  write_scores_csv(path, res);

  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "f_number,n_cycles,score");
  CHECK(lines[1] == "2,1,0.25");
  char* end = nullptr;
  CHECK(std::strtod(lines[2].c_str(), &end) == 2.5);
  REQUIRE(*end == ',');
  CHECK(std::strtol(end + 1, &end, 10) == 3);
  REQUIRE(*end == ',');
  CHECK(std::strtod(end + 1, &end) == 1.0 / 3.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv writers report unwritable paths") {
  TrainReport rep;
  CHECK_THROWS_AS(write_history_csv("/nonexistent_dir_echomap/h.csv", rep), ValidationError);
  GridSearchResult res;
  CHECK_THROWS_AS(write_scores_csv("/nonexistent_dir_echomap/s.csv", res), ValidationError);
}
