#include "echomap/cli.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "echomap/error.hpp"
#include "echomap/eval.hpp"
#include "echomap/inr.hpp"
#include "echomap/io.hpp"
#include "echomap/optim.hpp"
#include "echomap/phantom.hpp"
#include "echomap/psf.hpp"
#include "echomap/render.hpp"
#include "echomap/rl.hpp"
#include "echomap/rng.hpp"

namespace echomap {

namespace {

void need(const CLI::Option* opt, const char* name) {
  if (!opt->count()) throw ValidationError(std::string("missing required option ") + name);
}

// Replayable runs: absent --seed draws one from the OS and logs it.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t given) {
  if (opt->count()) return given;
  std::random_device rd;
  const std::uint64_t s =
      (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
  std::fprintf(stderr, "seed = %" PRIu64 " (use --seed to replay)\n", s);
  return s;
}

// "a:b:step" (step optional, default 1), inclusive of b up to rounding slack
std::vector<double> parse_range(const std::string& text, const std::string& what) {
  double start = 0.0, stop = 0.0, step = 1.0;
  const size_t c1 = text.find(':');
  if (c1 == std::string::npos) {
    start = stop = parse_double(text, what);
  } else {
    start = parse_double(text.substr(0, c1), what);
    const size_t c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos) {
      stop = parse_double(text.substr(c1 + 1), what);
    } else {
      stop = parse_double(text.substr(c1 + 1, c2 - c1 - 1), what);
      step = parse_double(text.substr(c2 + 1), what);
    }
  }
  if (!(step > 0.0)) throw ValidationError(what + ": step must be > 0");
  if (stop < start) throw ValidationError(what + ": empty range " + text);
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (int i = 0; i < n; ++i) out.push_back(start + i * step);
  return out;
}

Image2D decompress(const Image2D& b, double dr_db) {
  Image2D e = b;
  for (double& v : e.v) v = std::pow(10.0, (v - 1.0) * dr_db / 20.0);
  return e;
}

Image2D clamp01(const Image2D& img) {
  Image2D out = img;
  for (double& v : out.v) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

void preview_pgm(const std::string& path, const Image2D& img) {
  double max_v = 0.0;
  for (double v : img.v) max_v = std::max(max_v, v);
  Image2D norm = img;
  if (max_v > 1.0)
    for (double& v : norm.v) v /= max_v;
  write_pgm(path, norm);
}

struct PhantomGenArgs {
  std::string spec_path, out, preview;
};

void cmd_phantom_gen(const PhantomGenArgs& a) {
  const PhantomSpec spec = load_phantom_spec(a.spec_path);
  Rng rng(spec.seed);
  const Image2D img = rasterize(spec, rng);
  write_pfm(a.out, img);
  write_meta(a.out, img,
             {{"seed", std::to_string(spec.seed)},
              {"wires", std::to_string(spec.wires.size())},
              {"inclusions", std::to_string(spec.inclusions.size())}});
  if (!a.preview.empty()) preview_pgm(a.preview, img);
  std::printf("wrote %s (%dx%d, %zu wires, %zu inclusions, seed %" PRIu64 ")\n", a.out.c_str(),
              img.rows, img.cols, spec.wires.size(), spec.inclusions.size(), spec.seed);
}

struct RenderArgs {
  std::string echo, psf_path, out, preview;
  double noise_sigma = 0.0;
  double dr_db = 60.0;
  double freq_mhz = 0.0;  // 0 = keep the config's center frequency
  double dx = 0.0, dz = 0.0;
  std::uint64_t seed = 1;
  const CLI::Option* seed_opt = nullptr;
};

void cmd_render(const RenderArgs& a) {
  const Image2D s = read_pfm(a.echo, a.dx, a.dz);
  PsfParams p = a.psf_path.empty() ? PsfParams{} : load_psf_params(a.psf_path);
  if (a.freq_mhz > 0.0) p.f_c_mhz = a.freq_mhz;
  p.validate();
  const PsfKernel k = build_kernel(p, s.dx_mm, s.dz_mm);
  Image2D e = render::convolve_psf(s, k);
  if (a.noise_sigma > 0.0) {
    Rng rng(resolve_seed(a.seed_opt, a.seed));
    e = render::add_noise(e, a.noise_sigma, rng);
  }
  const Image2D b = render::log_compress(e, a.dr_db);
  write_pfm(a.out, b);
  char drbuf[32];
  std::snprintf(drbuf, sizeof drbuf, "%.17g", a.dr_db);
  write_meta(a.out, b, {{"dr_db", drbuf}});
  if (!a.preview.empty()) preview_pgm(a.preview, b);
  std::printf("wrote %s (%dx%d, %.3g MHz, f/%.3g, %d cycles, DR %g dB)\n", a.out.c_str(), b.rows,
              b.cols, p.f_c_mhz, p.f_number, p.n_cycles, a.dr_db);
}

struct DeconvRlArgs {
  std::string in, psf_path, out;
  int iters = 30;
  double eps = 1e-9;
  double stop_tol = 0.0;
  bool linear = false;
  double dr_db = 60.0;
  double dx = 0.0, dz = 0.0;
};

void cmd_deconv_rl(const DeconvRlArgs& a) {
  Image2D d = read_pfm(a.in, a.dx, a.dz);
  const PsfParams p = load_psf_params(a.psf_path);
  const PsfKernel k = build_kernel(p, d.dx_mm, d.dz_mm);
  if (a.linear) d = decompress(d, a.dr_db);
  RlConfig cfg;
  cfg.iterations = a.iters;
  cfg.eps = a.eps;
  cfg.stop_tol = a.stop_tol;
  const Image2D f = rl_deconvolve(d, k, cfg);
  write_pfm(a.out, f);
  write_meta(a.out, f);
  std::printf("wrote %s (%d iterations, residual %.6g)\n", a.out.c_str(), cfg.iterations,
              rl_residual(d, k, f));
}

struct DeconvInrArgs {
  std::string target, psf_path, out, checkpoint, history;
  int iterations = 5000;
  double lr = 0.01;
  double lambda = 0.5;
  double tv = 1e-4;
  bool l2_sum = false;
  double dr_db = 60.0;
  int oversample = 1;
  bool no_jitter = false;
  int levels = 15;
  int features = 1;
  int table_log2 = 18;
  int base_res = 16;
  int max_res = 0;  // 0 = max(rows, cols)
  int log_every = 0;
  std::uint64_t seed = 1;
  const CLI::Option* seed_opt = nullptr;
  double dx = 0.0, dz = 0.0;
};

void cmd_deconv_inr(const DeconvInrArgs& a) {
  const Image2D target = read_pfm(a.target, a.dx, a.dz);
  const PsfParams p = load_psf_params(a.psf_path);

  HashGridConfig gcfg;
  gcfg.levels = a.levels;
  gcfg.features = a.features;
  if (a.table_log2 < 1 || a.table_log2 > 30)
    throw ValidationError("deconv inr: --table-log2 must be in [1,30]");
  gcfg.table_size = 1 << a.table_log2;
  gcfg.base_resolution = a.base_res;
  gcfg.max_resolution = a.max_res > 0 ? a.max_res : std::max(target.rows, target.cols);
  gcfg.validate();

  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed);
  TrainConfig tc = TrainConfig::for_target(target, a.oversample, !a.no_jitter);
  tc.iterations = a.iterations;
  tc.learning_rate = a.lr;
  tc.loss.lambda = a.lambda;
  tc.loss.epsilon_tv = a.tv;
  tc.loss.l2_sum = a.l2_sum;
  tc.dynamic_range = a.dr_db;
  tc.seed = Rng::splitmix64(seed + 1);

  const PsfKernel k = build_kernel(p, tc.sampling.fine_dx(), tc.sampling.fine_dz());
  InrModel model = InrModel::init(gcfg, Rng::splitmix64(seed));

  TrainLogFn log;
  if (a.log_every > 0) {
    const int every = a.log_every, total = a.iterations;
    log = [every, total](int it, const IterRecord& r) {
      if ((it + 1) % every == 0 || it + 1 == total)
        std::fprintf(stderr, "iter %d/%d  loss %.6g  ssim %.4f  l2 %.4g  tv %.4g\n", it + 1,
                     total, r.total, r.ssim, r.l2, r.tv);
    };
  }
  const TrainReport rep = train(model, target, k, tc, log);

  SamplingSpec out_spec;
  out_spec.rows = target.rows;
  out_spec.cols = target.cols;
  out_spec.dx_mm = target.dx_mm;
  out_spec.dz_mm = target.dz_mm;
  Rng dummy(0);
  const Image2D est = sample_grid(model, out_spec, dummy);
  write_pfm(a.out, est);
  write_meta(a.out, est, {{"seed", std::to_string(seed)}});
  if (!a.checkpoint.empty()) save_checkpoint(model, a.checkpoint);
  if (!a.history.empty()) write_history_csv(a.history, rep);
  std::printf("wrote %s (%d iterations, final loss %.6g, %.1f s)\n", a.out.c_str(), a.iterations,
              rep.history.back().total, rep.wall_seconds);
}

struct GridSearchArgs {
  std::string target, psf_path, out, scores;
  std::string fnum = "1.0:4.0:0.5";
  std::string cycles = "1:5";
  int short_iters = 500;
  double dr_db = 60.0;
  std::uint64_t seed = 1;
  const CLI::Option* seed_opt = nullptr;
  double dx = 0.0, dz = 0.0;
  bool quiet = false;
};

void cmd_grid_search(const GridSearchArgs& a) {
  const Image2D target = read_pfm(a.target, a.dx, a.dz);
  const PsfParams base = a.psf_path.empty() ? PsfParams{} : load_psf_params(a.psf_path);

  GridSearchConfig cfg = GridSearchConfig::defaults();
  cfg.f_numbers = parse_range(a.fnum, "--fnum");
  cfg.cycle_counts.clear();
  for (double c : parse_range(a.cycles, "--cycles")) {
    const int ci = static_cast<int>(c);
    if (static_cast<double>(ci) != c)
      throw ValidationError("--cycles: cycle counts must be integers");
    cfg.cycle_counts.push_back(ci);
  }
  cfg.short_iters = a.short_iters;
  cfg.dynamic_range = a.dr_db;
  cfg.seed = resolve_seed(a.seed_opt, a.seed);

  const size_t total = cfg.f_numbers.size() * cfg.cycle_counts.size();
  GridLogFn progress;
  if (!a.quiet)
    progress = [total](std::size_t i, const GridCandidate& c) {
      std::fprintf(stderr, "candidate %zu/%zu  f/%.2g  %d cycles  score %.6g\n", i + 1, total,
                   c.f_number, c.n_cycles, c.score);
    };
  const GridSearchResult res = psf_grid_search(target, base, cfg, progress);

  save_psf_params(a.out, res.best);
  if (!a.scores.empty()) write_scores_csv(a.scores, res);
  std::printf("best: f_number %g, n_cycles %d (score %.6g over %zu candidates), wrote %s\n",
              res.best.f_number, res.best.n_cycles, res.table[res.best_index].score,
              res.table.size(), a.out.c_str());
}

struct EvalMetricsArgs {
  std::string pred, gt, out;
  double dr_db = 60.0;
  bool pred_linear = false;
  bool gt_linear = false;
  double dx = 0.0, dz = 0.0;
};

void cmd_eval_metrics(const EvalMetricsArgs& a) {
  Image2D pred = read_pfm(a.pred, a.dx, a.dz);
  Image2D gt = read_pfm(a.gt, a.dx, a.dz);
  // linear maps are log-compressed; display-space maps are clamped to [0,1]
  pred = a.pred_linear ? render::log_compress(pred, a.dr_db) : clamp01(pred);
  gt = a.gt_linear ? render::log_compress(gt, a.dr_db) : clamp01(gt);
  const double p = psnr(pred, gt);
  const double s = ssim_metric(pred, gt);
  std::printf("psnr_db = %.17g\nssim = %.17g\n", p, s);
  if (!a.out.empty()) {
    std::FILE* f = std::fopen(a.out.c_str(), "wb");
    if (!f) throw ValidationError("cannot open " + a.out + " for writing");
    std::fprintf(f, "pred,gt,dr_db,psnr_db,ssim\n%s,%s,%.17g,%.17g,%.17g\n", a.pred.c_str(),
                 a.gt.c_str(), a.dr_db, p, s);
    if (std::fclose(f) != 0) throw ValidationError("write to " + a.out + " failed");
  }
}

struct EvalWiresArgs {
  std::string pred, spec_path, out;
  double threshold = 0.20;
  int min_pixels = 3;
  double tol = 0.2;
  double dx = 0.0, dz = 0.0;
};

void cmd_eval_wires(const EvalWiresArgs& a) {
  const Image2D img = read_pfm(a.pred, a.dx, a.dz);
  const WireReport report = wire_clusters(img, a.threshold, a.min_pixels);
  std::printf("detected %d clusters; mean radius %.6g mm (std %.6g)\n", report.detected(),
              report.mean_radius_mm, report.radius_std_mm);
  if (!a.spec_path.empty()) {
    const PhantomSpec spec = load_phantom_spec(a.spec_path);
    const MatchResult m = match_wires(report, spec, a.tol);
    std::printf("matched %d/%zu wires; mean localization error %.6g mm\n", m.matched,
                spec.wires.size(), m.mean_error_mm);
  }
  if (!a.out.empty()) {
    std::FILE* f = std::fopen(a.out.c_str(), "wb");
    if (!f) throw ValidationError("cannot open " + a.out + " for writing");
    std::fputs("x_mm,z_mm,radius_mm,pixels\n", f);
    for (const Cluster& c : report.clusters)
      std::fprintf(f, "%.17g,%.17g,%.17g,%d\n", c.x_mm, c.z_mm, c.radius_mm, c.pixel_count);
    if (std::fclose(f) != 0) throw ValidationError("write to " + a.out + " failed");
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"echomap: tissue echogenicity recovery from B-mode ultrasound"};
  app.require_subcommand(1);

  // phantom gen
  auto* phantom = app.add_subcommand("phantom", "synthetic phantom tools");
  phantom->require_subcommand(1);
  PhantomGenArgs pg;
  auto* gen = phantom->add_subcommand("gen", "rasterize a phantom spec to a PFM map");
  gen->add_option("--spec", pg.spec_path, "phantom spec (INI)")->required();
  gen->add_option("--out", pg.out, "output echogenicity PFM")->required();
  gen->add_option("--preview", pg.preview, "optional 8-bit PGM preview");
  gen->callback([&pg] { cmd_phantom_gen(pg); });

  // render [rebeam]
  RenderArgs rn;
  auto* rend = app.add_subcommand("render", "render a B-mode image from an echogenicity map");
  auto* rn_echo = rend->add_option("--echo", rn.echo, "echogenicity map PFM");
  auto* rn_out = rend->add_option("--out", rn.out, "output B-mode PFM");
  rend->add_option("--psf", rn.psf_path, "PSF config (INI); defaults when omitted");
  rend->add_option("--noise-sigma", rn.noise_sigma, "envelope noise sigma")
      ->capture_default_str();
  rend->add_option("--dr", rn.dr_db, "dynamic range in dB")->capture_default_str();
  rn.seed_opt = rend->add_option("--seed", rn.seed, "noise RNG seed");
  rend->add_option("--dx", rn.dx, "pixel width mm (overrides sidecar)");
  rend->add_option("--dz", rn.dz, "pixel depth mm (overrides sidecar)");
  rend->add_option("--preview", rn.preview, "optional 8-bit PGM preview");

  RenderArgs rb;
  auto* rebeam = rend->add_subcommand("rebeam", "re-render at a new center frequency");
  rebeam->add_option("--echo", rb.echo, "echogenicity map PFM")->required();
  rebeam->add_option("--psf", rb.psf_path, "PSF config (INI); defaults when omitted");
  rebeam->add_option("--freq", rb.freq_mhz, "new center frequency in MHz")->required();
  rebeam->add_option("--out", rb.out, "output B-mode PFM")->required();
  rebeam->add_option("--dr", rb.dr_db, "dynamic range in dB")->capture_default_str();
  rebeam->add_option("--dx", rb.dx, "pixel width mm (overrides sidecar)");
  rebeam->add_option("--dz", rb.dz, "pixel depth mm (overrides sidecar)");
  rebeam->add_option("--preview", rb.preview, "optional 8-bit PGM preview");
  rebeam->callback([&rb] { cmd_render(rb); });
  rend->callback([&] {
    if (rebeam->parsed()) return;
    need(rn_echo, "--echo");
    need(rn_out, "--out");
    cmd_render(rn);
  });

  // deconv rl | inr
  auto* deconv = app.add_subcommand("deconv", "deconvolve a B-mode image");
  deconv->require_subcommand(1);

  DeconvRlArgs rl;
  auto* rlc = deconv->add_subcommand("rl", "Richardson-Lucy baseline");
  rlc->add_option("--in", rl.in, "B-mode PFM")->required();
  rlc->add_option("--psf", rl.psf_path, "PSF config (INI)")->required();
  rlc->add_option("--out", rl.out, "output estimate PFM")->required();
  rlc->add_option("--iters", rl.iters, "iteration count")->capture_default_str();
  rlc->add_option("--eps", rl.eps, "division guard")->capture_default_str();
  rlc->add_option("--stop-tol", rl.stop_tol, "relative-change stop (0 = fixed count)")
      ->capture_default_str();
  rlc->add_flag("--linear", rl.linear, "de-compress the input before deconvolving");
  rlc->add_option("--dr", rl.dr_db, "dynamic range for --linear")->capture_default_str();
  rlc->add_option("--dx", rl.dx, "pixel width mm (overrides sidecar)");
  rlc->add_option("--dz", rl.dz, "pixel depth mm (overrides sidecar)");
  rlc->callback([&rl] { cmd_deconv_rl(rl); });

  DeconvInrArgs di;
  auto* inr = deconv->add_subcommand("inr", "implicit-representation deconvolution");
  inr->add_option("--target", di.target, "B-mode PFM to fit")->required();
  inr->add_option("--psf", di.psf_path, "PSF config (INI)")->required();
  inr->add_option("--out", di.out, "output echogenicity PFM")->required();
  inr->add_option("--checkpoint", di.checkpoint, "model checkpoint path");
  inr->add_option("--history", di.history, "loss history CSV path");
  inr->add_option("--iterations", di.iterations, "training iterations")->capture_default_str();
  inr->add_option("--lr", di.lr, "Adam learning rate")->capture_default_str();
  inr->add_option("--lambda", di.lambda, "SSIM/L2 mix")->capture_default_str();
  inr->add_option("--tv", di.tv, "TV weight")->capture_default_str();
  inr->add_flag("--l2-sum", di.l2_sum, "literal summed L2 instead of the mean");
  inr->add_option("--dr", di.dr_db, "dynamic range in dB")->capture_default_str();
  inr->add_option("--oversample", di.oversample, "fine-grid factor")->capture_default_str();
  inr->add_flag("--no-jitter", di.no_jitter, "sample pixel centers instead of jittering");
  inr->add_option("--levels", di.levels, "hash-grid levels")->capture_default_str();
  inr->add_option("--features", di.features, "features per level")->capture_default_str();
  inr->add_option("--table-log2", di.table_log2, "log2 hash table size")->capture_default_str();
  inr->add_option("--base-res", di.base_res, "coarsest grid resolution")->capture_default_str();
  inr->add_option("--max-res", di.max_res, "finest grid resolution (0 = image size)")
      ->capture_default_str();
  inr->add_option("--log-every", di.log_every, "progress every N iterations (0 = quiet)")
      ->capture_default_str();
  di.seed_opt = inr->add_option("--seed", di.seed, "initialization/jitter seed");
  inr->add_option("--dx", di.dx, "pixel width mm (overrides sidecar)");
  inr->add_option("--dz", di.dz, "pixel depth mm (overrides sidecar)");
  inr->callback([&di] { cmd_deconv_inr(di); });

  // psf grid-search
  auto* psf = app.add_subcommand("psf", "PSF calibration tools");
  psf->require_subcommand(1);
  GridSearchArgs gs;
  auto* grid = psf->add_subcommand("grid-search", "calibrate f-number/cycles by short fits");
  grid->add_option("--target", gs.target, "B-mode PFM")->required();
  grid->add_option("--out", gs.out, "output PSF config (INI)")->required();
  grid->add_option("--psf", gs.psf_path, "base PSF config for fixed parameters");
  grid->add_option("--fnum", gs.fnum, "f-number range start:stop:step")->capture_default_str();
  grid->add_option("--cycles", gs.cycles, "cycle range start:stop[:step]")
      ->capture_default_str();
  grid->add_option("--short-iters", gs.short_iters, "iterations per candidate")
      ->capture_default_str();
  grid->add_option("--dr", gs.dr_db, "dynamic range in dB")->capture_default_str();
  grid->add_option("--scores", gs.scores, "score table CSV path");
  gs.seed_opt = grid->add_option("--seed", gs.seed, "candidate RNG seed");
  grid->add_option("--dx", gs.dx, "pixel width mm (overrides sidecar)");
  grid->add_option("--dz", gs.dz, "pixel depth mm (overrides sidecar)");
  grid->add_flag("--quiet", gs.quiet, "suppress per-candidate progress");
  grid->callback([&gs] { cmd_grid_search(gs); });

  // eval metrics | wires
  auto* ev = app.add_subcommand("eval", "evaluation reports");
  ev->require_subcommand(1);

  EvalMetricsArgs em;
  auto* metrics = ev->add_subcommand("metrics", "PSNR/SSIM between two maps");
  metrics->add_option("--pred", em.pred, "prediction PFM")->required();
  metrics->add_option("--gt", em.gt, "ground-truth PFM")->required();
  metrics->add_option("--dr", em.dr_db, "dynamic range for --*-linear inputs")
      ->capture_default_str();
  metrics->add_flag("--pred-linear", em.pred_linear,
                    "prediction is a linear map; log-compress it first");
  metrics->add_flag("--gt-linear", em.gt_linear,
                    "ground truth is a linear map; log-compress it first");
  metrics->add_option("--out", em.out, "CSV output path");
  metrics->add_option("--dx", em.dx, "pixel width mm (overrides sidecar)");
  metrics->add_option("--dz", em.dz, "pixel depth mm (overrides sidecar)");
  metrics->callback([&em] { cmd_eval_metrics(em); });

  EvalWiresArgs ew;
  auto* wires = ev->add_subcommand("wires", "threshold, cluster and size wire targets");
  wires->add_option("--pred", ew.pred, "image PFM")->required();
  wires->add_option("--spec", ew.spec_path, "phantom spec for ground-truth matching");
  wires->add_option("--threshold", ew.threshold, "fraction of the max")->capture_default_str();
  wires->add_option("--min-pixels", ew.min_pixels, "noise filter")->capture_default_str();
  wires->add_option("--tol", ew.tol, "match tolerance in mm")->capture_default_str();
  wires->add_option("--out", ew.out, "cluster CSV path");
  wires->add_option("--dx", ew.dx, "pixel width mm (overrides sidecar)");
  wires->add_option("--dz", ew.dz, "pixel depth mm (overrides sidecar)");
  wires->callback([&ew] { cmd_eval_wires(ew); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace echomap
