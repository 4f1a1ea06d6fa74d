#include "echomap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <tuple>

#include "echomap/error.hpp"
#include "echomap/optim.hpp"
#include "echomap/tape.hpp"

namespace echomap {

double psnr(const Image2D& a, const Image2D& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ValidationError("psnr: shape mismatch");
  for (double x : a.v)
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("psnr: first image not in [0,1]");
  for (double x : b.v)
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("psnr: second image not in [0,1]");
  double mse = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.v.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim_metric(const Image2D& a, const Image2D& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ValidationError("ssim: shape mismatch");
  Tape tape;
  Var va = tape.constant(a.tensor());
  Var vb = tape.constant(b.tensor());
  return tape.val(ssim_node(tape, va, vb))[0];
}

namespace {

using Pt = std::pair<double, double>;

double dist2(const Pt& a, const Pt& b) {
  const double dx = a.first - b.first, dz = a.second - b.second;
  return dx * dx + dz * dz;
}

bool contains(const Circle& c, const Pt& p) {
  const double d2 = (p.first - c.x) * (p.first - c.x) + (p.second - c.z) * (p.second - c.z);
  return d2 <= c.r * c.r + 1e-12 * std::max(1.0, c.r * c.r);
}

Circle from_two(const Pt& a, const Pt& b) {
  Circle c;
  c.x = 0.5 * (a.first + b.first);
  c.z = 0.5 * (a.second + b.second);
  c.r = 0.5 * std::sqrt(dist2(a, b));
  return c;
}

Circle from_three(const Pt& a, const Pt& b, const Pt& c3) {
  const double ax = a.first, az = a.second;
  const double bx = b.first, bz = b.second;
  const double cx = c3.first, cz = c3.second;
  const double d = 2.0 * (ax * (bz - cz) + bx * (cz - az) + cx * (az - bz));
  if (std::abs(d) < 1e-14) {
    // collinear: the diameter of the farthest pair encloses all three
    Circle ab = from_two(a, b), ac = from_two(a, c3), bc = from_two(b, c3);
    Circle best = ab;
    if (ac.r > best.r) best = ac;
    if (bc.r > best.r) best = bc;
    return best;
  }
  const double a2 = ax * ax + az * az, b2 = bx * bx + bz * bz, c2 = cx * cx + cz * cz;
  Circle out;
  out.x = (a2 * (bz - cz) + b2 * (cz - az) + c2 * (az - bz)) / d;
  out.z = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
  out.r = std::sqrt((ax - out.x) * (ax - out.x) + (az - out.z) * (az - out.z));
  return out;
}

}  // namespace

Circle min_enclosing_circle(std::vector<Pt> pts) {
  if (pts.empty()) throw ValidationError("mec: empty point set");
  std::mt19937_64 shuffle_rng(0x1d3a94f00dcafeULL);
  std::shuffle(pts.begin(), pts.end(), shuffle_rng);
  const size_t n = pts.size();
  Circle c{pts[0].first, pts[0].second, 0.0};
  for (size_t i = 1; i < n; ++i) {
    if (contains(c, pts[i])) continue;
    c = Circle{pts[i].first, pts[i].second, 0.0};
    for (size_t j = 0; j < i; ++j) {
      if (contains(c, pts[j])) continue;
      c = from_two(pts[i], pts[j]);
      for (size_t k = 0; k < j; ++k) {
        if (contains(c, pts[k])) continue;
        c = from_three(pts[i], pts[j], pts[k]);
      }
    }
  }
  return c;
}

WireReport wire_clusters(const Image2D& img, double threshold_frac, int min_pixels) {
  if (!(threshold_frac > 0.0 && threshold_frac <= 1.0))
    throw ValidationError("wire_clusters: threshold fraction must be in (0,1]");
  if (min_pixels < 1) throw ValidationError("wire_clusters: min_pixels must be >= 1");
  for (double x : img.v)
    if (!(x >= 0.0)) throw ValidationError("wire_clusters: image has a negative pixel");

  WireReport report;
  double max_v = 0.0;
  for (double x : img.v) max_v = std::max(max_v, x);
  if (max_v <= 0.0) return report;
  const double thr = threshold_frac * max_v;

  const int H = img.rows, W = img.cols;
  std::vector<char> seen(static_cast<size_t>(H) * W, 0);
  std::vector<int> stack;
  std::vector<std::pair<int, int>> members;
  for (int i0 = 0; i0 < H; ++i0)
    for (int j0 = 0; j0 < W; ++j0) {
      const size_t p0 = static_cast<size_t>(i0) * W + j0;
      if (seen[p0] || !(img.v[p0] > thr)) continue;
      members.clear();
      stack.assign(1, static_cast<int>(p0));
      seen[p0] = 1;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int i = p / W, j = p % W;
        members.emplace_back(i, j);
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) continue;
            const int ni = i + di, nj = j + dj;
            if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
            const size_t q = static_cast<size_t>(ni) * W + nj;
            if (!seen[q] && img.v[q] > thr) {
              seen[q] = 1;
              stack.push_back(static_cast<int>(q));
            }
          }
      }
      if (static_cast<int>(members.size()) < min_pixels) continue;
      std::vector<Pt> pts;
      pts.reserve(members.size());
      for (auto [i, j] : members)
        pts.emplace_back((j + 0.5) * img.dx_mm, (i + 0.5) * img.dz_mm);
      const Circle c = min_enclosing_circle(std::move(pts));
      report.clusters.push_back({c.x, c.z, c.r, static_cast<int>(members.size())});
    }

  if (!report.clusters.empty()) {
    double mean = 0.0;
    for (const Cluster& c : report.clusters) mean += c.radius_mm;
    mean /= static_cast<double>(report.clusters.size());
    double var = 0.0;
    for (const Cluster& c : report.clusters)
      var += (c.radius_mm - mean) * (c.radius_mm - mean);
    var /= static_cast<double>(report.clusters.size());
    report.mean_radius_mm = mean;
    report.radius_std_mm = std::sqrt(var);
  }
  return report;
}

MatchResult match_wires(const WireReport& report, const PhantomSpec& spec, double tol_mm) {
  if (spec.wires.empty()) throw ValidationError("match_wires: spec contains no wires");
  if (!(tol_mm > 0.0)) throw ValidationError("match_wires: tolerance must be > 0");

  struct Pair {
    double d;
    int wire, cluster;
  };
  std::vector<Pair> pairs;
  for (int w = 0; w < static_cast<int>(spec.wires.size()); ++w)
    for (int c = 0; c < static_cast<int>(report.clusters.size()); ++c) {
      const double dx = spec.wires[static_cast<size_t>(w)].x_mm -
                        report.clusters[static_cast<size_t>(c)].x_mm;
      const double dz = spec.wires[static_cast<size_t>(w)].z_mm -
                        report.clusters[static_cast<size_t>(c)].z_mm;
      const double d = std::hypot(dx, dz);
      if (d <= tol_mm) pairs.push_back({d, w, c});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.d, a.wire, a.cluster) < std::tie(b.d, b.wire, b.cluster);
  });

  MatchResult out;
  std::vector<char> wire_used(spec.wires.size(), 0), cluster_used(report.clusters.size(), 0);
  for (const Pair& p : pairs) {
    if (wire_used[static_cast<size_t>(p.wire)] || cluster_used[static_cast<size_t>(p.cluster)])
      continue;
    wire_used[static_cast<size_t>(p.wire)] = 1;
    cluster_used[static_cast<size_t>(p.cluster)] = 1;
    out.pairs.push_back({p.wire, p.cluster});
    out.errors_mm.push_back(p.d);
  }
  out.matched = static_cast<int>(out.pairs.size());
  if (out.matched > 0) {
    double sum = 0.0;
    for (double e : out.errors_mm) sum += e;
    out.mean_error_mm = sum / out.matched;
  }
  return out;
}

}  // namespace echomap
