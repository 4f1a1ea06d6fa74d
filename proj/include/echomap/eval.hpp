#pragma once

#include <array>
#include <utility>
#include <vector>

#include "echomap/image.hpp"
#include "echomap/phantom.hpp"

namespace echomap {

// 10*log10(1/MSE) for images in [0,1]; +infinity for identical images.
double psnr(const Image2D& a, const Image2D& b);

// Same windowed SSIM as the training loss (shared implementation).
double ssim_metric(const Image2D& a, const Image2D& b);

struct Circle {
  double x = 0.0, z = 0.0, r = 0.0;
};

// Exact minimum enclosing circle, randomized incremental (expected linear).
// Deterministic: the internal shuffle is fixed-seeded.
Circle min_enclosing_circle(std::vector<std::pair<double, double>> pts);

struct Cluster {
  double x_mm = 0.0, z_mm = 0.0;  // enclosing-circle center
  double radius_mm = 0.0;
  int pixel_count = 0;
};

struct WireReport {
  std::vector<Cluster> clusters;  // discovery (row-major) order
  double mean_radius_mm = 0.0;
  double radius_std_mm = 0.0;  // population std

  int detected() const { return static_cast<int>(clusters.size()); }
};

// Threshold at threshold_frac * max(img), label 8-connected components, drop
// components under min_pixels, and fit a minimum enclosing circle to each
// component's pixel centers. All-zero image -> empty report.
WireReport wire_clusters(const Image2D& img, double threshold_frac = 0.20, int min_pixels = 3);

struct MatchResult {
  int matched = 0;
  double mean_error_mm = 0.0;             // over matched pairs
  std::vector<std::array<int, 2>> pairs;  // {wire index, cluster index}
  std::vector<double> errors_mm;          // aligned with pairs
};

// Greedy nearest-neighbor one-to-one matching of clusters to spec wires
// within tol_mm.
MatchResult match_wires(const WireReport& report, const PhantomSpec& spec, double tol_mm = 0.2);

}  // namespace echomap
