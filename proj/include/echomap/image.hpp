#pragma once

#include <vector>

#include "echomap/error.hpp"
#include "echomap/tensor.hpp"

namespace echomap {

// 2D scalar raster with physical pixel spacing.
// Rows run along depth (z, axial), columns along width (x, lateral).
struct Image2D {
  int rows = 0;
  int cols = 0;
  double dx_mm = 0.0;  // lateral pixel pitch
  double dz_mm = 0.0;  // axial pixel pitch
  std::vector<double> v;

  Image2D() = default;
  Image2D(int r, int c, double dx, double dz, double fill = 0.0)
      : rows(r), cols(c), dx_mm(dx), dz_mm(dz), v(static_cast<size_t>(r) * c, fill) {}

  int size() const { return rows * cols; }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

  double width_mm() const { return cols * dx_mm; }
  double depth_mm() const { return rows * dz_mm; }

  Tensor tensor() const { return Tensor::from(rows, cols, v); }
  static Image2D like(const Image2D& ref, const Tensor& t) {
    if (t.rows != ref.rows || t.cols != ref.cols)
      throw ValidationError("Image2D::like: shape mismatch " + t.shape_str());
    Image2D out(ref.rows, ref.cols, ref.dx_mm, ref.dz_mm);
    out.v = t.v;
    return out;
  }
};

}  // namespace echomap
