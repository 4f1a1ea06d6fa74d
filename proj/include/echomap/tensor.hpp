#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "echomap/error.hpp"

namespace echomap {

// Dense row-major matrix of doubles. Vectors are 1 x n rows.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw ValidationError("Tensor: negative shape");
  }
  static Tensor row(std::initializer_list<double> xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    size_t i = 0;
    for (double x : xs) t.v[i++] = x;
    return t;
  }
  static Tensor from(int r, int c, std::vector<double> vals) {
    if (vals.size() != static_cast<size_t>(r) * c)
      throw ValidationError("Tensor::from: value count does not match shape");
    Tensor t;
    t.rows = r;
    t.cols = c;
    t.v = std::move(vals);
    return t;
  }

  int size() const { return rows * cols; }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }
};

}  // namespace echomap
