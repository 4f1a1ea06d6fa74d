#pragma once

#include <functional>
#include <vector>

#include "echomap/tape.hpp"
#include "echomap/tensor.hpp"

namespace echomap {

// Scalar-valued tensor program: rebuildable on a fresh tape from leaf vars
// handed over in the same order as the input tensors.
using TensorFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central-difference gradient verification. Compares the reverse-mode
// gradient of f at xs against (f(x+h) - f(x-h)) / 2h per coordinate and
// returns the worst relative error, |ad - fd| / max(|ad|, |fd|, 1e-6).
//
// f must be twice differentiable near xs: keep inputs clear of relu/clamp/
// tv kinks by more than h, or the finite differences straddle a corner.
double grad_check(const TensorFn& f, const std::vector<Tensor>& xs, double h = 1e-5);

}  // namespace echomap
