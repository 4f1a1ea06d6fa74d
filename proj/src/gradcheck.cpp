#include "echomap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "echomap/error.hpp"

namespace echomap {

namespace {
double eval_scalar(const TensorFn& f, const std::vector<Tensor>& xs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(xs.size());
  for (const Tensor& t : xs) vars.push_back(tape.leaf(t, false));
  Var y = f(tape, vars);
  if (tape.rows(y) != 1 || tape.cols(y) != 1)
    throw ValidationError("grad_check: f must return a scalar");
  return tape.val(y)[0];
}
}  // namespace

double grad_check(const TensorFn& f, const std::vector<Tensor>& xs, double h) {
  if (!(h > 0.0)) throw ValidationError("grad_check: h must be > 0");

  Tape tape;
  std::vector<Var> vars;
  vars.reserve(xs.size());
  for (const Tensor& t : xs) vars.push_back(tape.leaf(t, true));
  Var y = f(tape, vars);
  if (tape.rows(y) != 1 || tape.cols(y) != 1)
    throw ValidationError("grad_check: f must return a scalar");
  tape.backward(y);
  std::vector<Tensor> grads;
  grads.reserve(xs.size());
  for (Var v : vars) grads.push_back(tape.grad_tensor(v));

  double worst = 0.0;
  std::vector<Tensor> probe = xs;
  for (size_t t = 0; t < xs.size(); ++t) {
    for (int i = 0; i < xs[t].size(); ++i) {
      const double x0 = xs[t].v[static_cast<size_t>(i)];
      probe[t].v[static_cast<size_t>(i)] = x0 + h;
      const double fp = eval_scalar(f, probe);
      probe[t].v[static_cast<size_t>(i)] = x0 - h;
      const double fm = eval_scalar(f, probe);
      probe[t].v[static_cast<size_t>(i)] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grads[t].v[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

}  // namespace echomap
