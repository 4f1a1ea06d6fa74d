#include "echomap/tape.hpp"

#include <cmath>
#include <cstdlib>

#include "echomap/error.hpp"
#include "echomap/kernels.hpp"

namespace echomap {

const std::vector<double> Tape::empty_{};

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }

void Tape::check(Var v, const char* who) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ValidationError(std::string(who) + ": invalid var id " + std::to_string(v.id));
}

int Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::ensure_grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

const std::vector<double>& Tape::grad(Var v) const {
  check(v, "grad");
  return node(v).grad.empty() ? empty_ : node(v).grad;
}

Tensor Tape::tensor_of(Var v) const {
  check(v, "tensor_of");
  const Node& n = node(v);
  return Tensor::from(n.rows, n.cols, n.val);
}

Tensor Tape::grad_tensor(Var v) const {
  check(v, "grad_tensor");
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.rows, n.cols, 0.0);
  return Tensor::from(n.rows, n.cols, n.grad);
}

void Tape::reset() { nodes_.clear(); }

std::string Tape::op_name(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) return "?";
  switch (nodes_[static_cast<size_t>(id)].op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kExp: return "exp";
    case Op::kSquare: return "square";
    case Op::kClamp: return "clamp";
    case Op::kLog10: return "log10_guarded";
    case Op::kAffine: return "affine";
    case Op::kConv2d: return "conv2d_same";
    case Op::kAvgPool: return "avg_pool";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScaleRows: return "scale_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kReshape: return "reshape";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kTvMean: return "tv_mean";
  }
  return "?";
}

int Tape::first_nonfinite() const {
  for (size_t i = 0; i < nodes_.size(); ++i)
    for (double x : nodes_[i].val)
      if (!std::isfinite(x)) return static_cast<int>(i);
  return -1;
}

Var Tape::leaf(const Tensor& t, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.rows = t.rows;
  n.cols = t.cols;
  n.val = t.v;
  n.requires_grad = requires_grad;
  return Var{push(std::move(n))};
}

// --- elementwise -------------------------------------------------------------

Var Tape::unary(Op op, Var a, double s0, double s1) {
  check(a, "unary op");
  const Node& na = node(a);
  Node n;
  n.op = op;
  n.rows = na.rows;
  n.cols = na.cols;
  n.a = a.id;
  n.s0 = s0;
  n.s1 = s1;
  n.requires_grad = na.requires_grad;
  n.val.resize(na.val.size());
  const size_t sz = na.val.size();
  const double* x = na.val.data();
  double* y = n.val.data();
  const bool par = kernels::parallel_enabled();
  switch (op) {
    case Op::kAddScalar:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] + s0;
      break;
    case Op::kMulScalar:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] * s0;
      break;
    case Op::kRelu:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Op::kSoftplus:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) {
        const double t = x[i];
        y[i] = (t > 0.0 ? t : 0.0) + std::log1p(std::exp(-std::abs(t)));
      }
      break;
    case Op::kExp:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = std::exp(x[i]);
      break;
    case Op::kSquare:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] * x[i];
      break;
    case Op::kClamp:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        y[i] = x[i] < s0 ? s0 : (x[i] > s1 ? s1 : x[i]);
      break;
    case Op::kLog10:
      for (size_t i = 0; i < sz; ++i)
        if (x[i] < 0.0)
          throw ValidationError("log10_guarded: negative input " + std::to_string(x[i]) +
                                " at flat index " + std::to_string(i));
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        y[i] = std::log10(x[i] + s0);
      break;
    default: throw ValidationError("unary: bad op");
  }
  return Var{push(std::move(n))};
}

Var Tape::binary(Op op, Var a, Var b, const char* who) {
  check(a, who);
  check(b, who);
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw ValidationError(std::string(who) + ": shape mismatch (" + std::to_string(na.rows) + "x" +
                          std::to_string(na.cols) + ") vs (" + std::to_string(nb.rows) + "x" +
                          std::to_string(nb.cols) + ")");
  Node n;
  n.op = op;
  n.rows = na.rows;
  n.cols = na.cols;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.val.resize(na.val.size());
  const size_t sz = na.val.size();
  const double* x = na.val.data();
  const double* z = nb.val.data();
  double* y = n.val.data();
  const bool par = kernels::parallel_enabled();
  switch (op) {
    case Op::kAdd:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] + z[i];
      break;
    case Op::kSub:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] - z[i];
      break;
    case Op::kMul:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] * z[i];
      break;
    case Op::kDiv:
#pragma omp parallel for schedule(static) if (par)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) y[i] = x[i] / z[i];
      break;
    default: throw ValidationError("binary: bad op");
  }
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::kAdd, a, b, "add"); }
Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b, "sub"); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b, "mul"); }
Var Tape::div(Var a, Var b) { return binary(Op::kDiv, a, b, "div"); }
Var Tape::add_scalar(Var a, double c) { return unary(Op::kAddScalar, a, c); }
Var Tape::mul_scalar(Var a, double c) { return unary(Op::kMulScalar, a, c); }
Var Tape::relu(Var a) { return unary(Op::kRelu, a); }
Var Tape::softplus(Var a) { return unary(Op::kSoftplus, a); }
Var Tape::exp(Var a) { return unary(Op::kExp, a); }
Var Tape::square(Var a) { return unary(Op::kSquare, a); }

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("clamp: lo must be < hi");
  return unary(Op::kClamp, a, lo, hi);
}

Var Tape::log10_guarded(Var a, double eps) {
  if (!(eps > 0.0)) throw ValidationError("log10_guarded: eps must be > 0");
  return unary(Op::kLog10, a, eps);
}

// --- structured ops -----------------------------------------------------------

Var Tape::affine(Var x, Var W, Var b) {
  check(x, "affine");
  check(W, "affine");
  check(b, "affine");
  const Node& nx = node(x);
  const Node& nw = node(W);
  const Node& nb = node(b);
  const int B = nx.rows, n = nx.cols, m = nw.rows;
  if (nw.cols != n)
    throw ValidationError("affine: W is (" + std::to_string(nw.rows) + "x" +
                          std::to_string(nw.cols) + ") but x has " + std::to_string(n) +
                          " columns");
  if (nb.rows != 1 || nb.cols != m)
    throw ValidationError("affine: b must be (1x" + std::to_string(m) + "), got (" +
                          std::to_string(nb.rows) + "x" + std::to_string(nb.cols) + ")");
  Node out;
  out.op = Op::kAffine;
  out.rows = B;
  out.cols = m;
  out.a = x.id;
  out.b = W.id;
  out.c = b.id;
  out.requires_grad = nx.requires_grad || nw.requires_grad || nb.requires_grad;
  out.val.resize(static_cast<size_t>(B) * m);
  kernels::linear_forward(nx.val.data(), B, n, nw.val.data(), m, nb.val.data(), out.val.data());
  return Var{push(std::move(out))};
}

Var Tape::conv2d_same(Var x, std::shared_ptr<const ConvKernel> k) {
  check(x, "conv2d_same");
  if (!k) throw ValidationError("conv2d_same: null kernel");
  const Node& nx = node(x);
  const int H = nx.rows, W = nx.cols;
  if (k->kh % 2 == 0 || k->kw % 2 == 0)
    throw ValidationError("conv2d_same: kernel dims must be odd, got (" + std::to_string(k->kh) +
                          "x" + std::to_string(k->kw) + ")");
  if (k->kh > H || k->kw > W)
    throw ValidationError("conv2d_same: kernel (" + std::to_string(k->kh) + "x" +
                          std::to_string(k->kw) + ") exceeds image (" + std::to_string(H) + "x" +
                          std::to_string(W) + ")");
  if (k->w.size() != static_cast<size_t>(k->kh) * k->kw)
    throw ValidationError("conv2d_same: kernel size does not match dims");
  const int a = k->kh / 2, b = k->kw / 2;
  Node out;
  out.op = Op::kConv2d;
  out.rows = H;
  out.cols = W;
  out.a = x.id;
  out.kernel = std::move(k);
  out.requires_grad = nx.requires_grad;
  out.val.resize(static_cast<size_t>(H) * W);
  std::vector<double> xp(static_cast<size_t>(H + 2 * a) * (W + 2 * b));
  kernels::replicate_pad(nx.val.data(), H, W, a, b, xp.data());
  kernels::conv2d_valid(xp.data(), H + 2 * a, W + 2 * b, out.kernel->w.data(), out.kernel->kh,
                        out.kernel->kw, out.val.data());
  return Var{push(std::move(out))};
}

Var Tape::avg_pool(Var x, int factor) {
  check(x, "avg_pool");
  const Node& nx = node(x);
  if (factor < 1) throw ValidationError("avg_pool: factor must be >= 1");
  if (nx.rows % factor != 0 || nx.cols % factor != 0)
    throw ValidationError("avg_pool: image (" + std::to_string(nx.rows) + "x" +
                          std::to_string(nx.cols) + ") not divisible by factor " +
                          std::to_string(factor));
  const int H = nx.rows / factor, W = nx.cols / factor;
  Node out;
  out.op = Op::kAvgPool;
  out.rows = H;
  out.cols = W;
  out.a = x.id;
  out.s0 = factor;
  out.requires_grad = nx.requires_grad;
  out.val.resize(static_cast<size_t>(H) * W);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  const double* src = nx.val.data();
  double* dst = out.val.data();
  const int Win = nx.cols;
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double s = 0.0;
      for (int r = 0; r < factor; ++r)
        for (int c = 0; c < factor; ++c)
          s += src[static_cast<size_t>(i * factor + r) * Win + (j * factor + c)];
      dst[static_cast<size_t>(i) * W + j] = s * inv;
    }
  return Var{push(std::move(out))};
}

Var Tape::gather_rows(Var table, std::vector<int> idx) {
  check(table, "gather_rows");
  const Node& nt = node(table);
  const int T = nt.rows, F = nt.cols;
  for (size_t i = 0; i < idx.size(); ++i)
    if (idx[i] < 0 || idx[i] >= T)
      throw ValidationError("gather_rows: index " + std::to_string(idx[i]) + " at position " +
                            std::to_string(i) + " out of range [0," + std::to_string(T) + ")");
  Node out;
  out.op = Op::kGatherRows;
  out.rows = static_cast<int>(idx.size());
  out.cols = F;
  out.a = table.id;
  out.requires_grad = nt.requires_grad;
  out.val.resize(idx.size() * static_cast<size_t>(F));
  const double* src = nt.val.data();
  double* dst = out.val.data();
  const bool par = kernels::parallel_enabled();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(idx.size());
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    for (int f = 0; f < F; ++f)
      dst[static_cast<size_t>(i) * F + f] = src[static_cast<size_t>(idx[i]) * F + f];
  out.idx = std::move(idx);
  return Var{push(std::move(out))};
}

Var Tape::scale_rows(Var m, Var s) {
  check(m, "scale_rows");
  check(s, "scale_rows");
  const Node& nm = node(m);
  const Node& ns = node(s);
  if (ns.cols != 1 || ns.rows != nm.rows)
    throw ValidationError("scale_rows: scale must be (" + std::to_string(nm.rows) +
                          "x1), got (" + std::to_string(ns.rows) + "x" + std::to_string(ns.cols) +
                          ")");
  Node out;
  out.op = Op::kScaleRows;
  out.rows = nm.rows;
  out.cols = nm.cols;
  out.a = m.id;
  out.b = s.id;
  out.requires_grad = nm.requires_grad || ns.requires_grad;
  out.val.resize(nm.val.size());
  const int F = nm.cols;
  const double* src = nm.val.data();
  const double* sc = ns.val.data();
  double* dst = out.val.data();
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < nm.rows; ++i)
    for (int f = 0; f < F; ++f)
      dst[static_cast<size_t>(i) * F + f] = src[static_cast<size_t>(i) * F + f] * sc[i];
  return Var{push(std::move(out))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  int rows0 = -1, total = 0;
  bool rg = false;
  for (Var p : parts) {
    check(p, "concat_cols");
    const Node& np = node(p);
    if (rows0 < 0) rows0 = np.rows;
    if (np.rows != rows0)
      throw ValidationError("concat_cols: row mismatch " + std::to_string(np.rows) + " vs " +
                            std::to_string(rows0));
    total += np.cols;
    rg = rg || np.requires_grad;
  }
  Node out;
  out.op = Op::kConcatCols;
  out.rows = rows0;
  out.cols = total;
  out.requires_grad = rg;
  out.val.resize(static_cast<size_t>(rows0) * total);
  out.idx.reserve(parts.size());
  int off = 0;
  for (Var p : parts) {
    const Node& np = node(p);
    out.idx.push_back(p.id);
    for (int i = 0; i < rows0; ++i)
      for (int f = 0; f < np.cols; ++f)
        out.val[static_cast<size_t>(i) * total + off + f] =
            np.val[static_cast<size_t>(i) * np.cols + f];
    off += np.cols;
  }
  return Var{push(std::move(out))};
}

Var Tape::reshape(Var a, int rows, int cols) {
  check(a, "reshape");
  const Node& na = node(a);
  if (rows * cols != na.rows * na.cols)
    throw ValidationError("reshape: size mismatch (" + std::to_string(na.rows) + "x" +
                          std::to_string(na.cols) + ") -> (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ")");
  Node out;
  out.op = Op::kReshape;
  out.rows = rows;
  out.cols = cols;
  out.a = a.id;
  out.requires_grad = na.requires_grad;
  out.val = na.val;
  return Var{push(std::move(out))};
}

// --- reductions ---------------------------------------------------------------

Var Tape::sum(Var a) {
  check(a, "sum");
  const Node& na = node(a);
  Node out;
  out.op = Op::kSum;
  out.rows = 1;
  out.cols = 1;
  out.a = a.id;
  out.requires_grad = na.requires_grad;
  out.val = {kernels::sum_all(na.val.data(), na.val.size())};
  return Var{push(std::move(out))};
}

Var Tape::mean(Var a) {
  check(a, "mean");
  const Node& na = node(a);
  if (na.val.empty()) throw ValidationError("mean: empty tensor");
  Node out;
  out.op = Op::kMean;
  out.rows = 1;
  out.cols = 1;
  out.a = a.id;
  out.requires_grad = na.requires_grad;
  out.val = {kernels::sum_all(na.val.data(), na.val.size()) / static_cast<double>(na.val.size())};
  return Var{push(std::move(out))};
}

Var Tape::tv_mean(Var a) {
  check(a, "tv_mean");
  const Node& na = node(a);
  const int H = na.rows, W = na.cols;
  const long count = static_cast<long>(H) * (W - 1) + static_cast<long>(H - 1) * W;
  if (count <= 0) throw ValidationError("tv_mean: image must have at least one neighbor pair");
  const double* x = na.val.data();
  double s = 0.0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j + 1 < W; ++j)
      s += std::abs(x[static_cast<size_t>(i) * W + j + 1] - x[static_cast<size_t>(i) * W + j]);
  for (int i = 0; i + 1 < H; ++i)
    for (int j = 0; j < W; ++j)
      s += std::abs(x[static_cast<size_t>(i + 1) * W + j] - x[static_cast<size_t>(i) * W + j]);
  Node out;
  out.op = Op::kTvMean;
  out.rows = 1;
  out.cols = 1;
  out.a = a.id;
  out.requires_grad = na.requires_grad;
  out.val = {s / static_cast<double>(count)};
  return Var{push(std::move(out))};
}

// --- backward -------------------------------------------------------------------

namespace {
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

void Tape::backward(Var loss) {
  check(loss, "backward");
  Node& ln = node(loss);
  if (ln.rows != 1 || ln.cols != 1)
    throw ValidationError("backward: loss must be scalar, got (" + std::to_string(ln.rows) + "x" +
                          std::to_string(ln.cols) + ")");
  if (!ln.requires_grad) return;
  ensure_grad(loss.id);
  node(loss).grad[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || n.op == Op::kLeaf) continue;
    backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const double* g = n.grad.data();
  const size_t sz = n.val.size();

  auto in_rg = [&](int vid) { return nodes_[static_cast<size_t>(vid)].requires_grad; };
  auto in_grad = [&](int vid) -> double* {
    ensure_grad(vid);
    return nodes_[static_cast<size_t>(vid)].grad.data();
  };
  auto in_val = [&](int vid) -> const double* { return nodes_[static_cast<size_t>(vid)].val.data(); };

  switch (n.op) {
    case Op::kLeaf: break;
    case Op::kAdd: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i];
      }
      if (in_rg(n.b)) {
        double* gb = in_grad(n.b);
        for (size_t i = 0; i < sz; ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i];
      }
      if (in_rg(n.b)) {
        double* gb = in_grad(n.b);
        for (size_t i = 0; i < sz; ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const double* va = in_val(n.a);
      const double* vb = in_val(n.b);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] * vb[i];
      }
      if (in_rg(n.b)) {
        double* gb = in_grad(n.b);
        for (size_t i = 0; i < sz; ++i) gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::kDiv: {
      const double* va = in_val(n.a);
      const double* vb = in_val(n.b);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] / vb[i];
      }
      if (in_rg(n.b)) {
        double* gb = in_grad(n.b);
        for (size_t i = 0; i < sz; ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
      }
      break;
    }
    case Op::kAddScalar: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::kMulScalar: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] * n.s0;
      }
      break;
    }
    case Op::kRelu: {
      const double* va = in_val(n.a);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i)
          if (va[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case Op::kSoftplus: {
      const double* va = in_val(n.a);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] * sigmoid(va[i]);
      }
      break;
    }
    case Op::kExp: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        const double* y = n.val.data();
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i];
      }
      break;
    }
    case Op::kSquare: {
      const double* va = in_val(n.a);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += 2.0 * va[i] * g[i];
      }
      break;
    }
    case Op::kClamp: {
      const double* va = in_val(n.a);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i)
          if (va[i] >= n.s0 && va[i] <= n.s1) ga[i] += g[i];
      }
      break;
    }
    case Op::kLog10: {
      const double* va = in_val(n.a);
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        const double ln10 = std::log(10.0);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i] / ((va[i] + n.s0) * ln10);
      }
      break;
    }
    case Op::kAffine: {
      const Node& nx = nodes_[static_cast<size_t>(n.a)];
      const int B = nx.rows, nin = nx.cols, m = n.cols;
      if (in_rg(n.a))
        kernels::linear_grad_input(g, B, m, in_val(n.b), nin, in_grad(n.a));
      if (in_rg(n.b))
        kernels::linear_grad_weight(g, B, m, in_val(n.a), nin, in_grad(n.b));
      if (in_rg(n.c)) kernels::col_sums(g, B, m, in_grad(n.c));
      break;
    }
    case Op::kConv2d: {
      if (in_rg(n.a)) {
        const int H = n.rows, W = n.cols;
        const int kh = n.kernel->kh, kw = n.kernel->kw;
        std::vector<double> gxp(static_cast<size_t>(H + kh - 1) * (W + kw - 1));
        kernels::corr2d_full(g, H, W, n.kernel->w.data(), kh, kw, gxp.data());
        kernels::pad_adjoint(gxp.data(), H, W, kh / 2, kw / 2, in_grad(n.a));
      }
      break;
    }
    case Op::kAvgPool: {
      if (in_rg(n.a)) {
        const int factor = static_cast<int>(n.s0);
        const Node& nx = nodes_[static_cast<size_t>(n.a)];
        const int Win = nx.cols;
        double* ga = in_grad(n.a);
        const double inv = 1.0 / (static_cast<double>(factor) * factor);
        for (int i = 0; i < n.rows; ++i)
          for (int j = 0; j < n.cols; ++j) {
            const double gv = g[static_cast<size_t>(i) * n.cols + j] * inv;
            for (int r = 0; r < factor; ++r)
              for (int c = 0; c < factor; ++c)
                ga[static_cast<size_t>(i * factor + r) * Win + (j * factor + c)] += gv;
          }
      }
      break;
    }
    case Op::kGatherRows: {
      if (in_rg(n.a)) {
        double* gt = in_grad(n.a);
        const int F = n.cols;
        for (size_t i = 0; i < n.idx.size(); ++i)
          for (int f = 0; f < F; ++f)
            gt[static_cast<size_t>(n.idx[i]) * F + f] += g[i * static_cast<size_t>(F) + f];
      }
      break;
    }
    case Op::kScaleRows: {
      const int F = n.cols;
      const double* vm = in_val(n.a);
      const double* vs = in_val(n.b);
      if (in_rg(n.a)) {
        double* gm = in_grad(n.a);
        for (int i = 0; i < n.rows; ++i)
          for (int f = 0; f < F; ++f)
            gm[static_cast<size_t>(i) * F + f] += g[static_cast<size_t>(i) * F + f] * vs[i];
      }
      if (in_rg(n.b)) {
        double* gs = in_grad(n.b);
        for (int i = 0; i < n.rows; ++i) {
          double s = 0.0;
          for (int f = 0; f < F; ++f)
            s += g[static_cast<size_t>(i) * F + f] * vm[static_cast<size_t>(i) * F + f];
          gs[i] += s;
        }
      }
      break;
    }
    case Op::kConcatCols: {
      int off = 0;
      for (int pid : n.idx) {
        const Node& np = nodes_[static_cast<size_t>(pid)];
        if (in_rg(pid)) {
          double* gp = in_grad(pid);
          for (int i = 0; i < n.rows; ++i)
            for (int f = 0; f < np.cols; ++f)
              gp[static_cast<size_t>(i) * np.cols + f] +=
                  g[static_cast<size_t>(i) * n.cols + off + f];
        }
        off += np.cols;
      }
      break;
    }
    case Op::kReshape: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        for (size_t i = 0; i < sz; ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::kSum: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        const size_t in_sz = nodes_[static_cast<size_t>(n.a)].val.size();
        for (size_t i = 0; i < in_sz; ++i) ga[i] += g[0];
      }
      break;
    }
    case Op::kMean: {
      if (in_rg(n.a)) {
        double* ga = in_grad(n.a);
        const size_t in_sz = nodes_[static_cast<size_t>(n.a)].val.size();
        const double gv = g[0] / static_cast<double>(in_sz);
        for (size_t i = 0; i < in_sz; ++i) ga[i] += gv;
      }
      break;
    }
    case Op::kTvMean: {
      if (in_rg(n.a)) {
        const Node& nx = nodes_[static_cast<size_t>(n.a)];
        const int H = nx.rows, W = nx.cols;
        const double gv =
            g[0] / (static_cast<double>(H) * (W - 1) + static_cast<double>(H - 1) * W);
        const double* x = in_val(n.a);
        double* ga = in_grad(n.a);
        for (int i = 0; i < H; ++i)
          for (int j = 0; j + 1 < W; ++j) {
            const double s =
                sign0(x[static_cast<size_t>(i) * W + j + 1] - x[static_cast<size_t>(i) * W + j]);
            ga[static_cast<size_t>(i) * W + j + 1] += gv * s;
            ga[static_cast<size_t>(i) * W + j] -= gv * s;
          }
        for (int i = 0; i + 1 < H; ++i)
          for (int j = 0; j < W; ++j) {
            const double s = sign0(x[static_cast<size_t>(i + 1) * W + j] -
                                   x[static_cast<size_t>(i) * W + j]);
            ga[static_cast<size_t>(i + 1) * W + j] += gv * s;
            ga[static_cast<size_t>(i) * W + j] -= gv * s;
          }
      }
      break;
    }
  }
}

}  // namespace echomap
