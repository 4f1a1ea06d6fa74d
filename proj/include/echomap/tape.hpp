#pragma once

#include <memory>
#include <string>
#include <vector>

#include "echomap/tensor.hpp"

namespace echomap {

// Fixed (non-trainable) convolution kernel attached to conv2d_same nodes.
struct ConvKernel {
  int kh = 0, kw = 0;
  std::vector<double> w;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape over dense double tensors. A tape is built fresh
// for every training iteration: record the forward ops, call backward() once,
// read leaf gradients, reset().
//
// 'same' convolution and the SSIM/loss ops use replicate (edge-clamp)
// padding throughout. All ops run at float64.
class Tape {
 public:
  // requires_grad marks a leaf whose gradient backward() should produce.
  Var leaf(const Tensor& t, bool requires_grad = false);
  Var constant(const Tensor& t) { return leaf(t, false); }

  // elementwise; binary ops demand identical shapes
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);
  Var relu(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var square(Var a);
  // subgradient is zero outside (and exactly at) the bounds' exterior; the
  // pass-through region is lo <= x <= hi
  Var clamp(Var a, double lo, double hi);
  // log10(x + eps); rejects negative inputs
  Var log10_guarded(Var a, double eps);

  // y = x W^T + b with batch rows: x is (B x n), W (m x n), b (1 x m)
  Var affine(Var x, Var W, Var b);
  // 'same' shape convolution with replicate padding; kernel dims odd and
  // no larger than the image
  Var conv2d_same(Var x, std::shared_ptr<const ConvKernel> k);
  // block average over factor x factor tiles; dims must divide evenly
  Var avg_pool(Var x, int factor);
  // out[i, :] = table[idx[i], :]; duplicate indices accumulate in backward
  Var gather_rows(Var table, std::vector<int> idx);
  // out[i, :] = m[i, :] * s[i]; s is (n x 1)
  Var scale_rows(Var m, Var s);
  Var concat_cols(const std::vector<Var>& parts);
  Var reshape(Var a, int rows, int cols);

  Var sum(Var a);
  Var mean(Var a);
  // mean |forward difference| over both axes; see optim::tv docs
  Var tv_mean(Var a);

  // loss must be scalar (1x1); gradients accumulate into every
  // requires_grad node reachable from it
  void backward(Var loss);

  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  const std::vector<double>& val(Var v) const { return node(v).val; }
  // empty vector when no gradient was produced
  const std::vector<double>& grad(Var v) const;
  Tensor tensor_of(Var v) const;
  Tensor grad_tensor(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // drop all nodes, keep allocations where possible
  void reset();
  std::size_t node_count() const { return nodes_.size(); }

  // id of the first node holding a non-finite value, -1 if none
  int first_nonfinite() const;
  std::string op_name(int id) const;

 private:
  enum class Op {
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kAddScalar,
    kMulScalar,
    kRelu,
    kSoftplus,
    kExp,
    kSquare,
    kClamp,
    kLog10,
    kAffine,
    kConv2d,
    kAvgPool,
    kGatherRows,
    kScaleRows,
    kConcatCols,
    kReshape,
    kSum,
    kMean,
    kTvMean,
  };

  struct Node {
    Op op = Op::kLeaf;
    int rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    bool requires_grad = false;
    int a = -1, b = -1, c = -1;
    double s0 = 0.0, s1 = 0.0;
    std::vector<int> idx;  // gather indices, or concat input ids
    std::shared_ptr<const ConvKernel> kernel;
  };

  std::vector<Node> nodes_;
  static const std::vector<double> empty_;

  Node& node(Var v);
  const Node& node(Var v) const;
  int push(Node&& n);
  void ensure_grad(int id);
  void check(Var v, const char* who) const;
  Var unary(Op op, Var a, double s0 = 0.0, double s1 = 0.0);
  Var binary(Op op, Var a, Var b, const char* who);
  void backward_node(int id);
};

}  // namespace echomap
