#pragma once

#include <cstddef>

namespace echomap::kernels {

// Every kernel here computes each output element with a fixed summation
// order, so the parallel variants are bit-identical to the serial ones for
// any thread count. The serial versions are the reference implementations;
// tests compare the two and echomap_bench times them.

bool parallel_enabled();
void set_parallel(bool on);

// --- replicate padding ---------------------------------------------------
// xp is (H+2a) x (W+2b); xp[p][q] = x[clamp(p-a)][clamp(q-b)].
void replicate_pad_serial(const double* x, int H, int W, int a, int b, double* xp);
void replicate_pad_parallel(const double* x, int H, int W, int a, int b, double* xp);
void replicate_pad(const double* x, int H, int W, int a, int b, double* xp);

// Adjoint of replicate padding: gx[i][j] += sum of gxp over the pad cells
// that replicated pixel (i, j). Overwrites gx.
void pad_adjoint_serial(const double* gxp, int H, int W, int a, int b, double* gx);
void pad_adjoint_parallel(const double* gxp, int H, int W, int a, int b, double* gx);
void pad_adjoint(const double* gxp, int H, int W, int a, int b, double* gx);

// --- convolution ----------------------------------------------------------
// Valid convolution of the padded input: y[i][j] = sum_{r,c} k[r][c] * xp[i+r][j+c],
// y is (Hp-kh+1) x (Wp-kw+1).
void conv2d_valid_serial(const double* xp, int Hp, int Wp, const double* k, int kh, int kw,
                         double* y);
void conv2d_valid_parallel(const double* xp, int Hp, int Wp, const double* k, int kh, int kw,
                           double* y);
void conv2d_valid(const double* xp, int Hp, int Wp, const double* k, int kh, int kw, double* y);

// Adjoint of conv2d_valid into the padded buffer:
// gxp[p][q] = sum_{r,c} k[r][c] * gy[p-r][q-c] over valid gy indices.
// gy is H x W (the conv output shape), gxp is (H+kh-1) x (W+kw-1).
void corr2d_full_serial(const double* gy, int H, int W, const double* k, int kh, int kw,
                        double* gxp);
void corr2d_full_parallel(const double* gy, int H, int W, const double* k, int kh, int kw,
                          double* gxp);
void corr2d_full(const double* gy, int H, int W, const double* k, int kh, int kw, double* gxp);

// --- batched linear layers (batch rows) ------------------------------------
// Y[B x m] = X[B x n] * W^T[n x m] + bias[m]; bias may be null.
void linear_forward_serial(const double* X, int B, int n, const double* W, int m,
                           const double* bias, double* Y);
void linear_forward_parallel(const double* X, int B, int n, const double* W, int m,
                             const double* bias, double* Y);
void linear_forward(const double* X, int B, int n, const double* W, int m, const double* bias,
                    double* Y);

// dX[B x n] += dY[B x m] * W[m x n]
void linear_grad_input_serial(const double* dY, int B, int m, const double* W, int n, double* dX);
void linear_grad_input_parallel(const double* dY, int B, int m, const double* W, int n,
                                double* dX);
void linear_grad_input(const double* dY, int B, int m, const double* W, int n, double* dX);

// dW[m x n] += dY^T[m x B] * X[B x n]
void linear_grad_weight_serial(const double* dY, int B, int m, const double* X, int n, double* dW);
void linear_grad_weight_parallel(const double* dY, int B, int m, const double* X, int n,
                                 double* dW);
void linear_grad_weight(const double* dY, int B, int m, const double* X, int n, double* dW);

// db[m] += column sums of dY[B x m]
void col_sums(const double* dY, int B, int m, double* db);

// Serial left-to-right sum; the one reduction everybody shares.
double sum_all(const double* x, std::size_t n);

}  // namespace echomap::kernels
