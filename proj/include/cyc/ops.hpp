#pragma once

#include <cstddef>
#include <vector>

#include "cyc/tape.hpp"
#include "cyc/tensor.hpp"

namespace cyc {

// Plain forward-only math shared by the taped ops and no-grad callers
// (search rollouts, evaluation).
namespace fn {

double sigmoid(double x);
double elu(double x);
double square_log(double x, double eps);

// softmax(tau * v); rank-1 vectors or rank-2 row-wise.
Tensor softmax_temp(const Tensor& v, double tau);
// Row-wise softmax probabilities of logits[B x K].
Tensor softmax_rows(const Tensor& logits);
std::size_t argmax_row(const Tensor& logits, std::size_t row);

}  // namespace fn

// ---- elementwise / scalar ----
Value add(Value a, Value b);
Value mul(Value a, Value b);
Value affine_scalar(Value x, double scale, double shift);  // scale*x + shift
Value sigmoid(Value x);
Value tanh(Value x);
Value elu(Value x);
Value square_log(Value x, double eps = 1e-4);  // log(x^2 + eps)

// ---- linear algebra ----
Value matmul(Value a, Value b);
Value transpose(Value a);
Value add_rowvec(Value x, Value v);   // x[R x C] + v[C] per row
Value mul_rowvec(Value x, Value v);   // x[R x C] * v[C] per row
Value scale_rows(Value x, Value s);   // x[R x C] * s[R] per column
Value row_sum(Value x);               // [R x C] -> [R]
Value mean_all(Value x);              // -> scalar

// ---- shape plumbing ----
Value reshape(Value x, Shape shape);
Value concat_cols(Value a, Value b);              // [B x m],[B x n] -> [B x m+n]
Value select_time(Value p, std::size_t t);        // [B x n x d] -> [B x d]
Value select_col(Value m, std::size_t c);         // [B x L] -> [B]
Value stack_cols(const std::vector<Value>& cols); // L of [B] -> [B x L]

// ---- normalization / attention ----
Value softmax_temp(Value v, double tau);
Value rms_norm(Value h, Value gain, Value bias, double eps);

// ---- losses ----
Value cross_entropy(Value logits, const std::vector<int>& labels);
// Binary cross-entropy of a scalar probability against a constant target.
Value bce(Value p, double target);

// ---- signal path ----
Value patchify(Value z, std::size_t window, std::size_t stride);
Value adaptive_pool(Value p, std::size_t dim);
Value mul_gate(Value p, Value gate);                       // [B x n x d] * [B x d]
Value conv_temporal(Value x, Value kernels);               // [B x C x T],[F x L] -> [B x F x C x T]
Value spatial_collapse(Value u, Value weights);            // [B x F x C x T],[F x C] -> [B x F x T]
Value mean_pool_time(Value x, std::size_t stride);         // [B x F x T] -> [B x F x T/stride]

// Patch count for a sliding window; shared by patchify and config checks.
std::size_t patch_count(std::size_t length, std::size_t window, std::size_t stride);

}  // namespace cyc
