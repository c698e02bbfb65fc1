#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "bam/tensor.hpp"

namespace bam {

// Standard SELU constants.
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;

// Names of every differentiable op kind, each listed once.
std::span<const std::string_view> differentiable_ops();

// Element-wise with numpy-style broadcasting (right-aligned; size-1 axes expand).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Shape broadcast_shape(const Shape& a, const Shape& b);

// (M,K)x(K,N), (...,M,K)x(K,N) and batched (B,M,K)x(B,K,N).
Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W^T + b over the last axis; W is (out, in), b is (out).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor selu(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
// Softmax whose support excludes entries where `mask` (broadcast to a) is 0.
// Throws if a softmax row has no allowed entry.
Tensor masked_softmax(const Tensor& a, int axis, const Tensor& mask);

struct BatchNormStats {
  std::span<double> running_mean;
  std::span<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalizes along `feature_axis` with statistics over every other axis in
// training mode (running stats updated), or the running stats otherwise.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int feature_axis,
                  BatchNormStats stats, bool training);

// x (N, Cin, L), weight (Cout, Cin, K), bias (Cout). Zero padding.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor max_axis(const Tensor& a, int axis, bool keepdim = false);

// Weighted mean 2-class (or C-class) cross-entropy over rows of logits (R, C).
// Rows with weight 0 do not contribute; an all-zero weight vector yields 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights);
// Weighted mean binary cross-entropy on sigmoid(logits), logits of any shape.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets,
                       std::span<const double> weights);

// Graph marker: forwards the value, blocks every gradient behind it.
Tensor stop_gradient(const Tensor& a);

}  // namespace bam
