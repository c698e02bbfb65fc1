#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bam/ops.hpp"
#include "bam/tensor.hpp"

namespace bam {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

// Fully connected map over the last axis: y = x W^T + b.
class Linear {
 public:
  Linear() = default;
  // Uniform fan-in init: U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  void collect(const std::string& prefix, NamedTensors& params) const;

  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad_left, std::size_t pad_right, Rng& rng);

  Tensor operator()(const Tensor& x) const {
    return conv1d(x, weight, bias, stride_, pad_left_, pad_right_);
  }
  std::size_t kernel() const { return weight.dim(2); }
  std::size_t stride() const { return stride_; }
  void collect(const std::string& prefix, NamedTensors& params) const;

  Tensor weight;  // (out, in, kernel)
  Tensor bias;    // (out)

 private:
  std::size_t stride_ = 1;
  std::size_t pad_left_ = 0;
  std::size_t pad_right_ = 0;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::size_t features, int feature_axis);

  // Running moments are updated in place when `training` is set.
  Tensor operator()(const Tensor& x, bool training);
  void collect(const std::string& prefix, NamedTensors& params) const;
  void collect_buffers(const std::string& prefix, NamedTensors& buffers) const;

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  int feature_axis_ = -1;
};

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = true);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. The learning rate can be rescaled between steps.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Throws (leaving every parameter untouched) if any gradient is non-finite.
  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void restore(std::uint64_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

// lr halved every `period` epochs: base * 0.5^floor(epoch / period).
double halving_lr(double base_lr, std::size_t epoch, std::size_t period);

}  // namespace bam
