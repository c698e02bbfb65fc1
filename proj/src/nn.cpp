#include "bam/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace bam {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

}  // namespace

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform_tensor({out, in}, bound, rng);
  bias = uniform_tensor({out}, bound, rng);
}

void Linear::collect(const std::string& prefix, NamedTensors& params) const {
  params.push_back({prefix + ".weight", weight});
  params.push_back({prefix + ".bias", bias});
}

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t pad_left, std::size_t pad_right, Rng& rng)
    : stride_(stride), pad_left_(pad_left), pad_right_(pad_right) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  weight = uniform_tensor({out_channels, in_channels, kernel}, bound, rng);
  bias = uniform_tensor({out_channels}, bound, rng);
}

void Conv1d::collect(const std::string& prefix, NamedTensors& params) const {
  params.push_back({prefix + ".weight", weight});
  params.push_back({prefix + ".bias", bias});
}

BatchNorm1d::BatchNorm1d(std::size_t features, int feature_axis)
    : gamma(Tensor::full({features}, 1.0, true)),
      beta(Tensor::zeros({features}, true)),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0)),
      feature_axis_(feature_axis) {}

Tensor BatchNorm1d::operator()(const Tensor& x, bool training) {
  BatchNormStats stats{running_mean.mutable_data(), running_var.mutable_data(), momentum, eps};
  return batch_norm(x, gamma, beta, feature_axis_, stats, training);
}

void BatchNorm1d::collect(const std::string& prefix, NamedTensors& params) const {
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
}

void BatchNorm1d::collect_buffers(const std::string& prefix, NamedTensors& buffers) const {
  buffers.push_back({prefix + ".running_mean", running_mean});
  buffers.push_back({prefix + ".running_var", running_var});
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].has_grad()) continue;
    for (double g : params_[k].grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: non-finite gradient in parameter " + std::to_string(k) +
                                 "; step refused");
      }
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto value = p.mutable_data();
    const auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::restore(std::uint64_t step, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("adam: optimizer state does not match parameter count");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].size() != params_[k].numel() || v[k].size() != params_[k].numel()) {
      throw std::invalid_argument("adam: moment shape mismatch for parameter " +
                                  std::to_string(k));
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double halving_lr(double base_lr, std::size_t epoch, std::size_t period) {
  if (period == 0) return base_lr;
  return base_lr * std::ldexp(1.0, -static_cast<int>(epoch / period));
}

}  // namespace bam
