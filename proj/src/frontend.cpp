#include "bam/frontend.hpp"

#include <cmath>
#include <stdexcept>

#include "bam/labeling.hpp"

namespace bam {

EncoderGeometry encoder_geometry(int sample_rate, double hop_ms) {
  EncoderGeometry g;
  g.hop = frame_samples(sample_rate, hop_ms);
  g.stride2 = 1;
  for (std::size_t s = 10; s >= 1; --s) {
    if (g.hop % s == 0) {
      g.stride2 = s;
      break;
    }
  }
  g.kernel2 = g.stride2;
  g.stride1 = g.hop / g.stride2;
  g.kernel1 = 2 * g.stride1;
  return g;
}

ConvEncoder::ConvEncoder(int sample_rate, double hop_ms, std::size_t channels, std::size_t dim,
                         Rng& rng)
    : geometry_(encoder_geometry(sample_rate, hop_ms)), dim_(dim) {
  Conv1d c1(1, channels, geometry_.kernel1, geometry_.stride1, 0, 0, rng);
  Conv1d c2(channels, dim, geometry_.kernel2, geometry_.stride2, 0, 0, rng);
  conv1_weight = c1.weight;
  conv1_bias = c1.bias;
  conv2_weight = c2.weight;
  conv2_bias = c2.bias;
}

Tensor ConvEncoder::run(const Tensor& waveform, std::size_t pad_left,
                        std::size_t pad_right) const {
  if (waveform.ndim() != 2) {
    throw ShapeError("encode: expected waveform (B, L), got " + shape_str(waveform.shape()));
  }
  const std::size_t batch = waveform.dim(0);
  const std::size_t len = waveform.dim(1);
  const std::size_t receptive = geometry_.receptive_field();
  if (len + pad_left + pad_right < receptive) {
    throw std::invalid_argument("encode: waveform of " + std::to_string(len) +
                                " samples is shorter than the receptive field; need at least " +
                                std::to_string(receptive - pad_left - pad_right));
  }
  Tensor x = reshape(waveform, {batch, 1, len});
  x = selu(conv1d(x, conv1_weight, conv1_bias, geometry_.stride1, pad_left, pad_right));
  x = selu(conv1d(x, conv2_weight, conv2_bias, geometry_.stride2, 0, 0));
  return permute(x, {0, 2, 1});
}

Tensor ConvEncoder::encode(const Tensor& waveform) const { return run(waveform, 0, 0); }

Tensor ConvEncoder::encode_aligned(const Tensor& waveform) const {
  const std::size_t pad = geometry_.receptive_field() - geometry_.hop;
  return run(waveform, pad / 2, pad - pad / 2);
}

void ConvEncoder::collect(const std::string& prefix, NamedTensors& params) const {
  params.push_back({prefix + ".conv1.weight", conv1_weight});
  params.push_back({prefix + ".conv1.bias", conv1_bias});
  params.push_back({prefix + ".conv2.weight", conv2_weight});
  params.push_back({prefix + ".conv2.bias", conv2_bias});
}

std::size_t pooled_frames(std::size_t frames, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("pooling stride must be >= 1");
  if (frames == 0) return 0;
  return frames < stride ? 1 : frames / stride;
}

namespace {

// (B, T, D) -> (B, T_out, window, D), dropping the trailing partial window.
Tensor windows(const Tensor& frames, std::size_t stride) {
  if (frames.ndim() != 3) {
    throw ShapeError("pooling expects (B, T, D), got " + shape_str(frames.shape()));
  }
  const std::size_t batch = frames.dim(0);
  const std::size_t t = frames.dim(1);
  const std::size_t d = frames.dim(2);
  const std::size_t t_out = pooled_frames(t, stride);
  if (t_out == 0) throw std::invalid_argument("pooling: no input frames");
  const std::size_t window = t < stride ? t : stride;
  Tensor used = t_out * window == t ? frames : slice(frames, 1, 0, t_out * window);
  return reshape(used, {batch, t_out, window, d});
}

}  // namespace

AttentivePool::AttentivePool(std::size_t dim, Rng& rng) : proj(dim, dim, rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(dim);
  for (auto& x : v) x = u(rng);
  score = Tensor::from_vector({dim, 1}, std::move(v), true);
}

PoolResult AttentivePool::operator()(const Tensor& frames, std::size_t stride) const {
  Tensor w = windows(frames, stride);
  Tensor energy = matmul(tanh(proj(w)), score);  // (B, T_out, window, 1)
  Tensor weights = softmax(energy, 2);
  Tensor pooled = sum_axis(mul(w, weights), 2);
  return {pooled, weights};
}

void AttentivePool::collect(const std::string& prefix, NamedTensors& params) const {
  proj.collect(prefix + ".proj", params);
  params.push_back({prefix + ".score", score});
}

Tensor max_pool_frames(const Tensor& frames, std::size_t stride) {
  return max_axis(windows(frames, stride), 2);
}

std::vector<double> normalize_waveform(std::span<const float> samples) {
  std::vector<double> out(samples.begin(), samples.end());
  double energy = 0.0;
  for (double x : out) energy += x * x;
  if (out.empty() || energy == 0.0) return out;
  const double gain = 1.0 / std::sqrt(energy / static_cast<double>(out.size()));
  for (double& x : out) x *= gain;
  return out;
}

}  // namespace bam
