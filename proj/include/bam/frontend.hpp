#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bam/nn.hpp"

namespace bam {

// Two strided conv layers: kernel 2*s1 stride s1, then kernel s2 stride s2,
// with s1 * s2 equal to the hop.
struct EncoderGeometry {
  std::size_t hop = 0;
  std::size_t kernel1 = 0;
  std::size_t stride1 = 0;
  std::size_t kernel2 = 0;
  std::size_t stride2 = 0;

  std::size_t receptive_field() const { return kernel1 + (kernel2 - 1) * stride1; }
};

EncoderGeometry encoder_geometry(int sample_rate, double hop_ms);

// Trainable waveform encoder standing in for a pretrained SSL front-end.
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(int sample_rate, double hop_ms, std::size_t channels, std::size_t dim, Rng& rng);

  // waveform (B, L) -> (B, T, D) with T = floor((L - receptive) / hop) + 1.
  Tensor encode(const Tensor& waveform) const;
  // Zero-pads (receptive - hop) samples around the waveform so T = floor(L / hop).
  Tensor encode_aligned(const Tensor& waveform) const;

  const EncoderGeometry& geometry() const { return geometry_; }
  std::size_t dim() const { return dim_; }
  void collect(const std::string& prefix, NamedTensors& params) const;

  Tensor conv1_weight, conv1_bias, conv2_weight, conv2_bias;

 private:
  Tensor run(const Tensor& waveform, std::size_t pad_left, std::size_t pad_right) const;

  EncoderGeometry geometry_;
  std::size_t dim_ = 0;
};

struct PoolResult {
  Tensor pooled;   // (B, T_out, D)
  Tensor weights;  // (B, T_out, window, 1)
};

// Learned convex weighting inside non-overlapping windows of `stride` frames:
// e_t = v . tanh(W h_t + b), softmax over the window, weighted mean.
// Fewer than `stride` frames collapse into a single window.
class AttentivePool {
 public:
  AttentivePool() = default;
  AttentivePool(std::size_t dim, Rng& rng);

  PoolResult operator()(const Tensor& frames, std::size_t stride) const;
  void collect(const std::string& prefix, NamedTensors& params) const;

  Linear proj;
  Tensor score;  // (D, 1)
};

// Windowed max over frames; same windowing as AttentivePool.
Tensor max_pool_frames(const Tensor& frames, std::size_t stride);

// Frame count after windowing with `stride`.
std::size_t pooled_frames(std::size_t frames, std::size_t stride);

// Scales a waveform to unit RMS; silent input is returned as zeros.
std::vector<double> normalize_waveform(std::span<const float> samples);

}  // namespace bam
