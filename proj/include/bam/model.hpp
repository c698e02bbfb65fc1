#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bam/boundary.hpp"
#include "bam/config.hpp"
#include "bam/frontend.hpp"

namespace bam {

struct FramePrediction {
  std::size_t batch = 0;
  std::size_t frames = 0;
  Tensor logits;           // (B, T, 2); column 1 is spoof
  Tensor boundary_logits;  // (B, T); undefined without a boundary head
  Tensor boundary_decision;

  // Flattened (B * T) views.
  std::vector<double> spoof_probability() const;
  std::vector<double> boundary_probability() const;
};

class BamModel {
 public:
  explicit BamModel(const BamConfig& cfg);

  // input is a waveform batch (B, L) for the encoder front-end or a feature
  // batch (B, T_in, D_in) for external features. valid_frames[b] counts the
  // leading output frames of row b that hold real signal; the rest are padding
  // and are kept out of every attention support. Empty means all valid.
  // teacher_boundaries, if given, is a (B, T) 0/1 tensor that replaces the
  // predicted boundaries when building the mask.
  FramePrediction forward(const Tensor& input, bool training,
                          const std::vector<std::size_t>& valid_frames = {},
                          const Tensor& teacher_boundaries = Tensor());

  // Output frame count for an input of `length` samples (or feature frames).
  std::size_t output_frames(std::size_t length) const;
  // Shortest input that yields one output frame.
  std::size_t min_input_length() const;

  NamedTensors parameters() const;
  NamedTensors buffers() const;
  // The boundary probability head only (phi in the boundary module).
  NamedTensors boundary_head_parameters() const;

  const BamConfig& config() const { return cfg_; }

  // Copies share tensors; clone() gives an independent deep copy.
  BamModel clone() const;

  ConvEncoder encoder;
  Linear projection;  // external features only, D_in -> D
  AttentivePool pool;
  BoundaryEnhancement be;
  BoundaryFrameAttention bfa;
  Linear decision;

 private:
  Tensor frontend(const Tensor& input, std::size_t& frames_out) const;

  BamConfig cfg_;
  bool use_projection_ = false;
};

struct LossParts {
  Tensor total;
  double authenticity = 0.0;
  double boundary = 0.0;
};

// L = CE(logits, Y) + lambda * BCE(boundary_logits, B), each a weighted mean
// over frames; weights zero out padded frames. Boundary term is dropped when
// the prediction has no boundary head.
LossParts total_loss(const FramePrediction& pred, std::span<const std::uint8_t> y,
                     std::span<const std::uint8_t> b, std::span<const double> weights,
                     double lambda);

}  // namespace bam
