#pragma once

#include <string>
#include <string_view>

#include "bam/nn.hpp"

namespace bam {

// How a binary T x T mask gates the attention softmax.
enum class MaskMode {
  kExclude,                      // masked keys leave the softmax support
  kMultiplyPostSoftmaxRenorm,    // softmax, zero masked weights, renormalize
  kMultiplyPreSoftmax,           // literal A * mask before the softmax
};

std::string to_string(MaskMode mode);
MaskMode mask_mode_from_string(std::string_view name);

// s[b,i,j,:] = F[b,i,:] * F[b,j,:]; (B, T, D) -> (B, T, T, D).
Tensor pairwise_scores(const Tensor& frames);

// A[b,i,j,h] = sum_d tanh(phi(s[b,i,j,:]))[d] * W_a[d,h]; (B, T, T, H).
Tensor attention_map(const Tensor& scores, const Linear& phi, const Tensor& w_a);

struct Aggregation {
  Tensor weights;   // (B, T, T, H), normalized over the key axis
  Tensor features;  // (B, H, T, D)
};

// mask is (B, T, T) or (T, T) with entries in {0, 1}; pass an undefined
// tensor for unmasked attention.
Aggregation aggregate(const Tensor& attention, const Tensor& frames, const Tensor& mask,
                      MaskMode mode = MaskMode::kExclude);

struct FabOutput {
  Tensor aggregated;  // F_a, (B, H, T, D)
  Tensor weights;     // (B, T, T, H)
  Tensor output;      // F_inter, (B, T, D)
};

// F_inter = SELU(BN(sum_h phi_a(F_a[h]) + phi_g(F_g))).
class FrameAttentionBlock {
 public:
  FrameAttentionBlock() = default;
  FrameAttentionBlock(std::size_t dim, std::size_t heads, Rng& rng);

  FabOutput operator()(const Tensor& frames, const Tensor& mask, bool training,
                       MaskMode mode = MaskMode::kExclude);
  void collect(const std::string& prefix, NamedTensors& params) const;
  void collect_buffers(const std::string& prefix, NamedTensors& buffers) const;

  std::size_t heads() const { return w_a.dim(1); }

  Linear phi;    // inside tanh, D -> D
  Tensor w_a;    // (D, H)
  Linear phi_a;  // on aggregated features
  Linear phi_g;  // residual path
  BatchNorm1d bn;
};

}  // namespace bam
