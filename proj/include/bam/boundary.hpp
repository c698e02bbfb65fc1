#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bam/attention.hpp"
#include "bam/nn.hpp"

namespace bam {

// Per-frame 1-D ResNet: each frame's D-vector is a 1-channel sequence of
// length D. Stem conv to C channels, residual blocks, average over D, FC C->D.
class IntraBranch {
 public:
  IntraBranch() = default;
  IntraBranch(std::size_t dim, std::size_t channels, std::size_t blocks, Rng& rng);

  Tensor operator()(const Tensor& frames, bool training);  // (B, T, D) -> (B, T, D)
  void collect(const std::string& prefix, NamedTensors& params) const;
  void collect_buffers(const std::string& prefix, NamedTensors& buffers) const;

  struct Block {
    Conv1d conv1, conv2;
    BatchNorm1d bn1, bn2;
  };

  Conv1d stem;
  BatchNorm1d stem_bn;
  std::vector<Block> blocks;
  Linear fc;

 private:
  std::size_t dim_ = 0;
};

// Which features feed the boundary head.
enum class BoundaryHeadKind {
  kFc,     // front-end features only
  kInter,  // unmasked frame attention only
  kIntra,  // per-frame ResNet only
  kBoth,   // concat(intra, inter): the full BE module
};

std::string to_string(BoundaryHeadKind kind);
BoundaryHeadKind boundary_head_from_string(std::string_view name);

struct BoundaryOutput {
  Tensor intra;        // (B, T, D) or undefined
  Tensor inter;        // (B, T, D) or undefined
  Tensor features;     // F_b
  Tensor logits;       // (B, T), pre-sigmoid
  Tensor probability;  // b_hat, (B, T)
  Tensor decision;     // B_hat, (B, T), 0/1 behind a stop-gradient marker
  Tensor enhanced;     // F_be = SELU(phi'(F_b)), (B, T, D)
};

class BoundaryEnhancement {
 public:
  BoundaryEnhancement() = default;
  BoundaryEnhancement(std::size_t dim, std::size_t heads, std::size_t intra_channels,
                      std::size_t intra_blocks, BoundaryHeadKind kind, Rng& rng);

  // `mask` (optional) limits the inter branch's attention, as in aggregate().
  BoundaryOutput operator()(const Tensor& frames, bool training, double threshold,
                            const Tensor& mask = Tensor());
  BoundaryHeadKind kind() const { return kind_; }
  void collect(const std::string& prefix, NamedTensors& params) const;
  void collect_buffers(const std::string& prefix, NamedTensors& buffers) const;
  // Parameters of the boundary probability head phi alone.
  void collect_head(const std::string& prefix, NamedTensors& params) const;

  IntraBranch intra;
  FrameAttentionBlock inter;
  Linear head;     // phi: width -> 1
  Linear enhance;  // phi': width -> D

 private:
  BoundaryHeadKind kind_ = BoundaryHeadKind::kBoth;
};

// B_hat = (b_hat >= threshold). The result carries a stop-gradient marker.
Tensor binarize(const Tensor& probability, double threshold);

// A_b[i][j] = prod_{n=min(i,j)}^{max(i,j)} (1 - B_hat[n]) off the diagonal, 1 on it.
struct AdjacencyMatrix {
  std::size_t frames = 0;
  std::vector<std::uint8_t> values;  // row-major T x T

  std::uint8_t at(std::size_t i, std::size_t j) const { return values[i * frames + j]; }
};

// Throws on entries other than 0 or 1.
AdjacencyMatrix adjacency(std::span<const double> decisions);
AdjacencyMatrix adjacency(std::span<const std::uint8_t> decisions);

// Adjacency for each row of a (B, T) decision tensor, as a (B, T, T) constant.
Tensor adjacency_mask(const Tensor& decisions);

// N frame attention blocks sharing one boundary mask.
class BoundaryFrameAttention {
 public:
  BoundaryFrameAttention() = default;
  BoundaryFrameAttention(std::size_t dim, std::size_t heads, std::size_t blocks, Rng& rng);

  // `mask` may be undefined for plain stacked attention.
  Tensor operator()(const Tensor& frames, const Tensor& mask, bool training, MaskMode mode);
  void collect(const std::string& prefix, NamedTensors& params) const;
  void collect_buffers(const std::string& prefix, NamedTensors& buffers) const;

  std::vector<FrameAttentionBlock> blocks;
};

}  // namespace bam
