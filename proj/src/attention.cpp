#include "bam/attention.hpp"

#include <stdexcept>

namespace bam {

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::kExclude:
      return "exclude";
    case MaskMode::kMultiplyPostSoftmaxRenorm:
      return "multiply-post-softmax-renormalize";
    case MaskMode::kMultiplyPreSoftmax:
      return "multiply-pre-softmax";
  }
  return "exclude";
}

MaskMode mask_mode_from_string(std::string_view name) {
  if (name == "exclude") return MaskMode::kExclude;
  if (name == "multiply-post-softmax-renormalize") return MaskMode::kMultiplyPostSoftmaxRenorm;
  if (name == "multiply-pre-softmax") return MaskMode::kMultiplyPreSoftmax;
  throw std::invalid_argument("unknown mask mode '" + std::string(name) +
                              "' (expected exclude, multiply-post-softmax-renormalize or "
                              "multiply-pre-softmax)");
}

Tensor pairwise_scores(const Tensor& frames) {
  if (frames.ndim() != 3) {
    throw ShapeError("pairwise_scores: expected (B, T, D), got " + shape_str(frames.shape()));
  }
  const std::size_t b = frames.dim(0);
  const std::size_t t = frames.dim(1);
  const std::size_t d = frames.dim(2);
  return mul(reshape(frames, {b, t, 1, d}), reshape(frames, {b, 1, t, d}));
}

Tensor attention_map(const Tensor& scores, const Linear& phi, const Tensor& w_a) {
  const std::size_t d = scores.dim(scores.ndim() - 1);
  if (phi.in_features() != d || phi.out_features() != d) {
    throw ShapeError("attention_map: phi must map " + std::to_string(d) + " -> " +
                     std::to_string(d));
  }
  if (w_a.ndim() != 2 || w_a.dim(0) != d) {
    throw ShapeError("attention_map: W_a must be (" + std::to_string(d) + ", H), got " +
                     shape_str(w_a.shape()));
  }
  return matmul(tanh(phi(scores)), w_a);
}

Aggregation aggregate(const Tensor& attention, const Tensor& frames, const Tensor& mask,
                      MaskMode mode) {
  if (attention.ndim() != 4 || frames.ndim() != 3 || attention.dim(0) != frames.dim(0) ||
      attention.dim(1) != frames.dim(1) || attention.dim(2) != frames.dim(1)) {
    throw ShapeError("aggregate: attention " + shape_str(attention.shape()) +
                     " does not match frames " + shape_str(frames.shape()));
  }
  const std::size_t b = frames.dim(0);
  const std::size_t t = frames.dim(1);
  const std::size_t h = attention.dim(3);

  Tensor weights;
  if (!mask.defined()) {
    weights = softmax(attention, 2);
  } else {
    const bool batched = mask.ndim() == 3;
    if (!(mask.ndim() == 2 || batched) || mask.dim(mask.ndim() - 1) != t ||
        mask.dim(mask.ndim() - 2) != t || (batched && mask.dim(0) != b)) {
      throw ShapeError("aggregate: mask " + shape_str(mask.shape()) + " does not match T=" +
                       std::to_string(t));
    }
    const Tensor m = batched ? reshape(mask, {b, t, t, 1}) : reshape(mask, {t, t, 1});
    switch (mode) {
      case MaskMode::kExclude:
        weights = masked_softmax(attention, 2, m);
        break;
      case MaskMode::kMultiplyPostSoftmaxRenorm: {
        const Tensor kept = mul(softmax(attention, 2), m);
        weights = div(kept, sum_axis(kept, 2, true));
        break;
      }
      case MaskMode::kMultiplyPreSoftmax:
        weights = softmax(mul(attention, m), 2);
        break;
    }
  }

  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t k = 0; k < h; ++k) {
    const Tensor w = h == 1 ? reshape(weights, {b, t, t})
                            : reshape(slice(weights, 3, k, 1), {b, t, t});
    heads.push_back(reshape(matmul(w, frames), {b, 1, t, frames.dim(2)}));
  }
  Tensor features = h == 1 ? heads.front() : concat(heads, 1);
  return {weights, features};
}

FrameAttentionBlock::FrameAttentionBlock(std::size_t dim, std::size_t heads, Rng& rng)
    : phi(dim, dim, rng),
      w_a(normal_tensor({dim, heads}, 0.02, rng)),
      phi_a(dim, dim, rng),
      phi_g(dim, dim, rng),
      bn(dim, -1) {
  if (heads == 0) throw std::invalid_argument("frame attention needs at least one head");
}

FabOutput FrameAttentionBlock::operator()(const Tensor& frames, const Tensor& mask,
                                          bool training, MaskMode mode) {
  const Tensor attention = attention_map(pairwise_scores(frames), phi, w_a);
  Aggregation agg = aggregate(attention, frames, mask, mode);
  const std::size_t h = agg.features.dim(1);
  Tensor mixed = phi_a(agg.features);  // (B, H, T, D)
  if (h > 1) mixed = sum_axis(mixed, 1);
  else mixed = reshape(mixed, frames.shape());
  Tensor out = selu(bn(add(mixed, phi_g(frames)), training));
  return {agg.features, agg.weights, out};
}

void FrameAttentionBlock::collect(const std::string& prefix, NamedTensors& params) const {
  phi.collect(prefix + ".phi", params);
  params.push_back({prefix + ".w_a", w_a});
  phi_a.collect(prefix + ".phi_a", params);
  phi_g.collect(prefix + ".phi_g", params);
  bn.collect(prefix + ".bn", params);
}

void FrameAttentionBlock::collect_buffers(const std::string& prefix,
                                          NamedTensors& buffers) const {
  bn.collect_buffers(prefix + ".bn", buffers);
}

}  // namespace bam
