#include "bam/boundary.hpp"

#include <stdexcept>

namespace bam {

IntraBranch::IntraBranch(std::size_t dim, std::size_t channels, std::size_t blocks_count,
                         Rng& rng)
    : stem(1, channels, 3, 1, 1, 1, rng), stem_bn(channels, 1), dim_(dim) {
  if (dim < 3) {
    throw std::invalid_argument("intra branch: feature dimension " + std::to_string(dim) +
                                " is shorter than the kernel span 3");
  }
  for (std::size_t k = 0; k < blocks_count; ++k) {
    Block b{Conv1d(channels, channels, 3, 1, 1, 1, rng), Conv1d(channels, channels, 3, 1, 1, 1, rng),
            BatchNorm1d(channels, 1), BatchNorm1d(channels, 1)};
    blocks.push_back(std::move(b));
  }
  fc = Linear(channels, dim, rng);
}

Tensor IntraBranch::operator()(const Tensor& frames, bool training) {
  if (frames.ndim() != 3 || frames.dim(2) != dim_) {
    throw ShapeError("intra branch: expected (B, T, " + std::to_string(dim_) + "), got " +
                     shape_str(frames.shape()));
  }
  const std::size_t b = frames.dim(0);
  const std::size_t t = frames.dim(1);
  Tensor x = reshape(frames, {b * t, 1, dim_});
  x = selu(stem_bn(stem(x), training));
  for (auto& block : blocks) {
    Tensor y = selu(block.bn1(block.conv1(x), training));
    y = block.bn2(block.conv2(y), training);
    x = selu(add(x, y));
  }
  x = mean_axis(x, 2);  // (B*T, C)
  return reshape(fc(x), {b, t, dim_});
}

void IntraBranch::collect(const std::string& prefix, NamedTensors& params) const {
  stem.collect(prefix + ".stem", params);
  stem_bn.collect(prefix + ".stem_bn", params);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::string p = prefix + ".block" + std::to_string(k);
    blocks[k].conv1.collect(p + ".conv1", params);
    blocks[k].bn1.collect(p + ".bn1", params);
    blocks[k].conv2.collect(p + ".conv2", params);
    blocks[k].bn2.collect(p + ".bn2", params);
  }
  fc.collect(prefix + ".fc", params);
}

void IntraBranch::collect_buffers(const std::string& prefix, NamedTensors& buffers) const {
  stem_bn.collect_buffers(prefix + ".stem_bn", buffers);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::string p = prefix + ".block" + std::to_string(k);
    blocks[k].bn1.collect_buffers(p + ".bn1", buffers);
    blocks[k].bn2.collect_buffers(p + ".bn2", buffers);
  }
}

std::string to_string(BoundaryHeadKind kind) {
  switch (kind) {
    case BoundaryHeadKind::kFc:
      return "fc";
    case BoundaryHeadKind::kInter:
      return "inter";
    case BoundaryHeadKind::kIntra:
      return "intra";
    case BoundaryHeadKind::kBoth:
      return "both";
  }
  return "both";
}

BoundaryHeadKind boundary_head_from_string(std::string_view name) {
  if (name == "fc") return BoundaryHeadKind::kFc;
  if (name == "inter") return BoundaryHeadKind::kInter;
  if (name == "intra") return BoundaryHeadKind::kIntra;
  if (name == "both") return BoundaryHeadKind::kBoth;
  throw std::invalid_argument("unknown boundary head '" + std::string(name) +
                              "' (expected fc, inter, intra or both)");
}

namespace {

bool uses_intra(BoundaryHeadKind k) {
  return k == BoundaryHeadKind::kIntra || k == BoundaryHeadKind::kBoth;
}
bool uses_inter(BoundaryHeadKind k) {
  return k == BoundaryHeadKind::kInter || k == BoundaryHeadKind::kBoth;
}

}  // namespace

BoundaryEnhancement::BoundaryEnhancement(std::size_t dim, std::size_t heads,
                                         std::size_t intra_channels, std::size_t intra_blocks,
                                         BoundaryHeadKind kind, Rng& rng)
    : kind_(kind) {
  if (uses_intra(kind)) intra = IntraBranch(dim, intra_channels, intra_blocks, rng);
  if (uses_inter(kind)) inter = FrameAttentionBlock(dim, heads, rng);
  const std::size_t width = kind == BoundaryHeadKind::kBoth ? 2 * dim : dim;
  head = Linear(width, 1, rng);
  enhance = Linear(width, dim, rng);
}

BoundaryOutput BoundaryEnhancement::operator()(const Tensor& frames, bool training,
                                               double threshold, const Tensor& mask) {
  BoundaryOutput out;
  if (uses_intra(kind_)) out.intra = intra(frames, training);
  if (uses_inter(kind_)) out.inter = inter(frames, mask, training).output;
  switch (kind_) {
    case BoundaryHeadKind::kFc:
      out.features = frames;
      break;
    case BoundaryHeadKind::kInter:
      out.features = out.inter;
      break;
    case BoundaryHeadKind::kIntra:
      out.features = out.intra;
      break;
    case BoundaryHeadKind::kBoth:
      out.features = concat({out.intra, out.inter}, 2);
      break;
  }
  const std::size_t b = frames.dim(0);
  const std::size_t t = frames.dim(1);
  out.logits = reshape(head(out.features), {b, t});
  out.probability = sigmoid(out.logits);
  out.decision = binarize(out.probability, threshold);
  out.enhanced = selu(enhance(out.features));
  return out;
}

void BoundaryEnhancement::collect(const std::string& prefix, NamedTensors& params) const {
  if (uses_intra(kind_)) intra.collect(prefix + ".intra", params);
  if (uses_inter(kind_)) inter.collect(prefix + ".inter", params);
  head.collect(prefix + ".head", params);
  enhance.collect(prefix + ".enhance", params);
}

void BoundaryEnhancement::collect_buffers(const std::string& prefix,
                                          NamedTensors& buffers) const {
  if (uses_intra(kind_)) intra.collect_buffers(prefix + ".intra", buffers);
  if (uses_inter(kind_)) inter.collect_buffers(prefix + ".inter", buffers);
}

void BoundaryEnhancement::collect_head(const std::string& prefix, NamedTensors& params) const {
  head.collect(prefix + ".head", params);
}

Tensor binarize(const Tensor& probability, double threshold) {
  auto node = std::make_shared<Node>();
  node->shape = probability.shape();
  node->value.reserve(probability.numel());
  for (double p : probability.data()) node->value.push_back(p >= threshold ? 1.0 : 0.0);
  node->op = "stop_gradient";
  node->blocks_gradient = true;
  node->parents.push_back(probability.node());
  node->id = detail::next_node_id();
  return Tensor(std::move(node));
}

namespace {

// Boundary frames get a run id of their own; other frames share the id of
// their maximal boundary-free run. Equal ids <=> adjacent.
template <typename T>
AdjacencyMatrix adjacency_impl(std::span<const T> decisions) {
  const std::size_t n = decisions.size();
  std::vector<std::size_t> run(n);
  std::size_t id = 0;
  bool previous_boundary = true;
  for (std::size_t i = 0; i < n; ++i) {
    const T v = decisions[i];
    if (v != T(0) && v != T(1)) {
      throw std::invalid_argument("adjacency: decision " + std::to_string(i) +
                                  " is not binary");
    }
    const bool boundary = v == T(1);
    if (boundary || previous_boundary) ++id;
    run[i] = id;
    previous_boundary = boundary;
  }
  AdjacencyMatrix a;
  a.frames = n;
  a.values.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a.values[i * n + j] = run[i] == run[j] ? 1 : 0;
  }
  return a;
}

}  // namespace

AdjacencyMatrix adjacency(std::span<const double> decisions) {
  return adjacency_impl(decisions);
}

AdjacencyMatrix adjacency(std::span<const std::uint8_t> decisions) {
  return adjacency_impl(decisions);
}

Tensor adjacency_mask(const Tensor& decisions) {
  if (decisions.ndim() != 2) {
    throw ShapeError("adjacency_mask: expected (B, T), got " + shape_str(decisions.shape()));
  }
  const std::size_t b = decisions.dim(0);
  const std::size_t t = decisions.dim(1);
  std::vector<double> values;
  values.reserve(b * t * t);
  for (std::size_t k = 0; k < b; ++k) {
    const auto a = adjacency(decisions.data().subspan(k * t, t));
    for (auto v : a.values) values.push_back(v);
  }
  return Tensor::from_vector({b, t, t}, std::move(values));
}

BoundaryFrameAttention::BoundaryFrameAttention(std::size_t dim, std::size_t heads,
                                               std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("boundary frame attention needs N >= 1 blocks");
  for (std::size_t k = 0; k < count; ++k) blocks.emplace_back(dim, heads, rng);
}

Tensor BoundaryFrameAttention::operator()(const Tensor& frames, const Tensor& mask,
                                          bool training, MaskMode mode) {
  Tensor x = frames;
  for (auto& block : blocks) x = block(x, mask, training, mode).output;
  return x;
}

void BoundaryFrameAttention::collect(const std::string& prefix, NamedTensors& params) const {
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    blocks[k].collect(prefix + ".block" + std::to_string(k), params);
  }
}

void BoundaryFrameAttention::collect_buffers(const std::string& prefix,
                                             NamedTensors& buffers) const {
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    blocks[k].collect_buffers(prefix + ".block" + std::to_string(k), buffers);
  }
}

}  // namespace bam
