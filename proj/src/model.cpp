#include "bam/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace bam {

std::vector<double> FramePrediction::spoof_probability() const {
  const Tensor p = softmax(logits.detach(), 2);
  std::vector<double> out(batch * frames);
  const auto v = p.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[2 * i + 1];
  return out;
}

std::vector<double> FramePrediction::boundary_probability() const {
  if (!boundary_logits.defined()) return {};
  return sigmoid(boundary_logits.detach()).to_vector();
}

namespace {

std::size_t frontend_dim(const BamConfig& cfg) {
  return cfg.feature_dim == 0 ? cfg.dim : cfg.feature_dim;
}

// Keys and queries restricted to real frames; every frame keeps itself.
Tensor validity_mask(std::size_t batch, std::size_t frames,
                     const std::vector<std::size_t>& valid) {
  std::vector<double> m(batch * frames * frames, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = valid[b];
    for (std::size_t i = 0; i < frames; ++i) {
      for (std::size_t j = 0; j < frames; ++j) {
        const bool keep = i == j || (i < n && j < n);
        m[(b * frames + i) * frames + j] = keep ? 1.0 : 0.0;
      }
    }
  }
  return Tensor::from_vector({batch, frames, frames}, std::move(m));
}

}  // namespace

BamModel::BamModel(const BamConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  if (cfg_.frontend == FrontendKind::kEncoder) {
    encoder = ConvEncoder(cfg_.sample_rate, cfg_.hop_ms, cfg_.encoder_channels, cfg_.dim, rng);
  } else if (frontend_dim(cfg_) != cfg_.dim) {
    projection = Linear(frontend_dim(cfg_), cfg_.dim, rng);
    use_projection_ = true;
  }
  if (cfg_.variant != Variant::kBaseline) pool = AttentivePool(cfg_.dim, rng);
  if (cfg_.has_boundary_head()) {
    be = BoundaryEnhancement(cfg_.dim, cfg_.heads, cfg_.intra_channels, cfg_.intra_blocks,
                             cfg_.boundary_head, rng);
  }
  if (cfg_.variant != Variant::kBaseline) bfa = BoundaryFrameAttention(cfg_.dim, cfg_.heads,
                                                                       cfg_.blocks, rng);
  decision = Linear(cfg_.has_boundary_head() ? 2 * cfg_.dim : cfg_.dim, 2, rng);
}

std::size_t BamModel::output_frames(std::size_t length) const {
  std::size_t fine = length;
  if (cfg_.frontend == FrontendKind::kEncoder) {
    fine = length / encoder.geometry().hop;
  }
  if (fine == 0) return 0;
  return pooled_frames(fine, cfg_.stride);
}

std::size_t BamModel::min_input_length() const {
  return cfg_.frontend == FrontendKind::kEncoder ? encoder.geometry().hop : 1;
}

Tensor BamModel::frontend(const Tensor& input, std::size_t& frames_out) const {
  Tensor fine;
  if (cfg_.frontend == FrontendKind::kEncoder) {
    if (input.ndim() != 2) {
      throw ShapeError("model: waveform input must be (B, L), got " + shape_str(input.shape()));
    }
    if (input.dim(1) < min_input_length()) {
      throw std::invalid_argument("model: input of " + std::to_string(input.dim(1)) +
                                  " samples is too short; need at least " +
                                  std::to_string(min_input_length()));
    }
    fine = encoder.encode_aligned(input);
  } else {
    if (input.ndim() != 3 || input.dim(2) != frontend_dim(cfg_)) {
      throw ShapeError("model: feature input must be (B, T, " +
                       std::to_string(frontend_dim(cfg_)) + "), got " +
                       shape_str(input.shape()));
    }
    if (input.dim(1) == 0) throw std::invalid_argument("model: feature input has no frames");
    fine = use_projection_ ? projection(input) : input;
  }
  Tensor pooled = cfg_.variant == Variant::kBaseline ? max_pool_frames(fine, cfg_.stride)
                                                     : pool(fine, cfg_.stride).pooled;
  frames_out = pooled.dim(1);
  return pooled;
}

FramePrediction BamModel::forward(const Tensor& input, bool training,
                                  const std::vector<std::size_t>& valid_frames,
                                  const Tensor& teacher_boundaries) {
  FramePrediction pred;
  std::size_t t = 0;
  const Tensor f_g = frontend(input, t);
  const std::size_t batch = f_g.dim(0);
  pred.batch = batch;
  pred.frames = t;

  Tensor valid_mask;
  if (!valid_frames.empty()) {
    if (valid_frames.size() != batch) {
      throw std::invalid_argument("model: valid_frames has " +
                                  std::to_string(valid_frames.size()) + " rows for batch " +
                                  std::to_string(batch));
    }
    bool padded = false;
    for (auto n : valid_frames) padded = padded || n < t;
    if (padded) valid_mask = validity_mask(batch, t, valid_frames);
  }

  if (cfg_.variant == Variant::kBaseline) {
    pred.logits = decision(f_g);
    return pred;
  }

  Tensor f_be;
  Tensor mask = valid_mask;
  if (cfg_.has_boundary_head()) {
    BoundaryOutput bo = be(f_g, training, cfg_.boundary_threshold, valid_mask);
    pred.boundary_logits = bo.logits;
    pred.boundary_decision = bo.decision;
    f_be = bo.enhanced;
    if (cfg_.variant == Variant::kBfaBe) {
      const Tensor source = teacher_boundaries.defined() ? teacher_boundaries : bo.decision;
      const Tensor a_b = adjacency_mask(source);
      mask = valid_mask.defined() ? mul(a_b, valid_mask) : a_b;
    }
  }
  const Tensor f_bfa = bfa(f_g, mask, training, cfg_.mask_mode);
  pred.logits = decision(f_be.defined() ? concat({f_bfa, f_be}, 2) : f_bfa);
  return pred;
}

BamModel BamModel::clone() const {
  BamModel copy(cfg_);
  NamedTensors src = parameters();
  NamedTensors dst = copy.parameters();
  for (auto& b : buffers()) src.push_back(b);
  for (auto& b : copy.buffers()) dst.push_back(b);
  for (std::size_t k = 0; k < src.size(); ++k) {
    const auto from = src[k].tensor.data();
    std::copy(from.begin(), from.end(), dst[k].tensor.mutable_data().begin());
  }
  return copy;
}

NamedTensors BamModel::parameters() const {
  NamedTensors p;
  if (cfg_.frontend == FrontendKind::kEncoder) encoder.collect("encoder", p);
  if (use_projection_) projection.collect("projection", p);
  if (cfg_.variant != Variant::kBaseline) pool.collect("pool", p);
  if (cfg_.has_boundary_head()) be.collect("be", p);
  if (cfg_.variant != Variant::kBaseline) bfa.collect("bfa", p);
  decision.collect("decision", p);
  return p;
}

NamedTensors BamModel::buffers() const {
  NamedTensors b;
  if (cfg_.has_boundary_head()) be.collect_buffers("be", b);
  if (cfg_.variant != Variant::kBaseline) bfa.collect_buffers("bfa", b);
  return b;
}

NamedTensors BamModel::boundary_head_parameters() const {
  NamedTensors p;
  if (cfg_.has_boundary_head()) be.collect_head("be", p);
  return p;
}

LossParts total_loss(const FramePrediction& pred, std::span<const std::uint8_t> y,
                     std::span<const std::uint8_t> b, std::span<const double> weights,
                     double lambda) {
  const std::size_t n = pred.batch * pred.frames;
  if (y.size() != n || weights.size() != n ||
      (pred.boundary_logits.defined() && b.size() != n)) {
    throw std::invalid_argument("total_loss: " + std::to_string(n) +
                                " predicted frames but " + std::to_string(y.size()) +
                                " labels");
  }
  std::vector<int> targets(y.begin(), y.end());
  const Tensor ls = cross_entropy(reshape(pred.logits, {n, 2}), targets, weights);
  LossParts parts;
  parts.authenticity = ls.item();
  parts.total = ls;
  if (pred.boundary_logits.defined()) {
    std::vector<double> bt(b.begin(), b.end());
    const Tensor lb = bce_with_logits(pred.boundary_logits, bt, weights);
    parts.boundary = lb.item();
    parts.total = add(ls, scale(lb, lambda));
  }
  return parts;
}

}  // namespace bam
