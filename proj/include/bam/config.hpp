#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bam/attention.hpp"
#include "bam/boundary.hpp"

namespace bam {

enum class FrontendKind { kEncoder, kFeatures };

// Model variants compared in the ablation.
enum class Variant {
  kBaseline,  // max pooling + FC
  kFa,        // stacked unmasked frame attention + FC
  kFaBe,      // boundary enhancement + unmasked frame attention
  kBfaBe,     // boundary enhancement + boundary-masked frame attention
};

std::string to_string(FrontendKind kind);
FrontendKind frontend_kind_from_string(std::string_view name);
std::string to_string(Variant variant);
Variant variant_from_string(std::string_view name);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BamConfig {
  // front-end
  FrontendKind frontend = FrontendKind::kEncoder;
  int sample_rate = 8000;
  double hop_ms = 20.0;
  std::size_t encoder_channels = 16;
  std::size_t feature_dim = 0;  // input width of external feature files; 0 means dim

  // model
  Variant variant = Variant::kBfaBe;
  std::size_t dim = 32;
  std::size_t heads = 1;
  std::size_t blocks = 2;
  std::size_t stride = 8;
  std::size_t intra_channels = 8;
  std::size_t intra_blocks = 2;
  BoundaryHeadKind boundary_head = BoundaryHeadKind::kBoth;
  MaskMode mask_mode = MaskMode::kExclude;
  double boundary_threshold = 0.5;
  bool teacher_forcing = false;

  // loss
  double lambda = 0.5;

  // training
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t lr_halving_period = 10;
  std::size_t batch_size = 8;
  double crop_seconds = 4.0;
  std::uint64_t seed = 1;

  // evaluation
  double decision_threshold = 0.5;

  double resolution_ms() const { return hop_ms * static_cast<double>(stride); }
  bool has_boundary_head() const {
    return variant == Variant::kFaBe || variant == Variant::kBfaBe;
  }

  // Throws ConfigError naming the offending field.
  void validate() const;

  static BamConfig desk();
  static BamConfig paper();
};

std::string config_to_json(const BamConfig& cfg, int indent = 2);
BamConfig config_from_json(std::string_view text);
BamConfig load_config(const std::string& path_or_preset);

// "train.lr=0.01"-style overrides; unknown keys are rejected.
BamConfig apply_overrides(const BamConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace bam
