#include "bam/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bam {

using nlohmann::ordered_json;

std::string to_string(FrontendKind kind) {
  return kind == FrontendKind::kEncoder ? "encoder" : "features";
}

FrontendKind frontend_kind_from_string(std::string_view name) {
  if (name == "encoder") return FrontendKind::kEncoder;
  if (name == "features") return FrontendKind::kFeatures;
  throw ConfigError("unknown front-end kind '" + std::string(name) +
                    "' (expected encoder or features)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kBaseline:
      return "baseline";
    case Variant::kFa:
      return "fa";
    case Variant::kFaBe:
      return "fa_be";
    case Variant::kBfaBe:
      return "bfa_be";
  }
  return "bfa_be";
}

Variant variant_from_string(std::string_view name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "fa") return Variant::kFa;
  if (name == "fa_be") return Variant::kFaBe;
  if (name == "bfa_be") return Variant::kBfaBe;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected baseline, fa, fa_be or bfa_be)");
}

void BamConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config: " + field + " " + why);
  };
  if (sample_rate <= 0) fail("frontend.sample_rate", "must be positive");
  if (!(hop_ms > 0)) fail("frontend.hop_ms", "must be positive");
  const double hop = static_cast<double>(sample_rate) * hop_ms / 1000.0;
  if (hop != std::floor(hop)) fail("frontend.hop_ms", "is not a whole number of samples");
  if (encoder_channels == 0) fail("frontend.encoder_channels", "must be >= 1");
  if (dim == 0) fail("model.dim", "must be >= 1");
  if (heads == 0) fail("model.heads", "must be >= 1");
  if (blocks == 0) fail("model.blocks", "must be >= 1 (N)");
  if (stride == 0) fail("model.stride", "must be >= 1");
  if (has_boundary_head() &&
      (boundary_head == BoundaryHeadKind::kIntra || boundary_head == BoundaryHeadKind::kBoth) &&
      dim < 3) {
    fail("model.dim", "must be >= 3 for the intra-frame branch");
  }
  if (intra_channels == 0) fail("model.intra_channels", "must be >= 1");
  if (!(boundary_threshold > 0 && boundary_threshold < 1)) {
    fail("model.boundary_threshold", "must lie in (0, 1)");
  }
  if (!(lambda >= 0)) fail("loss.lambda", "must be >= 0");
  if (!(lr > 0)) fail("train.lr", "must be positive");
  if (batch_size == 0) fail("train.batch_size", "must be >= 1");
  if (!(crop_seconds > 0)) fail("train.crop_seconds", "must be positive");
}

BamConfig BamConfig::desk() { return BamConfig{}; }

BamConfig BamConfig::paper() {
  BamConfig c;
  c.frontend = FrontendKind::kFeatures;
  c.sample_rate = 16000;
  c.dim = 1024;
  c.feature_dim = 1024;
  c.lr = 1e-5;
  c.epochs = 50;
  return c;
}

namespace {

ordered_json to_json(const BamConfig& c) {
  ordered_json j;
  j["frontend"] = {{"kind", to_string(c.frontend)},
                   {"sample_rate", c.sample_rate},
                   {"hop_ms", c.hop_ms},
                   {"encoder_channels", c.encoder_channels},
                   {"feature_dim", c.feature_dim}};
  j["model"] = {{"variant", to_string(c.variant)},
                {"dim", c.dim},
                {"heads", c.heads},
                {"blocks", c.blocks},
                {"stride", c.stride},
                {"intra_channels", c.intra_channels},
                {"intra_blocks", c.intra_blocks},
                {"boundary_head", to_string(c.boundary_head)},
                {"mask_mode", to_string(c.mask_mode)},
                {"boundary_threshold", c.boundary_threshold},
                {"teacher_forcing", c.teacher_forcing}};
  j["loss"] = {{"lambda", c.lambda}};
  j["train"] = {{"lr", c.lr},
                {"epochs", c.epochs},
                {"lr_halving_period", c.lr_halving_period},
                {"batch_size", c.batch_size},
                {"crop_seconds", c.crop_seconds},
                {"seed", c.seed}};
  j["eval"] = {{"decision_threshold", c.decision_threshold}};
  return j;
}

template <typename T>
void read(const ordered_json& j, const char* section, const char* key, T& out) {
  if (!j.contains(section)) return;
  const auto& s = j.at(section);
  if (!s.contains(key)) return;
  try {
    out = s.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
  }
}

BamConfig from_json(const ordered_json& j) {
  const ordered_json known = to_json(BamConfig{});
  for (const auto& [section, body] : j.items()) {
    if (!known.contains(section) || !body.is_object()) {
      throw ConfigError("config: unknown section '" + section + "'");
    }
    for (const auto& [key, value] : body.items()) {
      if (!known.at(section).contains(key)) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }
  BamConfig c;
  std::string s;
  s = to_string(c.frontend);
  read(j, "frontend", "kind", s);
  c.frontend = frontend_kind_from_string(s);
  read(j, "frontend", "sample_rate", c.sample_rate);
  read(j, "frontend", "hop_ms", c.hop_ms);
  read(j, "frontend", "encoder_channels", c.encoder_channels);
  read(j, "frontend", "feature_dim", c.feature_dim);
  s = to_string(c.variant);
  read(j, "model", "variant", s);
  c.variant = variant_from_string(s);
  read(j, "model", "dim", c.dim);
  read(j, "model", "heads", c.heads);
  read(j, "model", "blocks", c.blocks);
  read(j, "model", "stride", c.stride);
  read(j, "model", "intra_channels", c.intra_channels);
  read(j, "model", "intra_blocks", c.intra_blocks);
  s = to_string(c.boundary_head);
  read(j, "model", "boundary_head", s);
  c.boundary_head = boundary_head_from_string(s);
  s = to_string(c.mask_mode);
  read(j, "model", "mask_mode", s);
  c.mask_mode = mask_mode_from_string(s);
  read(j, "model", "boundary_threshold", c.boundary_threshold);
  read(j, "model", "teacher_forcing", c.teacher_forcing);
  read(j, "loss", "lambda", c.lambda);
  read(j, "train", "lr", c.lr);
  read(j, "train", "epochs", c.epochs);
  read(j, "train", "lr_halving_period", c.lr_halving_period);
  read(j, "train", "batch_size", c.batch_size);
  read(j, "train", "crop_seconds", c.crop_seconds);
  read(j, "train", "seed", c.seed);
  read(j, "eval", "decision_threshold", c.decision_threshold);
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const BamConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

BamConfig config_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  return from_json(j);
}

BamConfig load_config(const std::string& path_or_preset) {
  if (path_or_preset == "desk") return BamConfig::desk();
  if (path_or_preset == "paper") return BamConfig::paper();
  std::ifstream in(path_or_preset);
  if (!in) throw ConfigError("config: cannot open '" + path_or_preset + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

BamConfig apply_overrides(const BamConfig& cfg, const std::vector<std::string>& overrides) {
  ordered_json j = to_json(cfg);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    const std::string section = o.substr(0, dot);
    const std::string key = o.substr(dot + 1, eq - dot - 1);
    const std::string raw = o.substr(eq + 1);
    if (!j.contains(section) || !j.at(section).contains(key)) {
      throw ConfigError("override names unknown key '" + section + "." + key + "'");
    }
    auto& slot = j[section][key];
    if (slot.is_string()) {
      slot = raw;
    } else {
      try {
        slot = ordered_json::parse(raw);
      } catch (const nlohmann::json::parse_error&) {
        throw ConfigError("override '" + o + "' has a malformed value");
      }
    }
  }
  return from_json(j);
}

}  // namespace bam
