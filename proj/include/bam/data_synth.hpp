#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bam {

enum class SpanClass { kGenuine, kSpoof };

std::string to_string(SpanClass cls);
SpanClass span_class_from_string(const std::string& name);

// Half-open sample range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  SpanClass cls = SpanClass::kGenuine;

  friend bool operator==(const Span&, const Span&) = default;
};

class SpanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Spans must tile [0, num_samples) in order with no gap or overlap, and
// neighbours must differ in class. Errors name the offending span indices.
void validate_spans(const std::vector<Span>& spans, std::size_t num_samples);

struct Utterance {
  std::string id;
  int sample_rate = 8000;
  std::vector<float> samples;
  std::vector<Span> spans;
};

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the corpus directory
  int sample_rate = 8000;
  std::size_t num_samples = 0;
  std::string split;  // train | dev | eval
  std::vector<Span> spans;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Raw little-endian float32, no header.
void write_waveform(const std::filesystem::path& path, const std::vector<float>& samples);
std::vector<float> read_waveform(const std::filesystem::path& path, std::size_t num_samples);

struct SynthConfig {
  std::size_t n_utts = 600;
  int sample_rate = 8000;
  double min_seconds = 1.6;
  double max_seconds = 4.0;
  double min_spoof_ratio = 0.2;
  double max_spoof_ratio = 0.6;
  std::uint64_t seed = 42;
  std::size_t crossfade_samples = 0;
  double genuine_only_fraction = 0.1;
  double min_segment_seconds = 0.2;
  std::size_t max_spoof_segments = 3;
  // Harmonic recipe.
  double min_f0 = 80.0;
  double max_f0 = 300.0;
  double min_tilt = 1.0;
  double max_tilt = 1.4;
  double min_tilt_shift = 0.6;
  double max_tilt_shift = 0.9;
  double noise_level = 0.25;
};

void validate(const SynthConfig& cfg);

// Deterministic in (cfg.seed XOR index); independent of every other utterance.
Utterance synthesize_utterance(const SynthConfig& cfg, std::size_t index);

struct Corpus {
  std::filesystem::path dir;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
  Utterance load(const ManifestEntry& entry) const;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

// Writes wav/<id>.f32 files and manifest.jsonl under `dir`; 70/15/15
// train/dev/eval split by utterance.
Corpus generate_corpus(const SynthConfig& cfg, const std::filesystem::path& dir);
Corpus open_corpus(const std::filesystem::path& dir);

// External frame features: "BAMF", u32 frames, u32 dim, frames*dim float32,
// all little-endian, row-major.
struct FeatureFile {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;
};

class FeatureFileError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kNonFinite };
  FeatureFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

FeatureFile read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureFile& features);

}  // namespace bam
