#include "bam/data_synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

namespace bam {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using Rng64 = std::mt19937_64;

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Splits `total` into `count` parts, each at least `min_part`.
std::vector<std::size_t> random_split(std::size_t total, std::size_t count, std::size_t min_part,
                                      Rng64& rng) {
  std::vector<std::size_t> parts(count, min_part);
  if (count == 0) return parts;
  const std::size_t spare = total - count * min_part;
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> w(count);
  double wsum = 0.0;
  for (auto& x : w) {
    x = u(rng);
    wsum += x;
  }
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const auto extra = static_cast<std::size_t>(std::floor(static_cast<double>(spare) * w[i] / wsum));
    parts[i] += extra;
    used += extra;
  }
  parts[count - 1] += spare - used;
  return parts;
}

struct Voice {
  double f0_base = 150.0;
  double tilt = 1.0;
  double vib_rate = 5.0;
  double vib_depth = 0.01;
  double am_rate = 3.0;
  double am_depth = 0.3;
  double am_phase = 0.0;
};

// Renders samples [from, to) of one segment's signal.
std::vector<double> render_segment(const SynthConfig& cfg, const Voice& voice, SpanClass cls,
                                   double tilt_shift, std::size_t from, std::size_t to,
                                   Rng64& rng) {
  std::vector<double> out(to - from);
  const double sr = cfg.sample_rate;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double f0 = voice.f0_base * (0.9 + 0.2 * u01(rng));
  const double vib_phase = 2.0 * std::numbers::pi * u01(rng);
  const double tilt = cls == SpanClass::kSpoof ? voice.tilt - tilt_shift : voice.tilt;
  const auto partials = static_cast<std::size_t>(
      std::max(1.0, std::floor(0.45 * sr / (f0 * (1.0 + 1.5 * voice.vib_depth)))));

  std::vector<std::complex<double>> coef(partials);
  double power = 0.0;
  for (std::size_t k = 0; k < partials; ++k) {
    const double amp = std::pow(static_cast<double>(k + 1), -tilt);
    // Genuine partials share one phase; spoofed partials are phase-randomized.
    const double phase = cls == SpanClass::kSpoof ? 2.0 * std::numbers::pi * u01(rng)
                                                  : std::numbers::pi / 2.0;
    coef[k] = std::polar(amp, phase);
    power += 0.5 * amp * amp;
  }
  const double norm = 1.0 / std::sqrt(power);

  // One-pole low-pass noise scaled to the configured RMS.
  constexpr double kPole = 0.8;
  std::normal_distribution<double> white(0.0, cfg.noise_level *
                                                  std::sqrt((1.0 + kPole) / (1.0 - kPole)));
  double noise = 0.0;
  double theta = 2.0 * std::numbers::pi * u01(rng);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double t = static_cast<double>(from + n) / sr;
    const double f =
        f0 * (1.0 + voice.vib_depth * std::sin(2.0 * std::numbers::pi * voice.vib_rate * t + vib_phase));
    theta += 2.0 * std::numbers::pi * f / sr;
    if (theta > 2.0 * std::numbers::pi) theta -= 2.0 * std::numbers::pi;
    const std::complex<double> z = std::polar(1.0, theta);
    std::complex<double> zk = z;
    double acc = 0.0;
    for (std::size_t k = 0; k < partials; ++k) {
      acc += (zk * coef[k]).imag();
      zk *= z;
    }
    noise = kPole * noise + (1.0 - kPole) * white(rng);
    const double env =
        1.0 + voice.am_depth * std::sin(2.0 * std::numbers::pi * voice.am_rate * t + voice.am_phase);
    out[n] = env * (acc * norm + noise);
  }
  return out;
}

}  // namespace

std::string to_string(SpanClass cls) { return cls == SpanClass::kSpoof ? "spoof" : "genuine"; }

SpanClass span_class_from_string(const std::string& name) {
  if (name == "genuine") return SpanClass::kGenuine;
  if (name == "spoof") return SpanClass::kSpoof;
  throw std::invalid_argument("unknown span class '" + name + "'");
}

void validate_spans(const std::vector<Span>& spans, std::size_t num_samples) {
  if (spans.empty()) {
    if (num_samples == 0) return;
    throw SpanError("no spans cover " + std::to_string(num_samples) + " samples");
  }
  if (spans.front().start != 0) {
    throw SpanError("span 0 starts at " + std::to_string(spans.front().start) + ", not 0");
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].end <= spans[i].start) {
      throw SpanError("span " + std::to_string(i) + " is empty or reversed");
    }
    if (i == 0) continue;
    if (spans[i].start < spans[i - 1].end) {
      throw SpanError("spans " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
    }
    if (spans[i].start > spans[i - 1].end) {
      throw SpanError("gap between spans " + std::to_string(i - 1) + " and " + std::to_string(i));
    }
    if (spans[i].cls == spans[i - 1].cls) {
      throw SpanError("spans " + std::to_string(i - 1) + " and " + std::to_string(i) +
                      " have the same class");
    }
  }
  if (spans.back().end != num_samples) {
    throw SpanError("span " + std::to_string(spans.size() - 1) + " ends at " +
                    std::to_string(spans.back().end) + ", expected " +
                    std::to_string(num_samples));
  }
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["sample_rate"] = e.sample_rate;
    j["num_samples"] = e.num_samples;
    j["split"] = e.split;
    auto spans = ordered_json::array();
    for (const auto& s : e.spans) spans.push_back({s.start, s.end, to_string(s.cls)});
    j["spans"] = std::move(spans);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.id = j.at("id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.sample_rate = j.at("sample_rate").get<int>();
      e.num_samples = j.at("num_samples").get<std::size_t>();
      e.split = j.at("split").get<std::string>();
      for (const auto& s : j.at("spans")) {
        if (!s.is_array() || s.size() != 3) throw std::invalid_argument("span must be [start,end,class]");
        e.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(),
                           span_class_from_string(s.at(2).get<std::string>())});
      }
      validate_spans(e.spans, e.num_samples);
    } catch (const std::exception& ex) {
      throw ManifestError(lineno, ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_waveform(const fs::path& path, const std::vector<float>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write waveform " + path.string());
  for (float s : samples) put_f32(out, s);
  if (!out) throw std::runtime_error("failed writing waveform " + path.string());
}

std::vector<float> read_waveform(const fs::path& path, std::size_t num_samples) {
  const auto bytes = slurp(path);
  if (bytes.size() != num_samples * 4) {
    throw std::runtime_error("waveform " + path.string() + " holds " +
                             std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(num_samples * 4));
  }
  std::vector<float> out(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) out[i] = get_f32(bytes.data() + 4 * i);
  return out;
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_utts < 1) throw std::invalid_argument("n-utts must be at least 1");
  if (cfg.sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (!(cfg.min_seconds > 0) || !(cfg.max_seconds >= cfg.min_seconds)) {
    throw std::invalid_argument("degenerate duration range");
  }
  if (cfg.min_spoof_ratio < 0 || cfg.max_spoof_ratio > 1 ||
      cfg.min_spoof_ratio > cfg.max_spoof_ratio) {
    throw std::invalid_argument("spoof ratio range must satisfy 0 <= lo <= hi <= 1");
  }
  if (static_cast<double>(cfg.crossfade_samples) >
      cfg.min_segment_seconds * cfg.sample_rate) {
    throw std::invalid_argument("cross-fade longer than the minimum segment");
  }
}

Utterance synthesize_utterance(const SynthConfig& cfg, std::size_t index) {
  Rng64 rng(cfg.seed ^ static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  Utterance utt;
  char id[32];
  std::snprintf(id, sizeof(id), "utt%05zu", index);
  utt.id = id;
  utt.sample_rate = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(
      std::llround(uniform(cfg.min_seconds, cfg.max_seconds) * cfg.sample_rate));
  const auto min_seg = static_cast<std::size_t>(
      std::llround(cfg.min_segment_seconds * cfg.sample_rate));

  const bool genuine_only = u01(rng) < cfg.genuine_only_fraction;
  const double ratio = uniform(cfg.min_spoof_ratio, cfg.max_spoof_ratio);
  std::size_t spoof_total = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::size_t k = 1 + static_cast<std::size_t>(u01(rng) * static_cast<double>(cfg.max_spoof_segments));
  k = std::min(k, cfg.max_spoof_segments);
  const bool lead = u01(rng) < 0.8;
  const bool tail = u01(rng) < 0.8;
  auto fits = [&](std::size_t kk) {
    const std::size_t ends = (lead ? 1 : 0) + (tail ? 1 : 0);
    return spoof_total >= kk * min_seg && n - spoof_total >= (kk - 1 + ends) * min_seg;
  };
  while (k > 0 && !fits(k)) --k;

  if (genuine_only || spoof_total == 0 || k == 0) {
    utt.spans.push_back({0, n, SpanClass::kGenuine});
  } else {
    const std::size_t genuine_parts = (k - 1) + (lead ? 1 : 0) + (tail ? 1 : 0);
    auto spoof = random_split(spoof_total, k, min_seg, rng);
    auto genuine = random_split(n - spoof_total, genuine_parts, min_seg, rng);
    if (genuine_parts == 0 && n - spoof_total > 0) {
      spoof.back() += n - spoof_total;  // single spoof segment over the whole utterance
    }
    std::size_t pos = 0;
    std::size_t gi = 0;
    auto push = [&](std::size_t len, SpanClass cls) {
      if (len == 0) return;
      utt.spans.push_back({pos, pos + len, cls});
      pos += len;
    };
    if (lead) push(genuine[gi++], SpanClass::kGenuine);
    for (std::size_t s = 0; s < k; ++s) {
      push(spoof[s], SpanClass::kSpoof);
      if (s + 1 < k) push(genuine[gi++], SpanClass::kGenuine);
    }
    if (tail) push(genuine[gi++], SpanClass::kGenuine);
  }

  Voice voice;
  voice.f0_base = uniform(cfg.min_f0, cfg.max_f0);
  voice.tilt = uniform(cfg.min_tilt, cfg.max_tilt);
  voice.vib_rate = uniform(4.0, 7.0);
  voice.vib_depth = uniform(0.005, 0.02);
  voice.am_rate = uniform(2.0, 5.0);
  voice.am_depth = uniform(0.1, 0.4);
  voice.am_phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt_shift = uniform(cfg.min_tilt_shift, cfg.max_tilt_shift);
  const double gain = uniform(0.05, 0.2);

  // Each splice point s is blended linearly over [s - c/2, s + c - c/2).
  const std::size_t fade = cfg.crossfade_samples;
  const std::size_t fade_lo = fade / 2;
  const std::size_t fade_hi = fade - fade_lo;
  std::vector<double> wave(n, 0.0);
  for (const auto& span : utt.spans) {
    const std::size_t from = span.start == 0 ? 0 : span.start - std::min(span.start, fade_lo);
    const std::size_t to = span.end == n ? n : std::min(n, span.end + fade_hi);
    const auto seg = render_segment(cfg, voice, span.cls, tilt_shift, from, to, rng);
    for (std::size_t i = from; i < to; ++i) {
      double w = 1.0;
      if (span.start != 0 && i < span.start + fade_hi) {
        w = std::min(w, (static_cast<double>(i) - static_cast<double>(span.start) +
                         static_cast<double>(fade_lo) + 0.5) / static_cast<double>(fade));
      }
      if (span.end != n && i + fade_lo >= span.end) {
        w = std::min(w, (static_cast<double>(span.end) + static_cast<double>(fade_hi) -
                         static_cast<double>(i) - 0.5) / static_cast<double>(fade));
      }
      wave[i] += w * seg[i - from];
    }
  }
  double peak = 0.0;
  for (double x : wave) peak = std::max(peak, std::abs(x));
  const double g = peak > 0 ? std::min(gain, 0.95 / peak) : gain;
  utt.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) utt.samples[i] = static_cast<float>(g * wave[i]);
  validate_spans(utt.spans, n);
  return utt;
}

std::vector<const ManifestEntry*> Corpus::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

Utterance Corpus::load(const ManifestEntry& entry) const {
  Utterance u;
  u.id = entry.id;
  u.sample_rate = entry.sample_rate;
  u.spans = entry.spans;
  u.samples = read_waveform(dir / entry.path, entry.num_samples);
  return u;
}

Corpus generate_corpus(const SynthConfig& cfg, const fs::path& dir) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(dir / "wav", ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<std::size_t> order(cfg.n_utts);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng64 split_rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<std::string> split(cfg.n_utts);
  const std::size_t n_train = cfg.n_utts * 70 / 100;
  const std::size_t n_dev = cfg.n_utts * 15 / 100;
  for (std::size_t r = 0; r < order.size(); ++r) {
    split[order[r]] = r < n_train ? "train" : (r < n_train + n_dev ? "dev" : "eval");
  }

  Corpus corpus;
  corpus.dir = dir;
  for (std::size_t i = 0; i < cfg.n_utts; ++i) {
    Utterance u = synthesize_utterance(cfg, i);
    ManifestEntry e;
    e.id = u.id;
    e.path = "wav/" + u.id + ".f32";
    e.sample_rate = u.sample_rate;
    e.num_samples = u.samples.size();
    e.split = split[i];
    e.spans = u.spans;
    write_waveform(dir / e.path, u.samples);
    corpus.entries.push_back(std::move(e));
  }
  write_manifest(dir / kManifestName, corpus.entries);
  return corpus;
}

Corpus open_corpus(const fs::path& dir) {
  Corpus c;
  c.dir = dir;
  c.entries = read_manifest(dir / kManifestName);
  return c;
}

FeatureFile read_features(const fs::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = slurp(path);
  } catch (const std::exception& ex) {
    throw FeatureFileError(FeatureFileError::Kind::kIo, ex.what());
  }
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BAMF", 4) != 0) {
    throw FeatureFileError(FeatureFileError::Kind::kBadMagic,
                           path.string() + ": missing BAMF magic");
  }
  if (bytes.size() < 12) {
    throw FeatureFileError(FeatureFileError::Kind::kTruncated, path.string() + ": truncated header");
  }
  FeatureFile f;
  f.frames = get_u32(bytes.data() + 4);
  f.dim = get_u32(bytes.data() + 8);
  const std::uint64_t count = static_cast<std::uint64_t>(f.frames) * f.dim;
  if (bytes.size() - 12 < count * 4) {
    throw FeatureFileError(FeatureFileError::Kind::kTruncated,
                           path.string() + ": payload holds " + std::to_string(bytes.size() - 12) +
                               " bytes, expected " + std::to_string(count * 4));
  }
  f.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    f.values[i] = get_f32(bytes.data() + 12 + 4 * i);
    if (!std::isfinite(f.values[i])) {
      throw FeatureFileError(FeatureFileError::Kind::kNonFinite,
                             path.string() + ": non-finite value at index " + std::to_string(i));
    }
  }
  return f;
}

void write_features(const fs::path& path, const FeatureFile& features) {
  if (features.values.size() != static_cast<std::size_t>(features.frames) * features.dim) {
    throw std::invalid_argument("feature file value count does not equal frames*dim");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError(FeatureFileError::Kind::kIo, "cannot write " + path.string());
  out.write("BAMF", 4);
  put_u32(out, features.frames);
  put_u32(out, features.dim);
  for (float v : features.values) put_f32(out, v);
}

}  // namespace bam
