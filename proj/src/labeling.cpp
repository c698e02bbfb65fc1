#include "bam/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace bam {

std::size_t frame_samples(int sample_rate, double resolution_ms) {
  const double exact = resolution_ms * sample_rate / 1000.0;
  const double rounded = std::round(exact);
  if (!(resolution_ms > 0) || rounded < 1 || std::abs(exact - rounded) > 1e-9) {
    throw std::invalid_argument("resolution " + std::to_string(resolution_ms) +
                                " ms is not a whole number of samples at " +
                                std::to_string(sample_rate) + " Hz");
  }
  return static_cast<std::size_t>(rounded);
}

FrameLabelSet frame_labels(const std::vector<Span>& spans, std::size_t num_samples,
                           int sample_rate, double resolution_ms) {
  const std::size_t width = frame_samples(sample_rate, resolution_ms);
  const std::size_t frames = num_samples / width;
  FrameLabelSet out;
  out.resolution_ms = resolution_ms;
  out.y.assign(frames, 0);
  out.b.assign(frames, 0);
  // Count spoofed samples per frame by walking spans once.
  std::vector<std::size_t> spoofed(frames, 0);
  for (const auto& span : spans) {
    if (span.cls != SpanClass::kSpoof) continue;
    std::size_t pos = span.start;
    const std::size_t end = std::min(span.end, frames * width);
    while (pos < end) {
      const std::size_t t = pos / width;
      const std::size_t frame_end = std::min(end, (t + 1) * width);
      spoofed[t] += frame_end - pos;
      pos = frame_end;
    }
  }
  for (std::size_t t = 0; t < frames; ++t) {
    out.y[t] = spoofed[t] > 0 ? 1 : 0;
    out.b[t] = spoofed[t] > 0 && spoofed[t] < width ? 1 : 0;
  }
  return out;
}

FrameLabelSet frame_labels(const Utterance& utt, double resolution_ms) {
  return frame_labels(utt.spans, utt.samples.size(), utt.sample_rate, resolution_ms);
}

FrameLabelSet repool_labels(const FrameLabelSet& labels, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("repool factor must be >= 1");
  FrameLabelSet out;
  out.resolution_ms = labels.resolution_ms * static_cast<double>(factor);
  const std::size_t frames = labels.frames() / factor;
  out.y.assign(frames, 0);
  out.b.assign(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = t * factor; k < (t + 1) * factor; ++k) {
      out.y[t] = std::max(out.y[t], labels.y[k]);
      out.b[t] = std::max(out.b[t], labels.b[k]);
    }
  }
  return out;
}

FrameLabelSet labels_from_segments(const std::vector<std::uint8_t>& segment_y,
                                   double resolution_ms) {
  FrameLabelSet out;
  out.resolution_ms = resolution_ms;
  out.y = segment_y;
  out.b.assign(segment_y.size(), 0);
  for (std::size_t t = 1; t < segment_y.size(); ++t) {
    if (segment_y[t] != segment_y[t - 1]) {
      out.b[t] = 1;
      out.y[t] = 1;
    }
  }
  return out;
}

std::string label_dump_json(const std::string& id, const FrameLabelSet& labels) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["resolution_ms"] = labels.resolution_ms;
  j["Y"] = labels.y;
  j["B"] = labels.b;
  return j.dump();
}

}  // namespace bam
