#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bam/data_synth.hpp"

namespace bam {

// Per-frame authenticity (0 genuine, 1 spoof) and boundary labels.
// A boundary frame is one whose window holds samples of both classes; it is
// always labeled spoof. Frames next to a boundary frame are not boundaries.
struct FrameLabelSet {
  double resolution_ms = 0.0;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> b;

  std::size_t frames() const { return y.size(); }
  friend bool operator==(const FrameLabelSet&, const FrameLabelSet&) = default;
};

// Samples per frame; throws unless resolution_ms maps to a whole positive
// number of samples at `sample_rate`.
std::size_t frame_samples(int sample_rate, double resolution_ms);

// T = floor(num_samples / frame_samples); the trailing partial frame is dropped.
FrameLabelSet frame_labels(const std::vector<Span>& spans, std::size_t num_samples,
                           int sample_rate, double resolution_ms);
FrameLabelSet frame_labels(const Utterance& utt, double resolution_ms);

// Coarse frame t covers fine frames [t*factor, (t+1)*factor); max rule.
FrameLabelSet repool_labels(const FrameLabelSet& labels, std::size_t factor);

// For data that only carries per-frame segment labels: B = 1 on the first
// frame of every new segment, and that frame is forced to spoof.
FrameLabelSet labels_from_segments(const std::vector<std::uint8_t>& segment_y,
                                   double resolution_ms);

// One JSON object: {id, resolution_ms, Y, B}.
std::string label_dump_json(const std::string& id, const FrameLabelSet& labels);

}  // namespace bam
