#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bam {

// Corpus-wide pool of frame scores. Spoof (label 1) is the positive class.
struct ScoredFrames {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> utterance_ids;  // per frame; may be left empty

  void append(std::span<const double> s, std::span<const std::uint8_t> l,
              const std::string& utterance_id = {});
  std::size_t size() const { return scores.size(); }
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Sweeps every distinct score as a threshold (decision: score >= threshold).
// Picks the threshold minimizing |FAR - FRR|, lowest threshold on ties, and
// reports (FAR + FRR) / 2 there. Throws if either class is absent.
EerResult compute_eer(std::span<const double> scores, std::span<const std::uint8_t> labels);
EerResult compute_eer(const ScoredFrames& frames);

// Mean of per-utterance EERs over utterances that contain both classes.
double compute_eer_per_utterance(const ScoredFrames& frames);

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

// Degenerate denominators give 0.
PrfResult compute_prf(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double threshold);

struct EvalReport {
  std::string task;  // authenticity | boundary
  double resolution_ms = 0.0;
  std::size_t frames = 0;
  double eer = 0.0;  // NaN when only one class is present
  double eer_threshold = 0.0;
  double threshold = 0.5;  // decision threshold for precision / recall / F1
  PrfResult prf;
};

EvalReport make_report(const ScoredFrames& frames, std::string task, double resolution_ms,
                       double threshold, bool per_utterance_eer = false);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
std::string reports_to_json(const std::vector<EvalReport>& reports);

}  // namespace bam
