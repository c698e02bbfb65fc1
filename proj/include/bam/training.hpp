#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bam/checkpoint.hpp"
#include "bam/data_synth.hpp"
#include "bam/labeling.hpp"
#include "bam/metrics.hpp"
#include "bam/model.hpp"

namespace bam {

// One model-ready utterance: normalized waveform (or external features) plus
// labels at the model's native resolution.
struct PreparedUtterance {
  std::string id;
  std::vector<double> signal;  // waveform samples, or row-major T_in x D_in features
  std::size_t length = 0;      // samples, or feature frames
  std::vector<Span> spans;
  std::size_t num_samples = 0;
  int sample_rate = 0;
};

// Loads a split; external features are read from <corpus>/features/<id>.bamf.
std::vector<PreparedUtterance> prepare_split(const Corpus& corpus, const std::string& split,
                                             const BamConfig& cfg);

struct Batch {
  Tensor input;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> b;
  std::vector<double> weights;  // 1 for real frames, 0 for padding
  std::vector<std::size_t> valid_frames;
};

// Fixed-length crops: a random window when longer, right zero-padding when
// shorter. Offsets are drawn from `rng` in batch order.
Batch make_training_batch(const std::vector<const PreparedUtterance*>& utts,
                          const BamModel& model, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_eer = 0.0;
  double dev_f1 = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::ostream* log = nullptr;    // progress lines
  // Optional warm start; parameters whose name starts with a listed prefix
  // keep their fresh initialization.
  std::filesystem::path init_from;
  std::vector<std::string> reinit_prefixes;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_eer = 0.0;
  std::optional<BamModel> best;  // weights of the best-dev epoch
};

// Writes <out_dir>/best.bamc, last.bamc and metrics.jsonl when out_dir is set.
TrainResult train(const Corpus& corpus, const BamConfig& cfg, const TrainOptions& options = {});

// Full-length inference on each utterance, eval mode, no graph.
struct UtteranceScores {
  std::string id;
  std::vector<double> spoof;
  std::vector<double> boundary;  // empty without a boundary head
  std::size_t num_samples = 0;
  int sample_rate = 0;
  std::vector<Span> spans;
};

UtteranceScores score_utterance(BamModel& model, const PreparedUtterance& utt);
std::vector<UtteranceScores> score_utterances(BamModel& model,
                                              const std::vector<PreparedUtterance>& utts);

struct EvalOptions {
  std::vector<double> resolutions_ms;  // empty: native only
  double decision_threshold = 0.5;
  bool per_utterance_eer = false;
};

// Authenticity rows, then boundary rows (when available), per resolution.
// Each resolution must be a whole multiple of the native one; scores are
// max-repooled while labels come straight from the sample spans.
std::vector<EvalReport> evaluate_scores(const std::vector<UtteranceScores>& scores,
                                        double native_ms, const EvalOptions& options);

std::vector<EvalReport> evaluate(BamModel& model, const Corpus& corpus, const std::string& split,
                                 const EvalOptions& options);

// Max over consecutive groups of `factor` scores; trailing partial group dropped.
std::vector<double> repool_scores(const std::vector<double>& scores, std::size_t factor);

}  // namespace bam
