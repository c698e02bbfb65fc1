#include "bam/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace bam {

namespace {

std::size_t hop_samples(const BamConfig& cfg) { return frame_samples(cfg.sample_rate, cfg.hop_ms); }

// Spans restricted to [offset, offset + length), rebased to 0.
std::vector<Span> crop_spans(const std::vector<Span>& spans, std::size_t offset,
                             std::size_t length) {
  std::vector<Span> out;
  const std::size_t end = offset + length;
  for (const auto& s : spans) {
    const std::size_t a = std::max(s.start, offset);
    const std::size_t b = std::min(s.end, end);
    if (a < b) out.push_back({a - offset, b - offset, s.cls});
  }
  return out;
}

}  // namespace

std::vector<PreparedUtterance> prepare_split(const Corpus& corpus, const std::string& split,
                                             const BamConfig& cfg) {
  std::vector<PreparedUtterance> out;
  for (const ManifestEntry* e : corpus.split(split)) {
    if (e->sample_rate != cfg.sample_rate) {
      throw std::invalid_argument("utterance " + e->id + " is sampled at " +
                                  std::to_string(e->sample_rate) + " Hz but the config expects " +
                                  std::to_string(cfg.sample_rate));
    }
    PreparedUtterance p;
    p.id = e->id;
    p.spans = e->spans;
    p.num_samples = e->num_samples;
    p.sample_rate = e->sample_rate;
    if (cfg.frontend == FrontendKind::kEncoder) {
      const Utterance u = corpus.load(*e);
      p.signal = normalize_waveform(u.samples);
      p.length = p.signal.size();
    } else {
      const FeatureFile f = read_features(corpus.dir / "features" / (e->id + ".bamf"));
      const std::size_t want = cfg.feature_dim == 0 ? cfg.dim : cfg.feature_dim;
      if (f.dim != want) {
        throw std::invalid_argument("features for " + e->id + " have D=" +
                                    std::to_string(f.dim) + ", config expects " +
                                    std::to_string(want));
      }
      p.signal.assign(f.values.begin(), f.values.end());
      p.length = f.frames;
    }
    out.push_back(std::move(p));
  }
  return out;
}

Batch make_training_batch(const std::vector<const PreparedUtterance*>& utts,
                          const BamModel& model, Rng& rng) {
  const BamConfig& cfg = model.config();
  const bool features = cfg.frontend == FrontendKind::kFeatures;
  const std::size_t hop = hop_samples(cfg);
  const std::size_t crop_samples =
      static_cast<std::size_t>(std::llround(cfg.crop_seconds * cfg.sample_rate));
  // Crop length in input units (samples or feature frames).
  const std::size_t crop = features ? crop_samples / hop : crop_samples;
  const std::size_t width = features ? (cfg.feature_dim == 0 ? cfg.dim : cfg.feature_dim) : 1;
  const std::size_t t = model.output_frames(crop);
  const std::size_t unit = features ? hop : 1;  // samples per input unit

  Batch batch;
  std::vector<double> input(utts.size() * crop * width, 0.0);
  batch.y.assign(utts.size() * t, 0);
  batch.b.assign(utts.size() * t, 0);
  batch.weights.assign(utts.size() * t, 0.0);
  for (std::size_t k = 0; k < utts.size(); ++k) {
    const PreparedUtterance& u = *utts[k];
    std::size_t offset = 0;
    if (u.length > crop) {
      std::uniform_int_distribution<std::size_t> pick(0, u.length - crop);
      offset = pick(rng);
    }
    const std::size_t real = std::min(crop, u.length - offset);
    std::copy_n(u.signal.begin() + static_cast<std::ptrdiff_t>(offset * width), real * width,
                input.begin() + static_cast<std::ptrdiff_t>(k * crop * width));
    const std::size_t real_samples = std::min(real * unit, u.num_samples - offset * unit);
    const FrameLabelSet labels =
        frame_labels(crop_spans(u.spans, offset * unit, real_samples), real_samples,
                     cfg.sample_rate, cfg.resolution_ms());
    const std::size_t valid = std::min(labels.frames(), t);
    for (std::size_t i = 0; i < valid; ++i) {
      batch.y[k * t + i] = labels.y[i];
      batch.b[k * t + i] = labels.b[i];
      batch.weights[k * t + i] = 1.0;
    }
    batch.valid_frames.push_back(valid);
  }
  Shape shape = features ? Shape{utts.size(), crop, width} : Shape{utts.size(), crop};
  batch.input = Tensor::from_vector(std::move(shape), std::move(input));
  return batch;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["dev_eer"] = std::isnan(r.dev_eer) ? nlohmann::ordered_json(nullptr)
                                       : nlohmann::ordered_json(r.dev_eer);
  j["dev_f1"] = r.dev_f1;
  return j.dump();
}

UtteranceScores score_utterance(BamModel& model, const PreparedUtterance& utt) {
  const BamConfig& cfg = model.config();
  NoGradGuard no_grad;
  Tensor input;
  if (cfg.frontend == FrontendKind::kEncoder) {
    input = Tensor::from_vector({1, utt.length}, utt.signal);
  } else {
    const std::size_t width = utt.length == 0 ? 0 : utt.signal.size() / utt.length;
    input = Tensor::from_vector({1, utt.length, width}, utt.signal);
  }
  const FramePrediction pred = model.forward(input, false);
  UtteranceScores s;
  s.id = utt.id;
  s.spoof = pred.spoof_probability();
  s.boundary = pred.boundary_probability();
  s.num_samples = utt.num_samples;
  s.sample_rate = utt.sample_rate;
  s.spans = utt.spans;
  return s;
}

std::vector<UtteranceScores> score_utterances(BamModel& model,
                                              const std::vector<PreparedUtterance>& utts) {
  std::vector<UtteranceScores> out;
  out.reserve(utts.size());
  for (const auto& u : utts) {
    if (u.length < model.min_input_length()) continue;
    out.push_back(score_utterance(model, u));
  }
  return out;
}

std::vector<double> repool_scores(const std::vector<double>& scores, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("repool factor must be >= 1");
  std::vector<double> out(scores.size() / factor);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = *std::max_element(scores.begin() + static_cast<std::ptrdiff_t>(i * factor),
                               scores.begin() + static_cast<std::ptrdiff_t>((i + 1) * factor));
  }
  return out;
}

std::vector<EvalReport> evaluate_scores(const std::vector<UtteranceScores>& scores,
                                        double native_ms, const EvalOptions& options) {
  std::vector<double> resolutions = options.resolutions_ms;
  if (resolutions.empty()) resolutions.push_back(native_ms);
  const bool with_boundary = !scores.empty() && !scores.front().boundary.empty();
  std::vector<EvalReport> reports;
  for (double r : resolutions) {
    const double ratio = r / native_ms;
    const auto factor = static_cast<std::size_t>(std::llround(ratio));
    if (factor < 1 || std::abs(ratio - static_cast<double>(factor)) > 1e-9) {
      throw std::invalid_argument("resolution " + std::to_string(r) +
                                  " ms is not a whole multiple of the model's native " +
                                  std::to_string(native_ms) + " ms");
    }
    ScoredFrames auth, bound;
    for (const auto& s : scores) {
      const FrameLabelSet labels = frame_labels(s.spans, s.num_samples, s.sample_rate, r);
      std::vector<double> a = repool_scores(s.spoof, factor);
      const std::size_t n = std::min(a.size(), labels.frames());
      a.resize(n);
      auth.append(a, std::span(labels.y).first(n), s.id);
      if (with_boundary) {
        std::vector<double> b = repool_scores(s.boundary, factor);
        b.resize(n);
        bound.append(b, std::span(labels.b).first(n), s.id);
      }
    }
    reports.push_back(
        make_report(auth, "authenticity", r, options.decision_threshold, options.per_utterance_eer));
    if (with_boundary) {
      reports.push_back(
          make_report(bound, "boundary", r, options.decision_threshold, options.per_utterance_eer));
    }
  }
  return reports;
}

std::vector<EvalReport> evaluate(BamModel& model, const Corpus& corpus, const std::string& split,
                                 const EvalOptions& options) {
  const auto utts = prepare_split(corpus, split, model.config());
  if (utts.empty()) throw std::invalid_argument("split '" + split + "' is empty");
  return evaluate_scores(score_utterances(model, utts), model.config().resolution_ms(), options);
}

namespace {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

TrainResult train(const Corpus& corpus, const BamConfig& cfg, const TrainOptions& options) {
  const auto train_set = prepare_split(corpus, "train", cfg);
  const auto dev_set = prepare_split(corpus, "dev", cfg);
  if (train_set.empty()) throw std::invalid_argument("train split is empty");
  if (dev_set.empty()) throw std::invalid_argument("dev split is empty");

  BamModel model(cfg);
  if (!options.init_from.empty()) {
    const LoadedCheckpoint base = read_checkpoint(options.init_from);
    load_weights(model, base, [&](const std::string& name) {
      for (const auto& p : options.reinit_prefixes) {
        if (name.rfind(p, 0) == 0) return true;
      }
      return false;
    });
  }
  const NamedTensors named = model.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  Adam adam(params, AdamOptions{cfg.lr});
  Rng data_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(options.out_dir / "metrics.jsonl");
    if (!metrics) throw std::runtime_error("cannot write " + (options.out_dir / "metrics.jsonl").string());
  }

  TrainResult result;
  result.best_dev_eer = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  EvalOptions dev_opts;
  dev_opts.decision_threshold = cfg.decision_threshold;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = halving_lr(cfg.lr, epoch, cfg.lr_halving_period);
    adam.set_lr(lr);
    std::shuffle(order.begin(), order.end(), data_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const PreparedUtterance*> members;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        members.push_back(&train_set[order[k]]);
      }
      const Batch batch = make_training_batch(members, model, data_rng);
      Tensor teacher;
      if (cfg.teacher_forcing) {
        std::vector<double> tb(batch.b.begin(), batch.b.end());
        teacher = Tensor::from_vector({members.size(), tb.size() / members.size()}, tb);
      }
      const FramePrediction pred = model.forward(batch.input, true, batch.valid_frames, teacher);
      const LossParts loss = total_loss(pred, batch.y, batch.b, batch.weights, cfg.lambda);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      adam.zero_grad();
      loss.total.backward();
      adam.step();
      loss_sum += value;
      ++batches;
    }

    const auto dev_reports =
        evaluate_scores(score_utterances(model, dev_set), cfg.resolution_ms(), dev_opts);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.dev_eer = dev_reports.front().eer;
    rec.dev_f1 = dev_reports.front().prf.f1;
    result.history.push_back(rec);
    if (metrics.is_open()) metrics << epoch_record_json(rec) << '\n' << std::flush;
    if (options.log) *options.log << epoch_record_json(rec) << '\n' << std::flush;

    const double score = std::isnan(rec.dev_eer) ? 1.0 : rec.dev_eer;
    if (!result.best || score < result.best_dev_eer) {
      result.best_dev_eer = score;
      result.best_epoch = epoch;
      result.best = model.clone();
    }
  }
  if (!result.best) result.best = model.clone();

  if (!options.out_dir.empty()) {
    TrainingState state;
    state.epoch = cfg.epochs;
    state.rng_state = rng_state(data_rng);
    state.optimizer_step = adam.step_count();
    state.first_moments = adam.first_moments();
    state.second_moments = adam.second_moments();
    save_checkpoint(options.out_dir / "last.bamc", model, state);
    TrainingState best_state;
    best_state.epoch = result.best_epoch;
    save_checkpoint(options.out_dir / "best.bamc", *result.best, best_state);
  }
  return result;
}

}  // namespace bam
