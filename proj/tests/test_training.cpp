#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bam/ablation.hpp"
#include "bam/training.hpp"
#include "doctest.h"

using namespace bam;
namespace fs = std::filesystem;

namespace {

const Corpus& tiny_corpus() {
  static const Corpus corpus = [] {
    const fs::path dir = fs::temp_directory_path() / "bam_test_training_corpus";
    fs::remove_all(dir);
    SynthConfig sc;
    sc.n_utts = 40;
    sc.seed = 11;
    sc.max_seconds = 2.4;
    return generate_corpus(sc, dir);
  }();
  return corpus;
}

BamConfig small(Variant v, std::size_t epochs) {
  BamConfig cfg;
  cfg.variant = v;
  cfg.dim = 8;
  cfg.encoder_channels = 4;
  cfg.intra_channels = 2;
  cfg.intra_blocks = 1;
  cfg.blocks = 1;
  cfg.epochs = epochs;
  cfg.crop_seconds = 1.6;
  cfg.lr = 3e-3;
  return cfg;
}

}  // namespace

TEST_CASE("score repooling") {
  CHECK(repool_scores({0.1, 0.5, 0.3, 0.2, 0.9}, 2) == std::vector<double>{0.5, 0.3});
  CHECK(repool_scores({0.1, 0.5}, 1) == std::vector<double>{0.1, 0.5});
}

TEST_CASE("perfect scores evaluate to eer 0 and f1 1 at every resolution") {
  UtteranceScores s;
  s.id = "u";
  s.sample_rate = 8000;
  s.num_samples = 1280 * 16;
  s.spans = {{0, 1280 * 8, SpanClass::kGenuine}, {1280 * 8, 1280 * 16, SpanClass::kSpoof}};
  const FrameLabelSet l = frame_labels(s.spans, s.num_samples, 8000, 160);
  s.spoof.assign(l.y.begin(), l.y.end());
  s.boundary.assign(l.b.begin(), l.b.end());
  EvalOptions opts;
  opts.resolutions_ms = {160, 320, 640, 1280};
  const auto reports = evaluate_scores({s}, 160, opts);
  REQUIRE(reports.size() == 8);
  for (const auto& r : reports) {
    if (r.task == "authenticity") {
      CHECK(r.eer == 0.0);
      CHECK(r.prf.f1 == 1.0);
      CHECK(r.frames == 16 * 160 / static_cast<std::size_t>(r.resolution_ms));
    }
  }
  opts.resolutions_ms = {200};
  CHECK_THROWS(evaluate_scores({s}, 160, opts));
}

TEST_CASE("training batches crop and pad to a fixed length") {
  const BamConfig cfg = small(Variant::kBfaBe, 1);
  BamModel model(cfg);
  const auto utts = prepare_split(tiny_corpus(), "train", cfg);
  REQUIRE(utts.size() >= 4);
  std::vector<const PreparedUtterance*> batch = {&utts[0], &utts[1], &utts[2]};
  Rng rng(1);
  const Batch b = make_training_batch(batch, model, rng);
  const std::size_t frames = model.output_frames(static_cast<std::size_t>(1.6 * 8000));
  CHECK(b.input.shape() == Shape{3, 12800});
  CHECK(b.y.size() == 3 * frames);
  CHECK(b.b.size() == 3 * frames);
  for (std::size_t i = 0; i < b.y.size(); ++i) {
    if (b.b[i]) CHECK(b.y[i] == 1);
    if (b.weights[i] == 0.0) CHECK(b.y[i] == 0);
  }
}

TEST_CASE("training is deterministic and reduces the loss") {
  const BamConfig cfg = small(Variant::kBfaBe, 4);
  const TrainResult a = train(tiny_corpus(), cfg);
  const TrainResult b = train(tiny_corpus(), cfg);
  REQUIRE(a.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].dev_eer == b.history[i].dev_eer);
  }
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  REQUIRE(a.best.has_value());
  CHECK(a.best_dev_eer == a.history[a.best_epoch].dev_eer);
}

TEST_CASE("training loss falls in most early epochs") {
  const TrainResult r = train(tiny_corpus(), small(Variant::kBfaBe, 6));
  int falls = 0;
  for (std::size_t e = 1; e < r.history.size(); ++e) {
    falls += r.history[e].train_loss < r.history[e - 1].train_loss ? 1 : 0;
  }
  CHECK(falls >= 4);
}

TEST_CASE("fresh model scores near chance") {
  BamModel model(small(Variant::kFa, 1));
  const auto reports = evaluate(model, tiny_corpus(), "eval", {});
  REQUIRE(!reports.empty());
  CHECK(std::abs(reports[0].eer - 0.5) <= 0.2);
}

TEST_CASE("training writes checkpoints and metrics") {
  const fs::path out = fs::temp_directory_path() / "bam_test_train_out";
  fs::remove_all(out);
  TrainOptions opts;
  opts.out_dir = out;
  std::ostringstream log;
  opts.log = &log;
  train(tiny_corpus(), small(Variant::kBaseline, 2), opts);
  CHECK(fs::exists(out / "best.bamc"));
  CHECK(fs::exists(out / "last.bamc"));
  std::ifstream m(out / "metrics.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(m, line)) ++lines;
  CHECK(lines == 2);
  CHECK(!log.str().empty());
}

TEST_CASE("ablation variants and csv") {
  const auto names = ablation_variant_names();
  CHECK(names.size() == 8);
  const BamConfig base = BamConfig::desk();
  CHECK(ablation_config("baseline", base).variant == Variant::kBaseline);
  CHECK(ablation_config("bd_inter", base).boundary_head == BoundaryHeadKind::kInter);
  CHECK(config_to_json(ablation_config("bd_be", base)) ==
        config_to_json(ablation_config("bfa_be", base)));
  CHECK_THROWS(ablation_config("nope", base));

  AblationRow row;
  row.variant = "fa";
  row.seed = 2;
  row.best_epoch = 4;
  row.authenticity.eer = 0.125;
  row.authenticity.prf.f1 = 0.5;
  const std::string csv = ablation_csv({row});
  CHECK(csv.rfind(ablation_csv_header(), 0) == 0);
  const auto summary = summarize_ablation_csv(csv);
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].median_auth_eer == 0.125);
  CHECK(std::isnan(summary[0].median_bd_eer));
}
