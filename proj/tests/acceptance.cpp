#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bam/ablation.hpp"
#include "bam/boundary.hpp"
#include "bam/gradcheck.hpp"
#include "bam/labeling.hpp"
#include "bam/metrics.hpp"
#include "bam/training.hpp"
#include "oracles.hpp"

using namespace bam;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("[%s] %2d %s: %s\n", o.passed ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.passed) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome gradient_integrity(std::uint64_t seed) {
  const auto start = Clock::now();
  const auto entries = run_gradcheck(seed);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name;
  bool all = true;
  for (const auto& e : entries) {
    all = all && e.passed && e.max_rel_error <= 1e-4;
    if (e.max_rel_error >= worst) {
      worst = e.max_rel_error;
      worst_name = e.name;
    }
  }
  return {all && elapsed <= 120.0,
          fmt("%zu checks, worst rel err %.3g (%s), %.1f s (limit 1e-4, 120 s)", entries.size(),
              worst, worst_name.c_str(), elapsed)};
}

Outcome adjacency_oracle() {
  const auto start = Clock::now();
  std::size_t patterns = 0, mismatches = 0;
  for (std::size_t t = 1; t <= 8; ++t) {
    for (unsigned p = 0; p < (1u << t); ++p) {
      const auto b = oracles::bit_pattern(p, t);
      const AdjacencyMatrix a = adjacency(b);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j)
          if (a.at(i, j) != oracles::adjacency_entry(b, i, j)) ++mismatches;
      ++patterns;
    }
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed <= 10.0,
          fmt("%zu patterns, %zu mismatching entries, %.3f s (limit 10 s)", patterns, mismatches,
              elapsed)};
}

Outcome mask_isolation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double leak = 0.0, allzero_gap = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 2 + rng() % 11;
    const std::size_t d = 2 + rng() % 6;
    const std::size_t heads = 1 + rng() % 2;
    Rng init(rng());
    BoundaryFrameAttention bfa(d, heads, 2, init);
    std::vector<double> dec(t);
    for (auto& v : dec) v = rng() % 3 == 0 ? 1.0 : 0.0;
    const Tensor decisions = Tensor::from_vector({1, t}, dec);
    const Tensor mask = adjacency_mask(decisions);
    const AdjacencyMatrix a = adjacency(std::span<const double>(dec));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> f(t * d);
    for (auto& v : f) v = normal(rng);
    const Tensor frames = Tensor::from_vector({1, t, d}, f);
    NoGradGuard guard;
    const Tensor base = bfa(frames, mask, false, MaskMode::kExclude);
    const std::size_t j = rng() % t;
    std::vector<double> g = f;
    for (std::size_t k = 0; k < d; ++k) g[j * d + k] += normal(rng);
    const Tensor moved = bfa(Tensor::from_vector({1, t, d}, g), mask, false, MaskMode::kExclude);
    for (std::size_t i = 0; i < t; ++i) {
      if (a.at(i, j)) continue;
      ++checked;
      for (std::size_t k = 0; k < d; ++k) {
        leak = std::max(leak, std::abs(moved.at({0, i, k}) - base.at({0, i, k})));
      }
    }
    const Tensor zero_mask = adjacency_mask(Tensor::zeros({1, t}));
    const Tensor masked = bfa(frames, zero_mask, false, MaskMode::kExclude);
    const Tensor plain = bfa(frames, Tensor(), false, MaskMode::kExclude);
    for (std::size_t k = 0; k < masked.numel(); ++k) {
      allzero_gap = std::max(allzero_gap, std::abs(masked.data()[k] - plain.data()[k]));
    }
  }
  return {leak <= 1e-12 && allzero_gap <= 1e-12 && checked > 0,
          fmt("200 trials, %zu isolated (i,j) pairs, max leak %.3g, all-zero mask gap %.3g "
              "(limit 1e-12)",
              checked, leak, allzero_gap)};
}

Outcome metric_oracle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 80;
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng() % 2;
      s[i] = trial % 3 == 0 ? static_cast<double>(rng() % 6)
                            : std::normal_distribution<double>(l[i] ? 0.8 : 0.0, 1.0)(rng);
    }
    l[0] = 0;
    l[1] = 1;
    if (compute_eer(s, l).eer != oracles::brute_force_eer(s, l)) ++mismatches;
  }
  const std::vector<std::uint8_t> l = {0, 0, 1, 1};
  const bool hand = compute_eer(std::vector<double>{0.1, 0.2, 0.8, 0.9}, l).eer == 0.0 &&
                    compute_eer(std::vector<double>{0.9, 0.8, 0.2, 0.1}, l).eer == 1.0 &&
                    compute_eer(std::vector<double>{0.5, 0.5, 0.5, 0.5}, l).eer == 0.5;
  return {mismatches == 0 && hand,
          fmt("1000 random sets, %zu mismatches; hand cases 0 / 1 / 0.5 %s", mismatches,
              hand ? "exact" : "WRONG")};
}

Outcome label_correctness(std::uint64_t seed) {
  bool ok = true;
  std::string why;
  {
    const std::vector<Span> spans = {{0, 2400, SpanClass::kGenuine},
                                     {2400, 4800, SpanClass::kSpoof}};
    const FrameLabelSet l = frame_labels(spans, 4800, 8000, 160);
    if (l.y != std::vector<std::uint8_t>{0, 1, 1} || l.b != std::vector<std::uint8_t>{0, 1, 0}) {
      ok = false;
      why += " straddle-case";
    }
    const std::vector<Span> edge = {{0, 2560, SpanClass::kGenuine},
                                    {2560, 5120, SpanClass::kSpoof}};
    const FrameLabelSet e = frame_labels(edge, 5120, 8000, 160);
    if (e.y != std::vector<std::uint8_t>{0, 0, 1, 1} ||
        e.b != std::vector<std::uint8_t>{0, 0, 0, 0}) {
      ok = false;
      why += " edge-case";
    }
  }
  SynthConfig sc;
  sc.seed = seed;
  std::size_t implication_violations = 0, repool_mismatches = 0, caveat_windows = 0;
  for (std::size_t u = 0; u < 100; ++u) {
    const Utterance utt = synthesize_utterance(sc, u);
    for (double res : {20.0, 40.0, 80.0, 160.0, 320.0, 640.0}) {
      const FrameLabelSet l = frame_labels(utt, res);
      for (std::size_t t = 0; t < l.frames(); ++t)
        if (l.b[t] && !l.y[t]) ++implication_violations;
    }
    const FrameLabelSet fine = frame_labels(utt, 160);
    const FrameLabelSet direct = frame_labels(utt, 320);
    const FrameLabelSet pooled = repool_labels(fine, 2);
    if (direct.frames() != pooled.frames() || direct.y != pooled.y) {
      ++repool_mismatches;
      continue;
    }
    for (std::size_t t = 0; t < direct.frames(); ++t) {
      bool inner_edge = false;
      for (std::size_t s = 1; s < utt.spans.size(); ++s)
        inner_edge = inner_edge || utt.spans[s].start == t * 2560 + 1280;
      if (inner_edge) {
        ++caveat_windows;
        if (!direct.b[t]) ++repool_mismatches;
      } else if (direct.b[t] != pooled.b[t]) {
        ++repool_mismatches;
      }
    }
  }
  ok = ok && implication_violations == 0 && repool_mismatches == 0;
  return {ok, fmt("window cases %s; B=>Y violations %zu; repool mismatches %zu over 100 "
                  "utterances (%zu edge-aligned windows)",
                  why.empty() ? "exact" : why.c_str(), implication_violations, repool_mismatches,
                  caveat_windows)};
}

Outcome stop_gradient_contract(const Corpus& corpus) {
  BamConfig cfg = BamConfig::desk();
  cfg.lambda = 0.0;
  BamModel model(cfg);
  const auto utts = prepare_split(corpus, "train", cfg);
  std::vector<const PreparedUtterance*> batch;
  for (std::size_t i = 0; i < cfg.batch_size && i < utts.size(); ++i) batch.push_back(&utts[i]);
  Rng rng(cfg.seed);
  const Batch b = make_training_batch(batch, model, rng);
  const NamedTensors named = model.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  Adam adam(params, AdamOptions{cfg.lr});
  const NamedTensors head = model.boundary_head_parameters();
  std::vector<std::vector<double>> before;
  for (const auto& p : head) before.push_back(p.tensor.to_vector());

  adam.zero_grad();
  const FramePrediction pred = model.forward(b.input, true, b.valid_frames);
  total_loss(pred, b.y, b.b, b.weights, cfg.lambda).total.backward();
  double head_grad = 0.0, other_grad = 0.0;
  for (const auto& p : head)
    for (double g : p.tensor.grad()) head_grad = std::max(head_grad, std::abs(g));
  for (const auto& p : named)
    for (double g : p.tensor.grad()) other_grad += std::abs(g);
  adam.step();
  bool unchanged = true;
  for (std::size_t k = 0; k < head.size(); ++k) {
    unchanged = unchanged && head[k].tensor.to_vector() == before[k];
  }
  return {head_grad == 0.0 && unchanged && other_grad > 0.0,
          fmt("lambda=0: max |grad| over %zu head tensors = %g, head unchanged after step: %s, "
              "rest of model gradient mass %.3g",
              head.size(), head_grad, unchanged ? "yes" : "no", other_grad)};
}

Outcome multi_resolution(const Corpus& corpus, const fs::path& work) {
  BamConfig cfg = BamConfig::desk();
  cfg.stride = 1;  // native 20 ms
  BamModel model(cfg);
  EvalOptions opts;
  opts.resolutions_ms = {20, 40, 80, 160, 320, 640};
  const auto reports = evaluate(model, corpus, "eval", opts);
  std::ofstream csv(work / "resolutions.csv");
  csv << report_csv_header() << '\n';
  for (const auto& r : reports) csv << report_csv_row(r) << '\n';

  std::size_t mismatches = 0, rows = 0;
  for (const auto& r : reports) {
    // floor(floor(n / hop) / factor) summed over utterances.
    const std::size_t factor = static_cast<std::size_t>(r.resolution_ms / 20.0);
    std::size_t expected = 0;
    for (const auto* e : corpus.split("eval")) expected += e->num_samples / 160 / factor;
    if (r.frames != expected) ++mismatches;
    ++rows;
  }
  return {rows == 12 && mismatches == 0,
          fmt("%zu rows (authenticity + boundary x 6 resolutions) in %s, %zu frame-count "
              "mismatches",
              rows, (work / "resolutions.csv").string().c_str(), mismatches)};
}

struct Medians {
  std::map<std::string, AblationSummary> by_variant;
  const AblationSummary& at(const std::string& v) const { return by_variant.at(v); }
};

Medians medians(const std::string& csv) {
  Medians m;
  for (const auto& s : summarize_ablation_csv(csv)) m.by_variant[s.variant] = s;
  return m;
}

Outcome ablation_ordering(const Medians& m, double elapsed) {
  const double base = m.at("baseline").median_auth_eer;
  const double fa = m.at("fa").median_auth_eer;
  const double fa_be = m.at("fa_be").median_auth_eer;
  const double bfa_be = m.at("bfa_be").median_auth_eer;
  const bool order = bfa_be <= fa_be && fa_be <= fa && fa <= base;
  const bool margin = base - bfa_be >= 0.01;
  return {order && margin && elapsed <= 1800.0,
          fmt("median EER %% bfa_be %.2f <= fa_be %.2f <= fa %.2f <= baseline %.2f: %s; "
              "margin %.2f points (need >= 1); %.0f s (limit 1800 s)",
              100 * bfa_be, 100 * fa_be, 100 * fa, 100 * base, order ? "yes" : "no",
              100 * (base - bfa_be), elapsed)};
}

Outcome boundary_ordering(const Medians& m) {
  const double be = m.at("bd_be").median_bd_eer;
  const double inter = m.at("bd_inter").median_bd_eer;
  const double intra = m.at("bd_intra").median_bd_eer;
  const double fc = m.at("bd_fc").median_bd_eer;
  const double mid = std::min(inter, intra);
  const bool ok = be <= mid && mid <= fc;
  return {ok, fmt("median boundary EER %% be %.2f <= min(inter %.2f, intra %.2f) <= fc %.2f", 100 * be,
                  100 * inter, 100 * intra, 100 * fc)};
}

std::string run_ablation_csv(const Corpus& corpus, const BamConfig& base,
                             const std::vector<std::uint64_t>& seeds, double& elapsed) {
  const auto start = Clock::now();
  const auto rows = run_ablation(corpus, base, ablation_variant_names(), seeds, &std::cerr);
  elapsed = seconds_since(start);
  return ablation_csv(rows);
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Acceptance suite: one PASS/FAIL line per criterion"};
  std::string work_dir = "acceptance_work";
  std::size_t epochs = 10;
  std::vector<int> only;
  bool skip_ablation = false;
  app.add_option("--work-dir", work_dir, "Scratch directory for the corpus and CSVs");
  app.add_option("--epochs", epochs, "Training epochs per ablation run");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_flag("--skip-ablation", skip_ablation, "Skip criteria 6, 7 and 10");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) {
    if (skip_ablation && (id == 6 || id == 7 || id == 10)) return false;
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  const fs::path work(work_dir);
  fs::create_directories(work);
  const std::uint64_t seed = 1;

  if (wanted(1)) report(1, "gradient integrity", gradient_integrity(7));
  if (wanted(2)) report(2, "adjacency oracle", adjacency_oracle());
  if (wanted(3)) report(3, "mask isolation", mask_isolation(seed));
  if (wanted(4)) report(4, "metric oracle", metric_oracle(seed));
  if (wanted(5)) report(5, "label correctness", label_correctness(seed));

  const bool need_corpus = wanted(6) || wanted(7) || wanted(8) || wanted(9) || wanted(10);
  if (need_corpus) {
    // The default synthetic corpus: 600 utterances, generator seed 42.
    const SynthConfig sc;
    const fs::path corpus_dir = work / "corpus";
    fs::remove_all(corpus_dir);
    const Corpus corpus = generate_corpus(sc, corpus_dir);

    if (wanted(8)) report(8, "stop-gradient contract", stop_gradient_contract(corpus));
    if (wanted(9)) report(9, "multi-resolution harness", multi_resolution(corpus, work));

    if (wanted(6) || wanted(7) || wanted(10)) {
      BamConfig base = BamConfig::desk();
      base.epochs = epochs;
      const std::vector<std::uint64_t> seeds = {1, 2, 3};
      double elapsed = 0.0;
      const std::string first = run_ablation_csv(corpus, base, seeds, elapsed);
      std::ofstream(work / "ablation.csv") << first;
      const Medians m = medians(first);
      if (wanted(6)) report(6, "ablation ordering", ablation_ordering(m, elapsed));
      if (wanted(7)) report(7, "boundary-head ordering", boundary_ordering(m));
      if (wanted(10)) {
        double again_elapsed = 0.0;
        const std::string second = run_ablation_csv(corpus, base, seeds, again_elapsed);
        std::ofstream(work / "ablation_repeat.csv") << second;
        report(10, "determinism",
               {first == second,
                fmt("repeated ablation CSV (%zu bytes) %s", first.size(),
                    first == second ? "byte-identical" : "DIFFERS")});
      }
    }
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
