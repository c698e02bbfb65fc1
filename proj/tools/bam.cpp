// Command-line front end: gen-data, train, eval, ablate, gradcheck, report.

#include <malloc.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bam/ablation.hpp"
#include "bam/checkpoint.hpp"
#include "bam/config.hpp"
#include "bam/data_synth.hpp"
#include "bam/gradcheck.hpp"
#include "bam/labeling.hpp"
#include "bam/training.hpp"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<double, double> parse_range(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const double v = std::stod(text);
      return {v, v};
    }
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError(std::string(what) + " expects LO:HI, got '" + text + "'");
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        out.push_back(cell);
      } else if constexpr (std::is_floating_point_v<T>) {
        out.push_back(std::stod(cell));
      } else {
        out.push_back(static_cast<T>(std::stoull(cell)));
      }
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": cannot parse '" + cell + "'");
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bam::BamConfig resolve_config(const std::string& source, const std::vector<std::string>& sets) {
  bam::BamConfig cfg = bam::apply_overrides(bam::load_config(source), sets);
  if (const char* env = std::getenv("BAM_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("BAM_SEED is not an integer: '") + env + "'");
    }
  }
  return cfg;
}

std::string reports_csv(const std::vector<bam::EvalReport>& reports) {
  std::string out = bam::report_csv_header() + "\n";
  for (const auto& r : reports) out += bam::report_csv_row(r) + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap instead of fresh mmaps per op.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Boundary-aware attention for partially spoofed audio localization"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic spliced corpus");
  std::string gen_out;
  bam::SynthConfig synth;
  std::string duration = "1.6:4.0", spoof_ratio = "0.2:0.6";
  bool dump_labels = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-utts", synth.n_utts, "Number of utterances");
  gen->add_option("--seed", synth.seed, "Corpus seed");
  gen->add_option("--sample-rate", synth.sample_rate, "Sample rate in Hz");
  gen->add_option("--duration", duration, "Duration range in seconds, LO:HI");
  gen->add_option("--spoof-ratio", spoof_ratio, "Spoofed fraction range, LO:HI");
  gen->add_option("--crossfade", synth.crossfade_samples, "Splice cross-fade in samples");
  gen->add_option("--genuine-only", synth.genuine_only_fraction,
                  "Fraction of fully genuine utterances");
  gen->add_flag("--dump-labels", dump_labels, "Also write labels.jsonl at 160 ms");

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_corpus, tr_out, tr_config = "desk", tr_init;
  std::vector<std::string> tr_sets, tr_reinit;
  tr->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  tr->add_option("--out", tr_out, "Run directory")->required();
  tr->add_option("--config", tr_config, "Config file or preset (desk, paper)");
  tr->add_option("--set", tr_sets, "Override, section.key=value (repeatable)");
  tr->add_option("--init-from", tr_init, "Warm-start checkpoint");
  tr->add_option("--reinit", tr_reinit, "Parameter-name prefixes to keep freshly initialized");
  bool tr_quiet = false;
  tr->add_flag("--quiet", tr_quiet, "No per-epoch output");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_corpus, ev_split = "eval", ev_res, ev_csv, ev_json;
  double ev_threshold = -1;
  bool ev_per_utt = false;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  ev->add_option("--split", ev_split, "Split to score (train, dev, eval)");
  ev->add_option("--resolutions", ev_res, "Comma-separated resolutions in ms");
  ev->add_option("--csv", ev_csv, "Write CSV report here (default stdout)");
  ev->add_option("--json", ev_json, "Also write a JSON report");
  ev->add_option("--threshold", ev_threshold, "Decision threshold for P/R/F1");
  ev->add_flag("--per-utterance-eer", ev_per_utt, "Average per-utterance EERs");

  // init (fresh checkpoint)
  auto* in = app.add_subcommand("init", "Write an untrained checkpoint");
  std::string in_out, in_config = "desk";
  std::vector<std::string> in_sets;
  in->add_option("--out", in_out, "Checkpoint file")->required();
  in->add_option("--config", in_config, "Config file or preset");
  in->add_option("--set", in_sets, "Override, section.key=value (repeatable)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  std::string ab_corpus, ab_out, ab_config = "desk";
  std::string ab_variants = "baseline,fa,fa_be,bfa_be,bd_fc,bd_inter,bd_intra,bd_be";
  std::string ab_seeds = "1,2,3";
  std::vector<std::string> ab_sets;
  bool ab_quiet = false;
  ab->add_option("--corpus", ab_corpus, "Corpus directory")->required();
  ab->add_option("--out", ab_out, "Output CSV")->required();
  ab->add_option("--config", ab_config, "Config file or preset");
  ab->add_option("--set", ab_sets, "Override, section.key=value (repeatable)");
  ab->add_option("--variants", ab_variants, "Comma-separated variants");
  ab->add_option("--seeds", ab_seeds, "Comma-separated seeds");
  ab->add_flag("--quiet", ab_quiet, "No progress output");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string gc_corrupt;
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "Random seed");
  gc->add_option("--corrupt-op", gc_corrupt, "Test fixture: corrupt one backward rule")
      ->group("");

  // report
  auto* rp = app.add_subcommand("report", "Summarize an ablation CSV");
  std::string rp_csv;
  rp->add_option("csv", rp_csv, "Ablation CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) {
      const auto [dlo, dhi] = parse_range(duration, "--duration");
      const auto [slo, shi] = parse_range(spoof_ratio, "--spoof-ratio");
      synth.min_seconds = dlo;
      synth.max_seconds = dhi;
      synth.min_spoof_ratio = slo;
      synth.max_spoof_ratio = shi;
      const bam::Corpus corpus = bam::generate_corpus(synth, gen_out);
      if (dump_labels) {
        std::string text;
        for (const auto& e : corpus.entries) {
          const auto labels = bam::frame_labels(e.spans, e.num_samples, e.sample_rate, 160.0);
          text += bam::label_dump_json(e.id, labels) + "\n";
        }
        write_text((std::filesystem::path(gen_out) / "labels.jsonl").string(), text);
      }
      std::cout << "wrote " << corpus.entries.size() << " utterances to " << gen_out << "\n";
    } else if (*tr) {
      const bam::BamConfig cfg = resolve_config(tr_config, tr_sets);
      const bam::Corpus corpus = bam::open_corpus(tr_corpus);
      bam::TrainOptions opts;
      opts.out_dir = tr_out;
      opts.log = tr_quiet ? nullptr : &std::cout;
      opts.init_from = tr_init;
      opts.reinit_prefixes = tr_reinit;
      std::filesystem::create_directories(tr_out);
      write_text((std::filesystem::path(tr_out) / "config.json").string(),
                 bam::config_to_json(cfg) + "\n");
      const auto result = bam::train(corpus, cfg, opts);
      std::cout << "best epoch " << result.best_epoch << ", dev EER " << result.best_dev_eer
                << "; checkpoint " << (std::filesystem::path(tr_out) / "best.bamc").string()
                << "\n";
    } else if (*ev) {
      bam::BamModel model = bam::load_model(ev_ckpt);
      const bam::Corpus corpus = bam::open_corpus(ev_corpus);
      bam::EvalOptions opts;
      opts.resolutions_ms = parse_list<double>(ev_res, "--resolutions");
      opts.decision_threshold =
          ev_threshold >= 0 ? ev_threshold : model.config().decision_threshold;
      opts.per_utterance_eer = ev_per_utt;
      const auto reports = bam::evaluate(model, corpus, ev_split, opts);
      const std::string csv = reports_csv(reports);
      if (ev_csv.empty()) {
        std::cout << csv;
      } else {
        write_text(ev_csv, csv);
      }
      if (!ev_json.empty()) write_text(ev_json, bam::reports_to_json(reports) + "\n");
    } else if (*in) {
      const bam::BamModel model(resolve_config(in_config, in_sets));
      bam::save_checkpoint(in_out, model);
      std::cout << "wrote " << in_out << "\n";
    } else if (*ab) {
      const bam::BamConfig cfg = resolve_config(ab_config, ab_sets);
      const auto variants = parse_list<std::string>(ab_variants, "--variants");
      const auto seeds = parse_list<std::uint64_t>(ab_seeds, "--seeds");
      if (variants.empty() || seeds.empty()) throw UsageError("need variants and seeds");
      for (const auto& v : variants) {
        try {
          bam::ablation_config(v, cfg);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      const bam::Corpus corpus = bam::open_corpus(ab_corpus);
      const auto rows =
          bam::run_ablation(corpus, cfg, variants, seeds, ab_quiet ? nullptr : &std::cerr);
      write_text(ab_out, bam::ablation_csv(rows));
      std::cout << "wrote " << rows.size() << " rows to " << ab_out << "\n";
    } else if (*gc) {
      if (!gc_corrupt.empty()) bam::debug::set_corrupted_backward(gc_corrupt);
      const auto entries = bam::run_gradcheck(gc_seed);
      bool ok = true;
      for (const auto& e : entries) {
        std::printf("%-4s %-7s %-26s max_rel_err=%.3e coords=%zu\n", e.passed ? "ok" : "FAIL",
                    e.suite.c_str(), e.name.c_str(), e.max_rel_error, e.coordinates);
        ok = ok && e.passed;
      }
      if (!ok) {
        std::string failed;
        for (const auto& e : entries) {
          if (!e.passed) failed += (failed.empty() ? "" : ", ") + e.name;
        }
        std::cerr << "gradcheck failed: " << failed << "\n";
        return kRuntimeFailure;
      }
      std::printf("all %zu checks within %.0e\n", entries.size(), bam::kGradcheckTolerance);
    } else if (*rp) {
      const auto summary = bam::summarize_ablation_csv(read_text(rp_csv));
      std::printf("%-10s %4s %12s %12s %12s\n", "variant", "runs", "auth_eer", "auth_f1",
                  "bd_eer");
      for (const auto& s : summary) {
        std::printf("%-10s %4zu %12.4f %12.4f %12.4f\n", s.variant.c_str(), s.runs,
                    s.median_auth_eer, s.median_auth_f1, s.median_bd_eer);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const bam::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return 0;
}
