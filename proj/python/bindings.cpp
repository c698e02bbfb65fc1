#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bam/ablation.hpp"
#include "bam/boundary.hpp"
#include "bam/gradcheck.hpp"
#include "bam/labeling.hpp"
#include "bam/metrics.hpp"
#include "bam/training.hpp"

namespace py = pybind11;
using namespace bam;

namespace {

std::vector<Span> spans_from_tuples(const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& t) {
  std::vector<Span> spans;
  for (const auto& [start, end, cls] : t) spans.push_back({start, end, span_class_from_string(cls)});
  return spans;
}

py::list spans_to_tuples(const std::vector<Span>& spans) {
  py::list out;
  for (const auto& s : spans) out.append(py::make_tuple(s.start, s.end, to_string(s.cls)));
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["task"] = r.task;
  d["resolution_ms"] = r.resolution_ms;
  d["frames"] = r.frames;
  d["eer"] = r.eer;
  d["f1"] = r.prf.f1;
  d["precision"] = r.prf.precision;
  d["recall"] = r.prf.recall;
  d["threshold"] = r.threshold;
  return d;
}

}  // namespace

PYBIND11_MODULE(_bam, m) {
  m.doc() = "Boundary-aware attention for locating spoofed regions in audio";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SpanError>(m, "SpanError", PyExc_ValueError);

  m.def(
      "compute_eer",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        const EerResult r = compute_eer(scores, labels);
        return py::make_tuple(r.eer, r.threshold);
      },
      py::arg("scores"), py::arg("labels"),
      "Frame EER with spoof as the positive class; returns (eer, threshold).");

  m.def(
      "frame_labels",
      [](const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& spans,
         std::size_t num_samples, int sample_rate, double resolution_ms) {
        const auto s = spans_from_tuples(spans);
        validate_spans(s, num_samples);
        const FrameLabelSet l = frame_labels(s, num_samples, sample_rate, resolution_ms);
        return py::make_tuple(l.y, l.b);
      },
      py::arg("spans"), py::arg("num_samples"), py::arg("sample_rate"), py::arg("resolution_ms"),
      "Per-frame (Y, B) from [(start, end, 'genuine'|'spoof'), ...].");

  m.def(
      "adjacency",
      [](const std::vector<std::uint8_t>& decisions) {
        const AdjacencyMatrix a = adjacency(decisions);
        std::vector<std::vector<int>> rows(a.frames, std::vector<int>(a.frames));
        for (std::size_t i = 0; i < a.frames; ++i)
          for (std::size_t j = 0; j < a.frames; ++j) rows[i][j] = a.at(i, j);
        return rows;
      },
      py::arg("decisions"), "Boundary adjacency matrix for 0/1 frame decisions.");

  m.def(
      "synthesize_utterance",
      [](std::uint64_t seed, std::size_t index) {
        SynthConfig cfg;
        cfg.seed = seed;
        const Utterance u = synthesize_utterance(cfg, index);
        py::dict d;
        d["sample_rate"] = u.sample_rate;
        d["samples"] = u.samples;
        d["spans"] = spans_to_tuples(u.spans);
        return d;
      },
      py::arg("seed") = 42, py::arg("index") = 0);

  m.def(
      "generate_corpus",
      [](const std::filesystem::path& out, std::size_t n_utts, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.n_utts = n_utts;
        cfg.seed = seed;
        return generate_corpus(cfg, out).entries.size();
      },
      py::arg("out"), py::arg("n_utts") = 600, py::arg("seed") = 42);

  m.def("default_config", [](const std::string& preset) { return config_to_json(load_config(preset)); },
        py::arg("preset") = "desk", "Config JSON for the 'desk' or 'paper' preset.");

  m.def(
      "train",
      [](const std::filesystem::path& corpus, const std::filesystem::path& out,
         const std::vector<std::string>& overrides) {
        const BamConfig cfg = apply_overrides(BamConfig::desk(), overrides);
        TrainOptions opts;
        opts.out_dir = out;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(open_corpus(corpus), cfg, opts);
        }
        py::list history;
        for (const auto& e : r.history) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["lr"] = e.lr;
          d["train_loss"] = e.train_loss;
          d["dev_eer"] = e.dev_eer;
          d["dev_f1"] = e.dev_f1;
          history.append(d);
        }
        return history;
      },
      py::arg("corpus"), py::arg("out"), py::arg("overrides") = std::vector<std::string>{},
      "Trains with 'section.key=value' overrides; writes best.bamc and last.bamc under out.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& corpus,
         const std::string& split, const std::vector<double>& resolutions) {
        BamModel model = load_model(checkpoint);
        EvalOptions opts;
        opts.resolutions_ms = resolutions;
        opts.decision_threshold = model.config().decision_threshold;
        std::vector<EvalReport> reports;
        {
          py::gil_scoped_release release;
          reports = evaluate(model, open_corpus(corpus), split, opts);
        }
        py::list out;
        for (const auto& r : reports) out.append(report_dict(r));
        return out;
      },
      py::arg("checkpoint"), py::arg("corpus"), py::arg("split") = "eval",
      py::arg("resolutions") = std::vector<double>{});

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& e : run_gradcheck(seed)) {
          py::dict d;
          d["suite"] = e.suite;
          d["name"] = e.name;
          d["max_rel_error"] = e.max_rel_error;
          d["passed"] = e.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 7);
}
