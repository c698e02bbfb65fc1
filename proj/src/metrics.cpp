#include "bam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace bam {

void ScoredFrames::append(std::span<const double> s, std::span<const std::uint8_t> l,
                          const std::string& utterance_id) {
  if (s.size() != l.size()) throw std::invalid_argument("scores and labels differ in length");
  scores.insert(scores.end(), s.begin(), s.end());
  labels.insert(labels.end(), l.begin(), l.end());
  if (!utterance_id.empty() || !utterance_ids.empty()) {
    utterance_ids.resize(scores.size() - s.size());
    utterance_ids.insert(utterance_ids.end(), s.size(), utterance_id);
  }
}

EerResult compute_eer(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("compute_eer: scores and labels differ in length");
  }
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw std::invalid_argument("compute_eer: non-finite score");
    positives += labels[i] ? 1 : 0;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("compute_eer: EER undefined without both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Threshold at the lowest score: everything accepted.
  std::int64_t fp = negatives;
  std::int64_t fn = 0;
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  EerResult best;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    // |FAR - FRR| scaled by P*N keeps the comparison exact.
    const std::int64_t gap = std::abs(fp * positives - fn * negatives);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = threshold;
      best.eer = 0.5 * (static_cast<double>(fp) / static_cast<double>(negatives) +
                        static_cast<double>(fn) / static_cast<double>(positives));
    }
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]]) {
        ++fn;
      } else {
        --fp;
      }
      ++i;
    }
  }
  return best;
}

EerResult compute_eer(const ScoredFrames& frames) {
  return compute_eer(frames.scores, frames.labels);
}

double compute_eer_per_utterance(const ScoredFrames& frames) {
  if (frames.utterance_ids.size() != frames.size()) {
    throw std::invalid_argument("per-utterance EER needs utterance ids on every frame");
  }
  std::map<std::string, std::pair<std::vector<double>, std::vector<std::uint8_t>>> groups;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& g = groups[frames.utterance_ids[i]];
    g.first.push_back(frames.scores[i]);
    g.second.push_back(frames.labels[i]);
  }
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [id, g] : groups) {
    const auto pos = std::count(g.second.begin(), g.second.end(), 1);
    if (pos == 0 || pos == static_cast<long>(g.second.size())) continue;
    total += compute_eer(g.first, g.second).eer;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no utterance contains both classes");
  return total / static_cast<double>(count);
}

PrfResult compute_prf(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double threshold) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("compute_prf: scores and labels differ in length");
  }
  PrfResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++r.tp;
    if (predicted && !actual) ++r.fp;
    if (!predicted && actual) ++r.fn;
    if (!predicted && !actual) ++r.tn;
  }
  const double tp = static_cast<double>(r.tp);
  r.precision = r.tp + r.fp > 0 ? tp / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? tp / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

EvalReport make_report(const ScoredFrames& frames, std::string task, double resolution_ms,
                       double threshold, bool per_utterance_eer) {
  EvalReport r;
  r.task = std::move(task);
  r.resolution_ms = resolution_ms;
  r.frames = frames.size();
  r.threshold = threshold;
  r.prf = compute_prf(frames.scores, frames.labels, threshold);
  try {
    if (per_utterance_eer) {
      r.eer = compute_eer_per_utterance(frames);
      r.eer_threshold = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto e = compute_eer(frames);
      r.eer = e.eer;
      r.eer_threshold = e.threshold;
    }
  } catch (const std::invalid_argument&) {
    r.eer = std::numeric_limits<double>::quiet_NaN();
    r.eer_threshold = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

std::string report_csv_header() {
  return "resolution_ms,task,eer,f1,precision,recall,threshold,frames";
}

std::string report_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%g,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%zu", r.resolution_ms,
                r.task.c_str(), r.eer, r.prf.f1, r.prf.precision, r.prf.recall, r.threshold,
                r.frames);
  return buf;
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  auto arr = nlohmann::ordered_json::array();
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["resolution_ms"] = r.resolution_ms;
    j["frames"] = r.frames;
    j["eer"] = num(r.eer);
    j["eer_threshold"] = num(r.eer_threshold);
    j["f1"] = r.prf.f1;
    j["precision"] = r.prf.precision;
    j["recall"] = r.prf.recall;
    j["threshold"] = r.threshold;
    j["positive_class"] = "spoof";
    j["counts"] = {{"tp", r.prf.tp}, {"fp", r.prf.fp}, {"tn", r.prf.tn}, {"fn", r.prf.fn}};
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace bam
