#include "bam/ablation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "bam/training.hpp"

namespace bam {

std::vector<std::string> ablation_variant_names() {
  return {"baseline", "fa", "fa_be", "bfa_be", "bd_fc", "bd_inter", "bd_intra", "bd_be"};
}

BamConfig ablation_config(const std::string& variant, const BamConfig& base) {
  BamConfig c = base;
  if (variant == "baseline" || variant == "fa" || variant == "fa_be" || variant == "bfa_be") {
    c.variant = variant_from_string(variant);
    c.boundary_head = BoundaryHeadKind::kBoth;
  } else if (variant == "bd_fc" || variant == "bd_inter" || variant == "bd_intra" ||
             variant == "bd_be") {
    c.variant = Variant::kBfaBe;
    c.boundary_head = variant == "bd_be" ? BoundaryHeadKind::kBoth
                                         : boundary_head_from_string(variant.substr(3));
  } else {
    throw std::invalid_argument("unknown ablation variant '" + variant + "'");
  }
  c.validate();
  return c;
}

std::vector<AblationRow> run_ablation(const Corpus& corpus, const BamConfig& base,
                                      const std::vector<std::string>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::ostream* log) {
  for (const auto& v : variants) ablation_config(v, base);
  const auto eval_set = prepare_split(corpus, "eval", base);
  if (eval_set.empty()) throw std::invalid_argument("eval split is empty");
  EvalOptions opts;
  opts.decision_threshold = base.decision_threshold;

  // Identical configurations (bfa_be and bd_be) train once.
  std::map<std::string, AblationRow> done;
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    for (auto seed : seeds) {
      BamConfig cfg = ablation_config(v, base);
      cfg.seed = seed;
      const std::string key = config_to_json(cfg, -1);
      auto it = done.find(key);
      if (it == done.end()) {
        if (log) *log << "[ablate] variant=" << v << " seed=" << seed << '\n' << std::flush;
        TrainResult tr = train(corpus, cfg, TrainOptions{});
        const auto reports =
            evaluate_scores(score_utterances(*tr.best, eval_set), cfg.resolution_ms(), opts);
        AblationRow row;
        row.seed = seed;
        row.best_epoch = tr.best_epoch;
        row.authenticity = reports.at(0);
        if (reports.size() > 1) row.boundary = reports.at(1);
        it = done.emplace(key, row).first;
      }
      AblationRow row = it->second;
      row.variant = v;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_csv_header() {
  return "variant,seed,best_epoch,auth_eer,auth_f1,auth_precision,auth_recall,"
         "bd_eer,bd_f1,bd_precision,bd_recall";
}

std::string ablation_csv_row(const AblationRow& r) {
  char buf[512];
  const auto& a = r.authenticity;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const EvalReport* b = r.boundary ? &*r.boundary : nullptr;
  std::snprintf(buf, sizeof(buf), "%s,%llu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.best_epoch, a.eer,
                a.prf.f1, a.prf.precision, a.prf.recall, b ? b->eer : nan, b ? b->prf.f1 : nan,
                b ? b->prf.precision : nan, b ? b->prf.recall : nan);
  return buf;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = ablation_csv_header() + "\n";
  for (const auto& r : rows) out += ablation_csv_row(r) + "\n";
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<AblationSummary> summarize_ablation_csv(const std::string& csv) {
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line != ablation_csv_header()) {
    throw std::invalid_argument("not an ablation CSV (header mismatch)");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::array<double, 3>>> cols;
  std::size_t lineno = 1;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 11) {
      throw std::invalid_argument("ablation CSV line " + std::to_string(lineno) +
                                  ": expected 11 columns");
    }
    if (!cols.count(cells[0])) order.push_back(cells[0]);
    cols[cells[0]].push_back({std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[7])});
  }
  std::vector<AblationSummary> out;
  for (const auto& v : order) {
    const auto& rows = cols[v];
    std::vector<double> eer, f1, bd;
    for (const auto& r : rows) {
      eer.push_back(r[0]);
      f1.push_back(r[1]);
      bd.push_back(r[2]);
    }
    out.push_back({v, rows.size(), median(eer), median(f1), median(bd)});
  }
  return out;
}

}  // namespace bam
