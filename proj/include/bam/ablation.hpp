#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bam/config.hpp"
#include "bam/data_synth.hpp"
#include "bam/metrics.hpp"

namespace bam {

// Variant names: baseline, fa, fa_be, bfa_be (localization comparison) and
// bd_fc, bd_inter, bd_intra, bd_be (boundary-head comparison; bd_be is the
// same model as bfa_be and reuses its run).
std::vector<std::string> ablation_variant_names();
BamConfig ablation_config(const std::string& variant, const BamConfig& base);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  EvalReport authenticity;
  std::optional<EvalReport> boundary;
};

std::vector<AblationRow> run_ablation(const Corpus& corpus, const BamConfig& base,
                                      const std::vector<std::string>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::ostream* log = nullptr);

std::string ablation_csv_header();
std::string ablation_csv_row(const AblationRow& row);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct AblationSummary {
  std::string variant;
  std::size_t runs = 0;
  double median_auth_eer = 0.0;
  double median_auth_f1 = 0.0;
  double median_bd_eer = 0.0;  // NaN without a boundary head
};

// Parses an ablation CSV and reduces it to per-variant medians, in first-seen order.
std::vector<AblationSummary> summarize_ablation_csv(const std::string& csv);

}  // namespace bam
