#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "twohop/common.hpp"
#include "twohop/corpus.hpp"
#include "twohop/model.hpp"

namespace twohop {

// per-example exact-match outcomes for each defined hop and the composition
struct HopResults {
  std::vector<std::pair<Hop, bool>> hops;
  bool composition = false;

  bool all_hops() const {
    for (const auto& [h, ok] : hops)
      if (!ok) return false;
    return true;
  }
};

struct GapReport {
  std::string task;
  int n_total = 0;
  int n_all_hops = 0;
  int n_all_hops_and_comp = 0;
  std::optional<double> gap;  // empty when n_all_hops == 0 (undefined, never 0)

  double hops_fraction() const {
    return n_total == 0 ? 0.0 : static_cast<double>(n_all_hops) / n_total;
  }
  double comp_fraction() const {
    return n_total == 0 ? 0.0 : static_cast<double>(n_all_hops_and_comp) / n_total;
  }
  std::optional<double> comp_given_hops() const {
    if (n_all_hops == 0) return std::nullopt;
    return static_cast<double>(n_all_hops_and_comp) / n_all_hops;
  }
};

// case-sensitive equality after trimming surrounding whitespace and
// truncating at the first newline
bool exact_match(const std::string& prediction, const std::string& gold);

struct EvalOptions {
  int k = 10;                  // in-context examples per prompt
  int max_answer_tokens = 8;
  bool shared_hop_seed = false;  // reuse one ICL seed across hops of an example
};

HopResults evaluate_example(const Model& model, const TaskDataset& task, const Example& example,
                            std::uint64_t seed, const EvalOptions& opts = {});

GapReport compositionality_gap(std::span<const HopResults> results);

struct Band {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

struct AggregateBands {
  int n_tasks = 0;
  Band hops_fraction;
  Band comp_fraction;
  Band comp_given_hops;
  Band gap;
  int n_gap_defined = 0;  // tasks contributing to the gap band
};

// per-model medians and interquartile ranges across per-task reports
AggregateBands aggregate_models(std::span<const GapReport> per_task);

// squared Pearson r between all-hops fraction and composition-given-hops
PearsonResult hops_vs_comp_correlation(std::span<const GapReport> per_task);

std::string gap_report_to_json(const GapReport& report);
std::string gap_reports_to_tsv(std::span<const GapReport> reports);
GapReport gap_report_from_json(const std::string& text);

}  // namespace twohop
