#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twohop/gap.hpp"
#include "twohop/lens.hpp"
#include "twohop/linearity.hpp"
#include "twohop/patching.hpp"

namespace twohop {

struct PipelineOptions {
  std::string data_dir = "data";
  int n_examples = 100;  // queries per task; <= 0 means all
  int k = 10;
  std::uint64_t seed = 0;
  int max_answer_tokens = 8;
  bool shared_hop_seed = false;
  bool eligibility_all = false;  // analyze every example, not only successful ones
  int min_examples = 10;         // task-exclusion threshold for aggregation
  bool median_curves = false;
  int n_fit = 100;
  bool fit_bias = true;
  bool score_top1 = false;  // nearest-row accuracy instead of mean cosine
  int patchscope_pairs = 5;
  double patch_min_rr = 0.5;
  bool per_pair_site = false;
  bool allow_f_mismatch = false;
  int max_pairs = 50;  // patched pairs per group
};

// seed stream for one example, stable across stages
std::uint64_t example_seed(const PipelineOptions& opts, const std::string& task_name,
                           const std::string& x);
// the composition prompt exactly as the gap stage evaluated it
PromptInstance composition_prompt(const TaskDataset& task, const Example& e,
                                  std::uint64_t ex_seed, const Model& model,
                                  const PipelineOptions& opts);

struct EvaluatedExample {
  std::size_t index = 0;  // into dataset.examples
  std::uint64_t seed = 0;
  HopResults results;
  bool collision = false;
};

struct TaskRun {
  TaskDataset dataset;
  std::vector<EvaluatedExample> evaluated;
  int n_skipped = 0;  // queries without a sufficient ICL pool
  GapReport gap;
};

TaskRun run_gap_stage(const Model& model, TaskDataset dataset, const PipelineOptions& opts);

struct AnalyzedExample {
  std::size_t index = 0;
  ProcessingSignature sig;
  PresenceScore presence;
  PeakSite peak;
  int span_len = 0;
  bool all_hops_correct = false;
  bool composition_correct = false;
};

struct LensRun {
  std::string decoder;
  std::vector<AnalyzedExample> analyzed;
  AggregateCurves correct_curves;
  AggregateCurves incorrect_curves;
  int n_collisions = 0;

  std::vector<double> presence_values(bool correct_only) const;
  std::optional<double> mean_presence(bool correct_only) const;  // task-level metric
};

LensRun run_lens_stage(const Model& model, const TaskRun& run, const Decoder& decoder,
                       const PipelineOptions& opts);

// examples feeding the linearity fits: successful on all hops and the
// composition, collision-filtered (or merely collision-filtered when
// eligibility_all is set)
std::vector<Example> eligible_examples(const Model& model, const TaskRun& run,
                                       const PipelineOptions& opts);

struct LinearityTaskResult {
  std::string task;
  bool excluded = false;
  std::string exclusion_reason;
  int n_eligible = 0;
  LinearMap map;        // composition map, when not excluded
  double score = 0.0;   // mean cosine (or top-1 accuracy when score_top1)
  std::optional<HopLinearity> hops;
};

LinearityTaskResult run_linearity_stage(const Model& model, const TaskRun& run,
                                        const PipelineOptions& opts, bool with_hops);

struct PatchGroupStats {
  SignatureGroup group = SignatureGroup::excluded;
  int n_pairs = 0;
  std::array<double, kNumCandidates> mean_delta{};
  std::array<double, kNumCandidates> stderr_delta{};
  std::array<double, kNumCandidates> mean_delta_rr{};
};

struct PatchStageResult {
  std::string donor_task;
  std::string receiver_task;
  MedianSite site;
  std::vector<PatchGroupStats> groups;
  int n_candidate_skips = 0;  // pairs dropped by the first-token filter
};

PatchStageResult run_patch_stage(const Model& model, const TaskRun& receiver_run,
                                 const LensRun& receiver_lens, const TaskRun& donor_run,
                                 const LensRun& donor_lens, const PipelineOptions& opts);

std::string patch_result_to_tsv(const PatchStageResult& r);

}  // namespace twohop
