#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "twohop/common.hpp"
#include "twohop/corpus.hpp"
#include "twohop/model.hpp"

namespace twohop {

using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;

// least-squares map from input-embedding space to unembedding space
struct LinearMap {
  MatD W;  // [d, d]; predictions are W x + b
  VecD b;  // zero when fitted without bias
  int fit_size = 0;
  double score = 0.0;  // held-out mean cosine similarity
  Hop relation = Hop::x_to_gfx;
};

// unweighted mean of the input-embedding rows over the surface form's
// in-prompt tokens
VecD mean_source_embedding(const Model& model, const std::string& surface);
// unembedding row of the surface form's first answer-position token
VecD target_unembedding(const Model& model, const std::string& surface);
int target_first_token(const Model& model, const std::string& surface);

// ordinary least squares (minimum-norm when underdetermined), row-per-sample
LinearMap fit_least_squares(const MatD& X, const MatD& Y, bool bias = true);

template <class D1, class D2>
double cosine_similarity(const Eigen::MatrixBase<D1>& a, const Eigen::MatrixBase<D2>& b) {
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}
// mean cosine between predicted vectors and the true targets
double linearity_score(const LinearMap& map, const MatD& X_heldout, const MatD& Y_heldout);
// alternative reading: fraction of held-out rows whose prediction is
// nearest (by cosine) to the gold unembedding row
double top1_accuracy(const LinearMap& map, const MatD& X_heldout,
                     std::span<const int> gold_tokens, const Model& model);

struct TaskLinearity {
  LinearMap map;
  std::vector<std::size_t> fit_indices;      // into the eligible span
  std::vector<std::size_t> heldout_indices;  // disjoint from fit_indices
};

// Fits on exactly n_fit seeded-random eligible examples; scores on the
// remaining ones. Throws when fewer than n_fit + 10 eligible examples
// exist (the task is then excluded by the caller).
TaskLinearity fit_linear(const TaskDataset& task, const Model& model, Hop relation,
                         std::span<const Example> eligible, int n_fit, std::uint64_t seed,
                         bool bias = true);

// squared Pearson correlation of per-task means; sign of the raw r is in
// PearsonResult::r. Needs >= 3 tasks; zero variance yields defined=false.
PearsonResult correlate_tasks(std::span<const double> metric_a, std::span<const double> metric_b);

struct HopLinearity {
  double first_hop = 0.0;   // x -> fx
  double second_hop = 0.0;  // fx -> gfx
  std::optional<double> gx_first;   // x -> gx, when defined
  std::optional<double> gx_second;  // gx -> gfx, when defined
  double min_score = 0.0;
  double max_score = 0.0;
};

HopLinearity hop_linearity_suite(const TaskDataset& task, const Model& model,
                                 std::span<const Example> eligible, int n_fit, std::uint64_t seed,
                                 bool bias = true);

// binary matrix container + JSON metadata (<base>.bin, <base>.json)
void save_linear_map(const LinearMap& map, const std::string& base_path);
LinearMap load_linear_map(const std::string& base_path);

}  // namespace twohop
