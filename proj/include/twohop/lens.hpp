#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twohop/common.hpp"
#include "twohop/model.hpp"

namespace twohop {

// Decodes a residual-stream state into vocabulary logits. The logit lens
// ignores the layer; the token-identity patchscope does not.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual Vec decode(const Vec& state, int layer) const = 0;
  virtual std::string name() const = 0;
};

// final normalization followed by the unembedding
Vec logit_lens(const Vec& residual_state, const Model& model);

class LensDecoder final : public Decoder {
 public:
  explicit LensDecoder(const Model& model) : model_(&model) {}
  Vec decode(const Vec& state, int /*layer*/) const override { return logit_lens(state, *model_); }
  std::string name() const override { return "lens"; }

 private:
  const Model* model_;
};

// 1 / (1 + number of strictly greater logits); ties do not worsen rank.
// Works on any dense vector expression.
template <class Derived>
double reciprocal_rank(const Eigen::DenseBase<Derived>& logits, int token) {
  if (token < 0 || token >= logits.size()) throw error("reciprocal_rank: token out of range");
  const auto v = logits(token);
  Eigen::Index greater = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (logits(i) > v) ++greater;
  return 1.0 / (1.0 + static_cast<double>(greater));
}

struct TrackedVariable {
  std::string role;  // x, fx, gx, gfx, fgx
  std::string surface;
  int first_token = -1;
};

// tracked variables with their answer-position first tokens; throws on a
// first-token collision
std::vector<TrackedVariable> resolve_variables(const TaskSpec& spec, const Example& e,
                                               const Tokenizer& tok);

// Layers x variables reciprocal ranks, maximum over query-span streams.
struct ProcessingSignature {
  std::vector<std::string> roles;
  std::vector<int> first_tokens;
  Eigen::MatrixXd rr;        // [layers+1, roles]
  Eigen::MatrixXi peak_pos;  // span-relative position attaining the max (earliest on ties)
  int span_len = 0;
  bool composition_correct = false;

  int n_layers() const { return static_cast<int>(rr.rows()) - 1; }
  std::optional<int> role_index(const std::string& role) const;
};

ProcessingSignature signature(const ResidualTrace& trace, const PromptInstance& prompt,
                              std::span<const TrackedVariable> variables, const Decoder& decoder);

struct PresenceScore {
  double value = 0.0;
  std::string variable;  // contributing intermediate (fx or gx)
  int layer = 0;
};

// maximum reciprocal rank of the intermediate variables across layers
PresenceScore presence(const ProcessingSignature& sig);

struct AggregateCurves {
  std::vector<std::string> roles;
  Eigen::MatrixXd curve;       // [layers+1, roles]; mean (or median) rr per layer
  std::vector<int> n_per_role;
  int n = 0;
  bool excluded = false;  // true when n < min_n; curve is empty then
  std::string outcome;    // "correct" or "incorrect"
};

AggregateCurves aggregate_signatures(std::span<const ProcessingSignature> sigs,
                                     const std::string& outcome, int min_n = 10,
                                     bool use_median = false);

std::string signature_to_json(const ProcessingSignature& sig);
std::string curves_to_json(const AggregateCurves& curves);

}  // namespace twohop
