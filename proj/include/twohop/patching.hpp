#pragma once

#include <array>
#include <span>
#include <string>

#include "twohop/lens.hpp"
#include "twohop/model.hpp"

namespace twohop {

// argmax cell of a signature over layers x span positions, restricted to
// the intermediate variables fx/gx; ties broken by earliest layer, then
// earliest position
struct PeakSite {
  int layer = 0;
  int span_pos = 0;  // relative to the query span
  double rr = 0.0;
  std::string variable;
};

PeakSite locate_peak(const ProcessingSignature& sig);

enum class SignatureGroup { compositional, direct, excluded };

// peak RR >= 0.5 is compositional, <= 0.2 direct, in between excluded
SignatureGroup classify_peak(double peak_rr);
std::string group_name(SignatureGroup g);

struct MedianSite {
  int layer = 0;
  double percentile = 0.0;  // within the query span, in (0, 1]
};

// median layer and median within-span percentile of peak positions over
// qualifying instances (peak rr >= 0.5)
MedianSite median_patch_site(std::span<const PeakSite> sites, std::span<const int> span_lens,
                             double min_rr = 0.5);

// percentile -> 0-based span index by nearest rank: max(0, ceil(p*n) - 1)
int resolve_percentile(double percentile, int span_len);

// candidate order: g(f(x)), g(f(x')), g'(f(x)), g'(f(x'))
constexpr int kNumCandidates = 4;
extern const std::array<const char*, kNumCandidates> kCandidateNames;

struct PatchPlan {
  PromptInstance donor_prompt;     // composition prompt for x' on task g'∘f
  PromptInstance receiver_prompt;  // composition prompt for x on task g∘f
  int donor_layer = 0;
  int donor_pos = 0;  // absolute token position in the donor prompt
  int recv_layer = 0;
  int recv_pos = 0;  // absolute token position in the receiver prompt
  std::array<int, kNumCandidates> candidate_tokens{};
  SignatureGroup group = SignatureGroup::excluded;

  void validate(const Model& model) const;
};

struct CausalEffect {
  std::array<double, kNumCandidates> clean_prob{};
  std::array<double, kNumCandidates> patched_prob{};
  std::array<double, kNumCandidates> delta{};     // patched - clean probability
  std::array<double, kNumCandidates> clean_rr{};
  std::array<double, kNumCandidates> delta_rr{};  // reciprocal-rank mode
};

// Extracts the donor state at (donor_layer, donor_pos) and injects it at
// (recv_layer, recv_pos) of the receiver run; deltas are measured on the
// four candidates' first tokens at the output position.
CausalEffect run_patch(const Model& model, const PatchPlan& plan);

}  // namespace twohop
