#include "twohop/patching.hpp"

#include <cmath>

#include "twohop/common.hpp"

namespace twohop {

const std::array<const char*, kNumCandidates> kCandidateNames = {"g(f(x))", "g(f(x'))", "g'(f(x))",
                                                                 "g'(f(x'))"};

PeakSite locate_peak(const ProcessingSignature& sig) {
  PeakSite best;
  bool found = false;
  for (int layer = 0; layer < static_cast<int>(sig.rr.rows()); ++layer) {
    for (std::size_t v = 0; v < sig.roles.size(); ++v) {
      if (sig.roles[v] != "fx" && sig.roles[v] != "gx") continue;
      const double r = sig.rr(layer, static_cast<int>(v));
      const int pos = sig.peak_pos(layer, static_cast<int>(v));
      const bool better =
          !found || r > best.rr ||
          (r == best.rr && (layer < best.layer || (layer == best.layer && pos < best.span_pos)));
      if (better) {
        best = {layer, pos, r, sig.roles[v]};
        found = true;
      }
    }
  }
  require(found, "locate_peak: no intermediate variable tracked");
  return best;
}

SignatureGroup classify_peak(double peak_rr) {
  if (peak_rr >= 0.5) return SignatureGroup::compositional;
  if (peak_rr <= 0.2) return SignatureGroup::direct;
  return SignatureGroup::excluded;
}

std::string group_name(SignatureGroup g) {
  switch (g) {
    case SignatureGroup::compositional: return "compositional";
    case SignatureGroup::direct: return "direct";
    case SignatureGroup::excluded: return "excluded";
  }
  throw error("unreachable group");
}

int resolve_percentile(double percentile, int span_len) {
  require(span_len >= 1, "resolve_percentile: empty span");
  require(percentile >= 0.0 && percentile <= 1.0, "resolve_percentile: percentile out of [0,1]");
  // nearest rank: 1-based rank = ceil(p * n); the epsilon absorbs
  // round-off in percentiles stored as (pos+1)/n
  int idx = static_cast<int>(std::ceil(percentile * span_len - 1e-9)) - 1;
  if (idx < 0) idx = 0;
  if (idx >= span_len) idx = span_len - 1;
  return idx;
}

MedianSite median_patch_site(std::span<const PeakSite> sites, std::span<const int> span_lens,
                             double min_rr) {
  require(sites.size() == span_lens.size(), "median_patch_site: size mismatch");
  std::vector<double> layers, percentiles;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i].rr < min_rr) continue;
    layers.push_back(static_cast<double>(sites[i].layer));
    // percentile such that resolve_percentile round-trips to the peak index
    percentiles.push_back(static_cast<double>(sites[i].span_pos + 1) /
                          static_cast<double>(span_lens[i]));
  }
  require(!layers.empty(), "median_patch_site: no qualifying instances (peak rr >= " +
                               std::to_string(min_rr) + ")");
  MedianSite out;
  out.layer = static_cast<int>(std::floor(quantile(layers, 0.5) + 0.5));  // half-up
  out.percentile = quantile(percentiles, 0.5);
  return out;
}

void PatchPlan::validate(const Model& model) const {
  require(donor_layer >= 0 && donor_layer <= model.cfg.n_layers, "patch plan: donor layer");
  require(recv_layer >= 0 && recv_layer <= model.cfg.n_layers, "patch plan: receiver layer");
  require(donor_pos >= 0 && donor_pos < static_cast<int>(donor_prompt.tokens.size()),
          "patch plan: donor position");
  require(recv_pos >= 0 && recv_pos < static_cast<int>(receiver_prompt.tokens.size()),
          "patch plan: receiver position");
  for (int i = 0; i < kNumCandidates; ++i)
    for (int j = i + 1; j < kNumCandidates; ++j)
      require(candidate_tokens[static_cast<std::size_t>(i)] !=
                  candidate_tokens[static_cast<std::size_t>(j)],
              "patch plan: candidate first tokens not pairwise distinct");
}

namespace {

Eigen::VectorXd softmax_double(const Vec& logits) {
  Eigen::VectorXd x = logits.cast<double>();
  const double mx = x.maxCoeff();
  x = (x.array() - mx).exp();
  x /= x.sum();
  return x;
}

}  // namespace

CausalEffect run_patch(const Model& model, const PatchPlan& plan) {
  plan.validate(model);

  const ResidualTrace donor = model.forward_with_trace(plan.donor_prompt.tokens);
  const Vec donor_state = donor.states[static_cast<std::size_t>(plan.donor_layer)]
                              .row(plan.donor_pos)
                              .transpose();

  const Vec clean_logits = model.forward_logits(plan.receiver_prompt.tokens);
  const PatchHook hook{plan.recv_layer, plan.recv_pos, donor_state};
  const Vec patched_logits = model.forward_logits(plan.receiver_prompt.tokens, {&hook, 1});

  const Eigen::VectorXd clean_p = softmax_double(clean_logits);
  const Eigen::VectorXd patched_p = softmax_double(patched_logits);

  CausalEffect eff;
  for (int c = 0; c < kNumCandidates; ++c) {
    const int tok = plan.candidate_tokens[static_cast<std::size_t>(c)];
    const auto ci = static_cast<std::size_t>(c);
    eff.clean_prob[ci] = clean_p(tok);
    eff.patched_prob[ci] = patched_p(tok);
    eff.delta[ci] = eff.patched_prob[ci] - eff.clean_prob[ci];
    eff.clean_rr[ci] = reciprocal_rank(clean_logits, tok);
    eff.delta_rr[ci] = reciprocal_rank(patched_logits, tok) - eff.clean_rr[ci];
  }
  return eff;
}

}  // namespace twohop
