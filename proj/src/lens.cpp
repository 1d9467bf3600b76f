#include "twohop/lens.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "twohop/common.hpp"

namespace twohop {

using nlohmann::json;

Vec logit_lens(const Vec& residual_state, const Model& model) {
  require(residual_state.size() == model.cfg.d_model, "logit_lens: state dimension mismatch");
  Vec logits = model.unembedding_matrix() * model.apply_final_norm(residual_state);
  if (model.unembed_bias.size() > 0) logits += model.unembed_bias;
  return logits;
}

std::vector<TrackedVariable> resolve_variables(const TaskSpec& spec, const Example& e,
                                               const Tokenizer& tok) {
  std::vector<TrackedVariable> out;
  for (const auto& [role, surface] : tracked_variables(spec, e))
    out.push_back({role, surface, answer_first_token(tok, surface)});
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      require(out[i].first_token != out[j].first_token,
              "first-token collision between " + out[i].role + " and " + out[j].role +
                  " for x='" + e.x + "'");
  return out;
}

std::optional<int> ProcessingSignature::role_index(const std::string& role) const {
  for (std::size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == role) return static_cast<int>(i);
  return std::nullopt;
}

ProcessingSignature signature(const ResidualTrace& trace, const PromptInstance& prompt,
                              std::span<const TrackedVariable> variables, const Decoder& decoder) {
  require(!variables.empty(), "signature: no variables to track");
  const int n_layers = trace.n_layers();
  const int span_begin = prompt.span_begin();
  const int span_len = prompt.span_len();
  require(span_len >= 1, "signature: empty query span");
  require(prompt.span_end() <= trace.n_positions(), "signature: trace shorter than prompt");

  ProcessingSignature sig;
  for (const TrackedVariable& v : variables) {
    sig.roles.push_back(v.role);
    sig.first_tokens.push_back(v.first_token);
  }
  const int n_vars = static_cast<int>(variables.size());
  sig.rr = Eigen::MatrixXd::Zero(n_layers + 1, n_vars);
  sig.peak_pos = Eigen::MatrixXi::Zero(n_layers + 1, n_vars);
  sig.span_len = span_len;

  for (int layer = 0; layer <= n_layers; ++layer) {
    for (int p = 0; p < span_len; ++p) {
      const Vec state = trace.states[static_cast<std::size_t>(layer)]
                            .row(span_begin + p)
                            .transpose();
      const Vec logits = decoder.decode(state, layer);
      for (int v = 0; v < n_vars; ++v) {
        const double r = reciprocal_rank(logits, sig.first_tokens[static_cast<std::size_t>(v)]);
        if (p == 0 || r > sig.rr(layer, v)) {
          sig.rr(layer, v) = r;
          sig.peak_pos(layer, v) = p;
        }
      }
    }
  }
  return sig;
}

PresenceScore presence(const ProcessingSignature& sig) {
  PresenceScore best;
  bool found = false;
  for (std::size_t v = 0; v < sig.roles.size(); ++v) {
    if (sig.roles[v] != "fx" && sig.roles[v] != "gx") continue;
    for (int layer = 0; layer < sig.rr.rows(); ++layer) {
      const double r = sig.rr(layer, static_cast<int>(v));
      if (!found || r > best.value) {
        best.value = r;
        best.variable = sig.roles[v];
        best.layer = layer;
        found = true;
      }
    }
  }
  require(found, "presence: no intermediate variable (fx or gx) tracked");
  return best;
}

AggregateCurves aggregate_signatures(std::span<const ProcessingSignature> sigs,
                                     const std::string& outcome, int min_n, bool use_median) {
  AggregateCurves out;
  out.outcome = outcome;
  out.n = static_cast<int>(sigs.size());
  if (out.n < min_n) {
    out.excluded = true;
    return out;
  }

  // union of roles in canonical order
  const std::vector<std::string> canonical{"x", "fx", "gx", "gfx", "fgx"};
  for (const std::string& role : canonical) {
    bool present = false;
    for (const ProcessingSignature& s : sigs)
      if (s.role_index(role)) present = true;
    if (present) out.roles.push_back(role);
  }

  const int n_layers_plus1 = static_cast<int>(sigs[0].rr.rows());
  for (const ProcessingSignature& s : sigs)
    require(s.rr.rows() == n_layers_plus1, "aggregate_signatures: mixed layer counts");

  out.curve = Eigen::MatrixXd::Zero(n_layers_plus1, static_cast<int>(out.roles.size()));
  out.n_per_role.assign(out.roles.size(), 0);
  for (std::size_t r = 0; r < out.roles.size(); ++r) {
    std::vector<const ProcessingSignature*> with_role;
    for (const ProcessingSignature& s : sigs)
      if (s.role_index(out.roles[r])) with_role.push_back(&s);
    out.n_per_role[r] = static_cast<int>(with_role.size());
    if (with_role.empty()) continue;
    for (int layer = 0; layer < n_layers_plus1; ++layer) {
      std::vector<double> vals;
      vals.reserve(with_role.size());
      for (const ProcessingSignature* s : with_role)
        vals.push_back(s->rr(layer, *s->role_index(out.roles[r])));
      out.curve(layer, static_cast<int>(r)) =
          use_median ? median(vals) : mean(std::span<const double>(vals));
    }
  }
  return out;
}

std::string signature_to_json(const ProcessingSignature& sig) {
  json j;
  j["roles"] = sig.roles;
  j["first_tokens"] = sig.first_tokens;
  j["span_len"] = sig.span_len;
  j["composition_correct"] = sig.composition_correct;
  json rr = json::array();
  json peaks = json::array();
  for (Eigen::Index l = 0; l < sig.rr.rows(); ++l) {
    json row = json::array(), prow = json::array();
    for (Eigen::Index v = 0; v < sig.rr.cols(); ++v) {
      row.push_back(sig.rr(l, v));
      prow.push_back(sig.peak_pos(l, v));
    }
    rr.push_back(row);
    peaks.push_back(prow);
  }
  j["rr"] = rr;
  j["peak_positions"] = peaks;
  return j.dump();
}

std::string curves_to_json(const AggregateCurves& curves) {
  json j;
  j["outcome"] = curves.outcome;
  j["n"] = curves.n;
  j["excluded"] = curves.excluded;
  if (!curves.excluded) {
    j["roles"] = curves.roles;
    j["n_per_role"] = curves.n_per_role;
    json c = json::array();
    for (Eigen::Index l = 0; l < curves.curve.rows(); ++l) {
      json row = json::array();
      for (Eigen::Index v = 0; v < curves.curve.cols(); ++v) row.push_back(curves.curve(l, v));
      c.push_back(row);
    }
    j["curve"] = c;
  }
  return j.dump();
}

}  // namespace twohop
