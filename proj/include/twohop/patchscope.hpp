#pragma once

#include <cstdint>

#include "twohop/lens.hpp"
#include "twohop/model.hpp"

namespace twohop {

// "[A] [A] ; [B] [B] ; ... ; [?]" over random distinct non-special
// tokens; the final (placeholder) position is where states are patched.
struct IdentityPrompt {
  std::vector<int> tokens;
  int placeholder_pos = 0;
  int n_pairs = 0;
};

IdentityPrompt identity_prompt(int n_pairs, std::uint64_t seed, const Tokenizer& tok,
                               const std::string& separator = "; ");

// Runs the identity prompt with the residual stream at (layer, final
// position) replaced by `state`; returns the resulting next-token logits.
Vec token_identity_decode(const Vec& state, int layer, const Model& model,
                          const IdentityPrompt& idp);

class PatchscopeDecoder final : public Decoder {
 public:
  PatchscopeDecoder(const Model& model, IdentityPrompt idp)
      : model_(&model), idp_(std::move(idp)) {}
  PatchscopeDecoder(const Model& model, int n_pairs, std::uint64_t seed)
      : model_(&model), idp_(identity_prompt(n_pairs, seed, model.tokenizer)) {}

  Vec decode(const Vec& state, int layer) const override {
    return token_identity_decode(state, layer, *model_, idp_);
  }
  std::string name() const override { return "patchscope"; }
  const IdentityPrompt& prompt() const { return idp_; }

 private:
  const Model* model_;
  IdentityPrompt idp_;
};

}  // namespace twohop
