#include "twohop/patchscope.hpp"

#include <unordered_set>

#include "twohop/common.hpp"

namespace twohop {

IdentityPrompt identity_prompt(int n_pairs, std::uint64_t seed, const Tokenizer& tok,
                               const std::string& separator) {
  require(n_pairs >= 1, "identity_prompt: n_pairs must be >= 1");
  const std::vector<int> pool = tok.regular_ids();
  require(static_cast<int>(pool.size()) > n_pairs, "identity_prompt: vocabulary too small");
  const std::vector<int> sep = tok.encode(separator);

  Rng rng(seed);
  std::unordered_set<int> used;
  auto draw = [&] {
    for (;;) {
      int id = pool[static_cast<std::size_t>(rng.below(pool.size()))];
      if (used.insert(id).second) return id;
    }
  };

  IdentityPrompt idp;
  idp.n_pairs = n_pairs;
  for (int i = 0; i < n_pairs; ++i) {
    const int t = draw();
    idp.tokens.push_back(t);
    idp.tokens.push_back(t);
    idp.tokens.insert(idp.tokens.end(), sep.begin(), sep.end());
  }
  idp.tokens.push_back(draw());  // placeholder
  idp.placeholder_pos = static_cast<int>(idp.tokens.size()) - 1;
  return idp;
}

Vec token_identity_decode(const Vec& state, int layer, const Model& model,
                          const IdentityPrompt& idp) {
  require(layer >= 0 && layer <= model.cfg.n_layers,
          "token_identity_decode: layer out of range: " + std::to_string(layer));
  const PatchHook hook{layer, idp.placeholder_pos, state};
  return model.forward_logits(idp.tokens, {&hook, 1});
}

}  // namespace twohop
