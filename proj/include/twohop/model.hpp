#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "twohop/prompting.hpp"
#include "twohop/tokenizer.hpp"

namespace twohop {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXf;

enum class Arch { gpt2, llama };
std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::llama;
  std::string name = "unnamed";
  int n_layers = 0;
  int d_model = 0;
  int n_heads = 0;
  int n_kv_heads = 0;
  int d_ff = 0;
  int vocab_size = 0;
  int max_seq = 0;
  float norm_eps = 1e-5f;
  float rope_theta = 10000.0f;
  bool tied_embeddings = false;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

struct LayerWeights {
  Vec attn_norm_w, attn_norm_b;
  Mat wq, wk, wv, wo;
  Vec bq, bk, bv, bo;
  Vec mlp_norm_w, mlp_norm_b;
  Mat w_in, w_gate, w_out;
  Vec b_in, b_out;
};

// Residual streams captured from one forward pass. states[0] is the
// post-embedding stream; states[i+1] is the stream after block i.
struct ResidualTrace {
  std::vector<Mat> states;  // n_layers+1 entries of [positions, d_model]
  Vec final_logits;         // [vocab_size], last position
  std::vector<int> positions;  // token ids

  int n_layers() const { return static_cast<int>(states.size()) - 1; }
  int n_positions() const { return static_cast<int>(positions.size()); }
  void validate() const;
};

// Replaces the residual stream at (layer, position) before downstream
// blocks consume it; layer 0 patches the post-embedding stream.
struct PatchHook {
  int layer = 0;
  int position = 0;
  Vec state;
};

// Uniform handle to a locally hosted causal LM: tokenization, greedy
// decoding, residual capture, embedding/unembedding access.
class Model {
 public:
  ModelConfig cfg;
  Mat tok_embed;  // [V, D]
  Mat pos_embed;  // [S, D], gpt2 only
  std::vector<LayerWeights> layers;
  Vec final_norm_w, final_norm_b;
  Mat unembed;       // [V, D]; empty when tied (tok_embed is used)
  Vec unembed_bias;  // optional, size 0 when absent

  std::string checkpoint_path;  // identifiers
  std::string tokenizer_path;
  Tokenizer tokenizer;

  static Model load(const std::string& checkpoint, const std::string& tokenizer_file);
  void save(const std::string& path) const;
  void validate() const;
  std::int64_t n_params() const;

  // answer_position applies the trailing-space convention: numeric text
  // tokenizes bare, words absorb a leading space.
  std::vector<int> tokenize(std::string_view text, bool answer_position = false) const;
  std::string detokenize(std::span<const int> ids) const;

  ResidualTrace forward_with_trace(std::span<const int> tokens,
                                   std::span<const PatchHook> hooks = {}) const;
  ResidualTrace forward_with_trace(const PromptInstance& prompt,
                                   std::span<const PatchHook> hooks = {}) const;
  // final-position logits without keeping per-layer states
  Vec forward_logits(std::span<const int> tokens, std::span<const PatchHook> hooks = {}) const;

  // argmax decoding until a newline is produced or the budget runs out;
  // the result is whitespace-stripped and truncated at the first newline
  std::string greedy_continue(const PromptInstance& prompt, int max_tokens) const;
  int greedy_next(std::span<const int> tokens) const;

  Mat embedding_rows(std::span<const int> ids) const;
  Vec unembedding_row(int id) const;
  const Mat& unembedding_matrix() const { return cfg.tied_embeddings ? tok_embed : unembed; }

  Vec apply_final_norm(const Vec& state) const;

 private:
  ResidualTrace forward_impl(std::span<const int> tokens, std::span<const PatchHook> hooks,
                             bool keep_states) const;
};

// binary tensor container with a JSON sidecar (<base>.bin + <base>.json)
void save_trace(const ResidualTrace& trace, const std::string& base_path);
ResidualTrace load_trace(const std::string& base_path);

}  // namespace twohop
