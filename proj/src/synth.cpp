#include "twohop/synth.hpp"

#include <set>

#include "twohop/common.hpp"

namespace twohop {

namespace {

Mat gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, float scale) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = scale * static_cast<float>(rng.normal());
  return m;
}

Vec gaussian_vector(Rng& rng, Eigen::Index n, float scale) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * static_cast<float>(rng.normal());
  return v;
}

}  // namespace

Model make_synth_model(const SynthSpec& spec, Tokenizer tokenizer) {
  Model m;
  m.cfg.arch = spec.arch;
  m.cfg.name = spec.name;
  m.cfg.n_layers = spec.n_layers;
  m.cfg.d_model = spec.d_model;
  m.cfg.n_heads = spec.n_heads;
  m.cfg.n_kv_heads = spec.n_kv_heads;
  m.cfg.d_ff = spec.d_ff;
  m.cfg.vocab_size = tokenizer.size();
  m.cfg.max_seq = spec.max_seq;
  m.cfg.tied_embeddings = spec.tied_embeddings;
  m.cfg.validate();

  Rng rng(spec.seed);
  const int D = spec.d_model;
  const int hd = m.cfg.head_dim();
  const float res_scale = 0.4f / std::sqrt(static_cast<float>(D));

  m.tok_embed = gaussian_matrix(rng, m.cfg.vocab_size, D, 0.6f);
  if (spec.arch == Arch::gpt2) m.pos_embed = gaussian_matrix(rng, spec.max_seq, D, 0.1f);

  const bool biases = spec.arch == Arch::gpt2;
  for (int i = 0; i < spec.n_layers; ++i) {
    LayerWeights l;
    l.attn_norm_w = Vec::Ones(D);
    if (biases) l.attn_norm_b = Vec::Zero(D);
    l.wq = gaussian_matrix(rng, D, spec.n_heads * hd, res_scale);
    l.wk = gaussian_matrix(rng, D, spec.n_kv_heads * hd, res_scale);
    l.wv = gaussian_matrix(rng, D, spec.n_kv_heads * hd, res_scale);
    l.wo = gaussian_matrix(rng, spec.n_heads * hd, D, res_scale);
    if (biases) {
      l.bq = Vec::Zero(spec.n_heads * hd);
      l.bk = Vec::Zero(spec.n_kv_heads * hd);
      l.bv = Vec::Zero(spec.n_kv_heads * hd);
      l.bo = Vec::Zero(D);
    }
    l.mlp_norm_w = Vec::Ones(D);
    if (biases) l.mlp_norm_b = Vec::Zero(D);
    l.w_in = gaussian_matrix(rng, D, spec.d_ff, res_scale);
    if (spec.arch == Arch::llama) l.w_gate = gaussian_matrix(rng, D, spec.d_ff, res_scale);
    l.w_out = gaussian_matrix(rng, spec.d_ff, D, res_scale);
    if (biases) {
      l.b_in = Vec::Zero(spec.d_ff);
      l.b_out = Vec::Zero(D);
    }
    m.layers.push_back(std::move(l));
  }
  m.final_norm_w = Vec::Ones(D);
  if (biases) m.final_norm_b = Vec::Zero(D);
  if (!spec.tied_embeddings) m.unembed = gaussian_matrix(rng, m.cfg.vocab_size, D, 0.6f);

  m.tokenizer = std::move(tokenizer);
  m.cfg.name = spec.name;
  m.validate();
  return m;
}

Tokenizer make_task_tokenizer(std::span<const TaskDataset> datasets) {
  std::vector<std::string> tokens{"<s>", "</s>"};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto add = [&](const std::string& t) {
    if (!t.empty() && seen.insert(t).second) tokens.push_back(t);
  };

  for (int c = 32; c <= 126; ++c) add(std::string(1, static_cast<char>(c)));
  add("\n");
  add("\t");
  add("Q:");
  add("A:");
  add("; ");
  for (int n = 0; n <= 2200; ++n) add(std::to_string(n));

  for (const TaskDataset& ds : datasets) {
    for (const Example& e : ds.examples) {
      for (const std::string& v : e.value_set()) {
        if (numeric_surface(v)) {
          add(v);
        } else {
          add(v);
          add(" " + v);
        }
      }
    }
  }
  return Tokenizer(std::move(tokens), {0, 1});
}

Model make_transition_model(Tokenizer tokenizer, const std::map<int, int>& transitions) {
  const int V = tokenizer.size();
  SynthSpec spec;
  spec.arch = Arch::llama;
  spec.name = "transition";
  spec.n_layers = 1;
  spec.d_model = V;
  spec.n_heads = 1;
  spec.n_kv_heads = 1;
  spec.d_ff = 4;
  spec.max_seq = 4096;

  Model m = make_synth_model(spec, std::move(tokenizer));

  m.tok_embed = Mat::Zero(V, V);
  for (int t = 0; t < V; ++t) m.tok_embed(t, t) = 1.0f;

  LayerWeights& l = m.layers[0];
  l.wq.setZero();
  l.wk.setZero();
  l.wv.setZero();
  l.wo.setZero();
  l.w_in.setZero();
  l.w_gate.setZero();
  l.w_out.setZero();

  m.unembed = Mat::Zero(V, V);
  for (int t = 0; t < V; ++t) {
    auto it = transitions.find(t);
    const int target = it == transitions.end() ? t : it->second;
    require(target >= 0 && target < V, "transition target out of range");
    m.unembed(target, t) += 1.0f;
  }
  m.validate();
  return m;
}

}  // namespace twohop
