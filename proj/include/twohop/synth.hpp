#pragma once

#include <cstdint>
#include <map>
#include <span>

#include "twohop/corpus.hpp"
#include "twohop/model.hpp"

namespace twohop {

// Deterministic random-weight checkpoints for testing and desk runs.
struct SynthSpec {
  Arch arch = Arch::llama;
  std::string name = "synth";
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int n_kv_heads = 4;
  int d_ff = 128;
  int max_seq = 1024;
  std::uint64_t seed = 0;
  bool tied_embeddings = false;
};

Model make_synth_model(const SynthSpec& spec, Tokenizer tokenizer);

// Vocabulary covering printable ASCII, the prompt scaffolding, integers
// 0..2200, and every variable surface form of the given datasets (with
// leading-space variants for words).
Tokenizer make_task_tokenizer(std::span<const TaskDataset> datasets);

// A model whose next-token prediction is a pure lookup on the last input
// token: blocks are zero, embeddings are one-hot, and the unembedding
// encodes the transition map (ids absent from the map continue to
// themselves). Requires d_model >= vocab. Used to test decoding paths.
Model make_transition_model(Tokenizer tokenizer, const std::map<int, int>& transitions);

}  // namespace twohop
