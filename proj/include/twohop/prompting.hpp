#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twohop/corpus.hpp"
#include "twohop/tokenizer.hpp"

namespace twohop {

// A rendered ICL prompt. The query span [query_start, tokens.size())
// covers every token of the final "Q: ... \n A:(space)" segment and is the
// region the residual-stream analyses read.
struct PromptInstance {
  std::string text;
  std::vector<int> tokens;
  int query_start = 0;
  int answer_first_token = -1;
  std::string answer_text;
  bool numeric = false;
  Hop hop = Hop::x_to_gfx;

  int span_begin() const { return query_start; }
  int span_end() const { return static_cast<int>(tokens.size()); }
  int span_len() const { return span_end() - span_begin(); }
};

std::vector<int> answer_position_tokens(const Tokenizer& tok, std::string_view surface,
                                        bool numeric);
int answer_first_token(const Tokenizer& tok, std::string_view surface, bool numeric);

// Renders "Q: {in}\nA: {out}\n\n" per ICL pair, then "Q: {query_in}\nA:"
// with a trailing space iff numeric.
PromptInstance build_prompt(std::span<const std::pair<std::string, std::string>> icl,
                            const std::string& query_in, const std::string& answer, bool numeric,
                            const Tokenizer& tok);

// ICL pairs are the query-disjoint sample of the task's examples mapped
// through the hop. The trailing-space convention follows the hop's gold
// answer.
PromptInstance hop_prompt(const TaskDataset& dataset, const Example& query, Hop hop, int k,
                          std::uint64_t seed, const Tokenizer& tok);

std::string prompt_to_json(const PromptInstance& p);

}  // namespace twohop
