#include "twohop/prompting.hpp"

#include <nlohmann/json.hpp>

#include "twohop/common.hpp"

namespace twohop {

using nlohmann::json;

std::vector<int> answer_position_tokens(const Tokenizer& tok, std::string_view surface,
                                        bool numeric) {
  require(!surface.empty(), "answer_position_tokens: empty surface form");
  if (numeric) return tok.encode(surface);
  return tok.encode(" " + std::string(surface));
}

int answer_first_token(const Tokenizer& tok, std::string_view surface, bool numeric) {
  return answer_position_tokens(tok, surface, numeric).front();
}

PromptInstance build_prompt(std::span<const std::pair<std::string, std::string>> icl,
                            const std::string& query_in, const std::string& answer, bool numeric,
                            const Tokenizer& tok) {
  require(!icl.empty(), "build_prompt: need at least one in-context example");
  PromptInstance p;
  std::string prefix;
  for (const auto& [in, out] : icl) prefix += "Q: " + in + "\nA: " + out + "\n\n";
  const std::string query = "Q: " + query_in + "\nA:" + (numeric ? " " : "");
  p.text = prefix + query;

  const auto offsets = tok.encode_with_offsets(p.text);
  p.tokens.reserve(offsets.size());
  p.query_start = -1;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    p.tokens.push_back(offsets[i].id);
    if (p.query_start < 0 && offsets[i].begin >= prefix.size()) {
      require(offsets[i].begin == prefix.size(),
              "build_prompt: a token straddles the query boundary");
      p.query_start = static_cast<int>(i);
    }
  }
  require(p.query_start >= 0 && p.query_start < static_cast<int>(p.tokens.size()),
          "build_prompt: empty query span");
  // the span must detokenize back to the query suffix
  require(tok.decode(std::span<const int>(p.tokens).subspan(
              static_cast<std::size_t>(p.query_start))) == query,
          "build_prompt: query span does not round-trip");

  p.answer_text = answer;
  p.numeric = numeric;
  p.answer_first_token = answer_first_token(tok, answer, numeric);
  return p;
}

PromptInstance hop_prompt(const TaskDataset& dataset, const Example& query, Hop hop, int k,
                          std::uint64_t seed, const Tokenizer& tok) {
  require(hop_defined(dataset.spec, hop),
          "hop " + hop_name(hop) + " is not defined for task " + dataset.spec.name);
  const auto icl = sample_icl(dataset, query, k, seed);
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(icl.size());
  for (const Example& e : icl) pairs.emplace_back(hop_input(e, hop), hop_output(e, hop));

  const std::string& answer = hop_output(query, hop);
  const bool numeric = numeric_surface(answer);
  PromptInstance p = build_prompt(pairs, hop_input(query, hop), answer, numeric, tok);
  p.hop = hop;
  return p;
}

std::string prompt_to_json(const PromptInstance& p) {
  json j;
  j["text"] = p.text;
  j["tokens"] = p.tokens;
  j["query_span"] = {p.span_begin(), p.span_end()};
  j["answer_first_token"] = p.answer_first_token;
  j["answer_text"] = p.answer_text;
  j["numeric"] = p.numeric;
  j["hop"] = hop_name(p.hop);
  return j.dump();
}

}  // namespace twohop
