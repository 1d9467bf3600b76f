#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "twohop/common.hpp"
#include "twohop/prompting.hpp"

using namespace twohop;

namespace {

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

}  // namespace

TEST_CASE("prompt format and the trailing-space convention") {
  const Tokenizer tok = testutil::mini_tokenizer();
  std::vector<std::pair<std::string, std::string>> icl{{"1", "11"}, {"2", "12"}};

  SUBCASE("numeric answers: prompt ends 'A: ' and the answer is one bare token") {
    const PromptInstance p = build_prompt(icl, "89", "99", true, tok);
    CHECK(p.text.substr(p.text.size() - 3) == "A: ");
    CHECK(tok.text(p.answer_first_token) == "99");
    CHECK(answer_position_tokens(tok, "99", true).size() == 1);
  }

  SUBCASE("word answers: prompt ends 'A:' and the answer absorbs the space") {
    std::vector<std::pair<std::string, std::string>> word_icl{{"ancient", "old"}};
    const PromptInstance p = build_prompt(word_icl, "recent", "modern", false, tok);
    CHECK(p.text.substr(p.text.size() - 2) == "A:");
    CHECK(tok.text(p.answer_first_token) == " modern");
  }

  SUBCASE("10 ICL pairs produce exactly 11 Q: occurrences") {
    std::vector<std::pair<std::string, std::string>> ten;
    for (int i = 0; i < 10; ++i) ten.emplace_back(std::to_string(i), std::to_string(i + 10));
    const PromptInstance p = build_prompt(ten, "50", "60", true, tok);
    CHECK(count_occurrences(p.text, "Q:") == 11);
    CHECK(count_occurrences(p.text, "A:") == 11);
  }

  SUBCASE("empty ICL rejected") {
    std::vector<std::pair<std::string, std::string>> none;
    CHECK_THROWS(build_prompt(none, "a", "b", false, tok));
  }
}

TEST_CASE("query span covers the final query segment and round-trips") {
  const Tokenizer tok = testutil::mini_tokenizer();
  std::vector<std::pair<std::string, std::string>> icl{{"7", "107"}, {"3", "103"}};
  const PromptInstance p = build_prompt(icl, "14", "114", true, tok);

  REQUIRE(p.span_len() >= 1);
  const std::string suffix =
      tok.decode(std::span<const int>(p.tokens).subspan(static_cast<std::size_t>(p.query_start)));
  CHECK(suffix == "Q: 14\nA: ");
  CHECK(p.span_end() == static_cast<int>(p.tokens.size()));
  // detokenizing the whole prompt reproduces the text byte for byte
  CHECK(tok.decode(p.tokens) == p.text);
}

TEST_CASE("hop prompts map the ICL pool through the hop") {
  const Model model = testutil::small_model();
  const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_100_times_2, 0, 200);
  const Example* q = ds.find_x("7");
  REQUIRE(q != nullptr);

  SUBCASE("x->fx") {
    const PromptInstance p = hop_prompt(ds, *q, Hop::x_to_fx, 10, 1, model.tokenizer);
    CHECK(p.answer_text == "107");
    CHECK(p.hop == Hop::x_to_fx);
    CHECK(count_occurrences(p.text, "Q:") == 11);
  }

  SUBCASE("gx->gfx encodes the +200 rule") {
    const PromptInstance p = hop_prompt(ds, *q, Hop::gx_to_gfx, 10, 1, model.tokenizer);
    CHECK(p.text.find("Q: 14\nA: ") != std::string::npos);
    CHECK(p.answer_text == "214");
    // every ICL pair satisfies out = in + 200
    std::size_t pos = 0;
    int pairs = 0;
    while ((pos = p.text.find("Q: ", pos)) != std::string::npos) {
      const std::size_t nl = p.text.find('\n', pos);
      const std::string in = p.text.substr(pos + 3, nl - pos - 3);
      const std::size_t ans = p.text.find("A: ", nl);
      if (ans == std::string::npos) break;
      const std::size_t end = p.text.find('\n', ans);
      if (end == std::string::npos) break;  // query tail
      const std::string out = p.text.substr(ans + 3, end - ans - 3);
      if (!out.empty()) {
        CHECK(std::stol(out) == std::stol(in) + 200);
        ++pairs;
      }
      pos = nl;
    }
    CHECK(pairs == 10);
  }

  SUBCASE("undefined hop errors") {
    const TaskDataset color = generate_color_task(25, 3);
    CHECK_THROWS_WITH_AS(
        static_cast<void>(hop_prompt(color, color.examples[0], Hop::x_to_gx, 10, 1,
                                     model.tokenizer)),
        doctest::Contains("not defined"), error);
  }

  SUBCASE("ICL sample respects disjointness inside hop prompts") {
    const PromptInstance p = hop_prompt(ds, *q, Hop::x_to_gfx, 10, 9, model.tokenizer);
    CHECK(p.text.find("Q: 7\nA: 207") == std::string::npos);  // query never demonstrated
  }
}

TEST_CASE("answer_first_token equals the first answer-position token") {
  const Tokenizer tok = testutil::mini_tokenizer();
  const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 60);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Example& q = ds.examples[rng.below(ds.examples.size())];
    const PromptInstance p = hop_prompt(ds, q, Hop::x_to_gfx, 5, rng.next_u64(), tok);
    const auto toks = answer_position_tokens(tok, p.answer_text, p.numeric);
    REQUIRE(!toks.empty());
    CHECK(p.answer_first_token == toks.front());
  }
}

TEST_CASE("prompt serialization") {
  const Tokenizer tok = testutil::mini_tokenizer();
  std::vector<std::pair<std::string, std::string>> icl{{"1", "11"}};
  const PromptInstance p = build_prompt(icl, "5", "15", true, tok);
  const std::string j = prompt_to_json(p);
  CHECK(j.find("\"query_span\"") != std::string::npos);
  CHECK(j.find("\"answer_first_token\"") != std::string::npos);
}
