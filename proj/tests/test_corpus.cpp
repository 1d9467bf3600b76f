#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <set>

#include "testutil.hpp"
#include "twohop/color.hpp"
#include "twohop/common.hpp"
#include "twohop/corpus.hpp"
#include "twohop/numwords.hpp"

using namespace twohop;
using boost::multiprecision::cpp_int;

namespace {

// independent big-integer oracle for the arithmetic task definitions
struct ArithmeticOracle {
  std::string fx, gx, gfx, fgx;
};

ArithmeticOracle arithmetic_oracle(ArithmeticKind kind, const cpp_int& x) {
  ArithmeticOracle o;
  cpp_int fx, gx = 2 * x, gfx, fgx;
  switch (kind) {
    case ArithmeticKind::plus_10_times_2:
      fx = x + 10;
      gfx = 2 * (x + 10);
      fgx = 2 * x + 10;
      break;
    case ArithmeticKind::plus_100_times_2:
      fx = x + 100;
      gfx = 2 * (x + 100);
      fgx = 2 * x + 100;
      break;
    case ArithmeticKind::mod_20_times_2:
      fx = x % 20;
      gfx = 2 * (x % 20);
      fgx = (2 * x) % 20;
      break;
  }
  o.fx = fx.str();
  o.gx = gx.str();
  o.gfx = gfx.str();
  o.fgx = fgx.str();
  return o;
}

}  // namespace

TEST_CASE("arithmetic tasks match the big-int oracle over 0..999") {
  for (ArithmeticKind kind : {ArithmeticKind::plus_10_times_2, ArithmeticKind::plus_100_times_2,
                              ArithmeticKind::mod_20_times_2}) {
    const TaskDataset ds = generate_arithmetic_task(kind, 0, 999);
    std::set<std::string> seen;
    for (const Example& e : ds.examples) {
      const ArithmeticOracle o = arithmetic_oracle(kind, cpp_int(e.x));
      CHECK(e.fx == o.fx);
      CHECK(e.gx.value() == o.gx);
      CHECK(e.gfx == o.gfx);
      CHECK(e.fgx.value() == o.fgx);
      seen.insert(e.x);
    }
    // every integer present, except the degenerate x = 0 of mod-20-times-2
    // (x == gfx there, which the dataset invariant forbids)
    const std::size_t expected = kind == ArithmeticKind::mod_20_times_2 ? 999 : 1000;
    CHECK(ds.examples.size() == expected);
    for (int x = kind == ArithmeticKind::mod_20_times_2 ? 1 : 0; x <= 999; ++x)
      CHECK(seen.count(std::to_string(x)) == 1);
  }
}

TEST_CASE("arithmetic examples frozen from the oracle") {
  const auto p100 = generate_arithmetic_task(ArithmeticKind::plus_100_times_2, 0, 20);
  const Example* e7 = p100.find_x("7");
  REQUIRE(e7 != nullptr);
  CHECK(e7->fx == "107");
  CHECK(e7->gx.value() == "14");
  CHECK(e7->gfx == "214");
  CHECK(e7->fgx.value() == "114");

  const auto m20 = generate_arithmetic_task(ArithmeticKind::mod_20_times_2, 1, 40);
  const Example* e20 = m20.find_x("20");
  REQUIRE(e20 != nullptr);
  CHECK(e20->fx == "0");
  CHECK(e20->gfx == "0");

  // oracle-derived value at the top of the range
  const auto p10 = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 980, 999);
  const Example* e999 = p10.find_x("999");
  REQUIRE(e999 != nullptr);
  CHECK(e999->gfx == arithmetic_oracle(ArithmeticKind::plus_10_times_2, 999).gfx);
  CHECK(e999->gfx == "2018");

  CHECK(p100.spec.gx_to_gfx_rule.value() == "+200");
  CHECK(m20.spec.gx_to_gfx_rule.value() == "mod 40");
  CHECK_THROWS(generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 5, 5));
}

TEST_CASE("word-truncate-reverse definitions and the gx[1:] identity") {
  const std::vector<std::string> words{
      "stone",  "modern", "ancient", "bright", "hidden", "silent", "narrow", "mother",
      "father", "window", "bottle",  "candle", "garden", "yellow", "purple", "orange",
      "circle", "square", "damage",  "finger"};
  const TaskDataset ds = generate_string_task(words);
  const Example* stone = ds.find_x("stone");
  REQUIRE(stone != nullptr);
  CHECK(stone->fx == "ston");
  CHECK(stone->gx.value() == "enots");
  CHECK(stone->gfx == "nots");
  CHECK(stone->fgx.value() == "nots");

  CHECK_THROWS(generate_string_task(std::vector<std::string>{"ab c"}));
  CHECK_THROWS(generate_string_task(std::vector<std::string>{"ab"}));
  CHECK_THROWS(generate_string_task(std::vector<std::string>{"Stone"}));

  // brute-force string oracle over the full default wordlist
  const PairMap antonyms = ingest_pair_file(std::string(TWOHOP_DATA_DIR) + "/antonyms.tsv",
                                            PairRole::f);
  const auto wordlist = wordlist_from_pairs(antonyms);
  CHECK(wordlist.size() >= 90);
  const TaskDataset full = generate_string_task(wordlist);
  CHECK(full.examples.size() >= 20);
  for (const Example& e : full.examples) {
    std::string rev(e.x.rbegin(), e.x.rend());
    CHECK(e.gx.value() == rev);
    CHECK(e.gfx == rev.substr(1));          // gfx == gx[1:]
    CHECK(e.fgx.value() == e.gfx);          // commutative identity
    CHECK(e.fx == e.x.substr(0, e.x.size() - 1));
  }
}

TEST_CASE("color task: rotation and naming") {
  CHECK(rotate_hue({255, 0, 0}, 120.0) == Rgb{0, 255, 0});
  CHECK(nearest_css3_name({0, 255, 0}) == "lime");
  CHECK(rotate_hue({128, 128, 128}, 120.0) == Rgb{128, 128, 128});  // achromatic fixpoint
  CHECK(rotate_hue({0, 0, 255}, 120.0) == Rgb{255, 0, 0});
  CHECK(rotate_hue({255, 255, 0}, 120.0) == Rgb{0, 255, 255});
  // exact tie between aqua and cyan resolves alphabetically
  CHECK(nearest_css3_name({0, 255, 255}) == "aqua");
  CHECK(css3_colors().size() == 147);

  const TaskDataset ds = generate_color_task(50, 11);
  CHECK(ds.examples.size() == 50);
  for (const Example& e : ds.examples) CHECK(!e.gfx.empty());
  CHECK_THROWS(generate_color_task(0, 1));

  // rotation-inverse oracle: +120 then +240 returns within +-1 per channel
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const Rgb x{static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)),
                static_cast<int>(rng.below(256))};
    const Rgb once = rotate_hue(x, 120.0);
    const Rgb back = rotate_hue(once, 240.0);
    CHECK(std::abs(back.r - x.r) <= 1);
    CHECK(std::abs(back.g - x.g) <= 1);
    CHECK(std::abs(back.b - x.b) <= 1);
  }
}

TEST_CASE("pair file ingestion") {
  const std::string dir = testutil::temp_dir("corpus_pairs");
  write_file(dir + "/ok.tsv", "hot\tcold\n");
  const PairMap m = ingest_pair_file(dir + "/ok.tsv", PairRole::f);
  REQUIRE(m.rows.size() == 1);
  CHECK(*m.lookup("hot") == "cold");

  write_file(dir + "/dup.tsv", "hot\tcold\nhot\twarm\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(ingest_pair_file(dir + "/dup.tsv", PairRole::f)),
                       doctest::Contains("duplicate key 'hot'"), error);

  write_file(dir + "/bad.tsv", "hot\tcold\nmalformed row\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(ingest_pair_file(dir + "/bad.tsv", PairRole::g)),
                       doctest::Contains(":2"), error);

  write_file(dir + "/threecol.tsv", "a\tb\tc\n");
  CHECK_THROWS(static_cast<void>(ingest_pair_file(dir + "/threecol.tsv", PairRole::f)));
}

TEST_CASE("compose_task joins and errors") {
  TaskSpec spec{"toy", "f", "g", false, std::nullopt, false, false};

  PairMap f = pair_map_from_rows({{"a", "b"}});
  PairMap g = pair_map_from_rows({{"b", "c"}});
  // compose requires >= 20 examples; build a larger join
  std::vector<std::pair<std::string, std::string>> fr, gr;
  for (int i = 0; i < 30; ++i) {
    fr.emplace_back("x" + std::to_string(i), "m" + std::to_string(i));
    gr.emplace_back("m" + std::to_string(i), "y" + std::to_string(i));
  }
  const TaskDataset ds = compose_task(pair_map_from_rows(fr), pair_map_from_rows(gr), spec);
  CHECK(ds.examples.size() == 30);
  CHECK(ds.examples[0].x == "x0");
  CHECK(ds.examples[0].fx == "m0");
  CHECK(ds.examples[0].gfx == "y0");
  CHECK(!ds.examples[0].gx.has_value());

  PairMap g2 = pair_map_from_rows({{"z", "c"}});
  CHECK_THROWS_WITH_AS(static_cast<void>(compose_task(f, g2, spec)),
                       doctest::Contains("empty join"), error);
}

TEST_CASE("antonym-spanish composition matches the set-intersection oracle") {
  const std::string data = TWOHOP_DATA_DIR;
  const PairMap f = ingest_pair_file(data + "/antonyms.tsv", PairRole::f);
  const PairMap g = ingest_pair_file(data + "/en_es.tsv", PairRole::g);
  const TaskDataset ds = build_task("antonym-spanish", data, 0);

  // oracle: keys where both lookups resolve and the result is nondegenerate
  std::set<std::string> expected;
  for (const auto& [x, fx] : f.rows) {
    const std::string* gfx = g.lookup(fx);
    if (gfx && *gfx != x) expected.insert(x);
  }
  CHECK(ds.examples.size() == expected.size());
  for (const Example& e : ds.examples) {
    CHECK(expected.count(e.x) == 1);
    CHECK(e.fx == *f.lookup(e.x));
    CHECK(e.gfx == *g.lookup(e.fx));
    if (e.gx) {
      CHECK(*e.gx == *g.lookup(e.x));
      CHECK(e.fgx.value() == e.gfx);  // commutative task
    }
  }
  CHECK(ds.spec.has_gx);
  CHECK(ds.spec.commutative);
}

TEST_CASE("sample_icl disjointness, determinism, and errors") {
  const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 999);
  const Example& query = ds.examples[50];  // x=50

  SUBCASE("examples sharing any variable with the query are excluded") {
    // x=25 has gx=50 == query.x, x=20 has fx=30 == query's... build explicit check
    const auto sample = sample_icl(ds, query, 10, 7);
    std::set<std::string> qvals;
    for (const auto& v : query.value_set()) qvals.insert(v);
    for (const Example& e : sample)
      for (const auto& v : e.value_set()) CHECK(qvals.count(v) == 0);
  }

  SUBCASE("determinism and seed sensitivity") {
    const auto a = sample_icl(ds, query, 10, 42);
    const auto b = sample_icl(ds, query, 10, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].x == b[i].x);
    const auto c = sample_icl(ds, query, 10, 43);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].x == c[i].x;
    CHECK(!same);
  }

  SUBCASE("insufficient pool reports the eligible count") {
    const TaskDataset tiny = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 21);
    const Example& q = tiny.examples[0];
    int eligible = 0;
    std::set<std::string> qv;
    for (const auto& v : q.value_set()) qv.insert(v);
    for (const Example& e : tiny.examples) {
      bool hit = false;
      for (const auto& v : e.value_set()) hit = hit || qv.count(v) > 0;
      if (!hit) ++eligible;
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(sample_icl(tiny, q, eligible + 1, 0)),
                         doctest::Contains(std::to_string(eligible).c_str()), error);
  }

  SUBCASE("no intersection over many random draws") {
    Rng rng(123);
    for (int draw = 0; draw < 10000; ++draw) {
      const Example& q = ds.examples[rng.below(ds.examples.size())];
      const auto sample = sample_icl(ds, q, 10, rng.next_u64());
      std::set<std::string> qv;
      for (const auto& v : q.value_set()) qv.insert(v);
      for (const Example& e : sample)
        for (const auto& v : e.value_set())
          if (qv.count(v)) FAIL("ICL sample intersects query");
    }
  }
}

TEST_CASE("first-token collision rules") {
  const Tokenizer tok = testutil::mini_tokenizer();

  SUBCASE("shared first answer token collides") {
    // " moderno" greedily tokenizes as [ modern][o]
    TaskSpec spec{"t", "f", "g", false, std::nullopt, false, false};
    Example e{"ancient", "modern", "moderno", std::nullopt, std::nullopt};
    CHECK(first_token_collision(spec, e, tok));
  }

  SUBCASE("distinct numeric first tokens do not collide") {
    TaskSpec spec{"t", "f", "g", true, std::nullopt, true, false};
    Example e{"7", "107", "214", std::string("14"), std::string("114")};
    CHECK(!first_token_collision(spec, e, tok));
  }

  SUBCASE("identical x and gx collide") {
    TaskSpec spec{"t", "f", "g", true, std::nullopt, false, true};
    Example e{"visible", "hidden", "oculto", std::string("visible"), std::string("oculto")};
    CHECK(first_token_collision(spec, e, tok));
  }

  SUBCASE("fgx equal to gfx is not a distinct variable") {
    TaskSpec spec{"word-truncate-reverse", "truncate", "reverse", true,
                  std::string("drop-first-char"), false, true};
    Example e{"stone", "ston", "nots", std::string("enots"), std::string("nots")};
    CHECK(!first_token_collision(spec, e, tok));
    const auto vars = tracked_variables(spec, e);
    CHECK(vars.size() == 4);  // x, fx, gx, gfx
  }
}

TEST_CASE("answer-position tokenization convention") {
  const Tokenizer tok = testutil::mini_tokenizer();
  CHECK(answer_position_tokens(tok, "99").size() == 1);
  CHECK(tok.text(answer_first_token(tok, "99")) == "99");
  CHECK(tok.text(answer_first_token(tok, "modern")) == " modern");
  CHECK(answer_position_tokens(tok, "modern").size() == 1);
}

TEST_CASE("cardinal spelling golden values") {
  CHECK(spell_cardinal(0) == "zero");
  CHECK(spell_cardinal(7) == "seven");
  CHECK(spell_cardinal(13) == "thirteen");
  CHECK(spell_cardinal(21) == "twenty-one");
  CHECK(spell_cardinal(40) == "forty");
  CHECK(spell_cardinal(100) == "one hundred");
  CHECK(spell_cardinal(101) == "one hundred and one");
  CHECK(spell_cardinal(345) == "three hundred and forty-five");
  CHECK(spell_cardinal(999) == "nine hundred and ninety-nine");
  CHECK_THROWS(spell_cardinal(1000));
  CHECK_THROWS(spell_cardinal(-1));
  CHECK(number_word_pairs(0, 9).size() == 10);
}

TEST_CASE("dataset dedup and jsonl round trip") {
  const std::vector<std::string> words{"stone", "stone", "ancient", "modern",
                                       "bright", "hidden", "silent", "narrow",
                                       "mother", "father", "window", "bottle",
                                       "candle", "garden", "yellow", "purple",
                                       "orange", "circle", "square", "damage",
                                       "finger"};
  const TaskDataset ds = generate_string_task(words);
  CHECK(ds.examples.size() == words.size() - 1);  // duplicate collapsed

  const std::string jsonl = dataset_to_jsonl(ds);
  const auto back = examples_from_jsonl(jsonl);
  REQUIRE(back.size() == ds.examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].x == ds.examples[i].x);
    CHECK(back[i].fx == ds.examples[i].fx);
    CHECK(back[i].gfx == ds.examples[i].gfx);
    CHECK(back[i].gx == ds.examples[i].gx);
    CHECK(back[i].fgx == ds.examples[i].fgx);
  }
}

TEST_CASE("task registry") {
  const std::string data = TWOHOP_DATA_DIR;
  CHECK(known_task_names().size() == 16);
  CHECK(is_known_task("plus-10-times-2"));
  CHECK(!is_known_task("no-such-task"));
  CHECK_THROWS_WITH_AS(static_cast<void>(build_task("no-such-task", data, 0)),
                       doctest::Contains("unknown task"), error);

  for (const std::string& name : known_task_names()) {
    if (name == "mod-20-times-2") continue;  // x=0 drop covered elsewhere
    const TaskDataset ds = build_task(name, data, 5);
    CHECK(ds.examples.size() >= 20);
  }
}

TEST_CASE("hop accessors") {
  Example e{"7", "107", "214", std::string("14"), std::string("114")};
  CHECK(hop_input(e, Hop::x_to_fx) == "7");
  CHECK(hop_output(e, Hop::x_to_fx) == "107");
  CHECK(hop_input(e, Hop::fx_to_gfx) == "107");
  CHECK(hop_output(e, Hop::fx_to_gfx) == "214");
  CHECK(hop_input(e, Hop::gx_to_gfx) == "14");
  CHECK(hop_output(e, Hop::x_to_gx) == "14");
  CHECK(hop_output(e, Hop::x_to_gfx) == "214");

  TaskSpec no_gx{"t", "f", "g", false, std::nullopt, false, false};
  CHECK(defined_hops(no_gx).size() == 2);
  CHECK(!hop_defined(no_gx, Hop::x_to_gx));
  TaskSpec with_gx{"t", "f", "g", true, std::nullopt, false, false};
  CHECK(defined_hops(with_gx).size() == 4);
  CHECK(hop_from_name("fx->gfx") == Hop::fx_to_gfx);
  CHECK(!hop_from_name("bogus").has_value());
}
