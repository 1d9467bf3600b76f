#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "testutil.hpp"
#include "twohop/common.hpp"
#include "twohop/lens.hpp"
#include "twohop/prompting.hpp"

using namespace twohop;

namespace {

PromptInstance comp_prompt(const Model& model, const TaskDataset& ds, const Example& q,
                           std::uint64_t seed) {
  return hop_prompt(ds, q, Hop::x_to_gfx, 10, seed, model.tokenizer);
}

// one-hot model: unembedding row t equals basis vector e_t, so logit-lens
// scores are exactly the (normalized) state coordinates
Model one_hot_model() {
  std::vector<std::string> toks{"\n", " ", "Q:", "A:"};
  for (int i = 0; i < 24; ++i) toks.push_back("w" + std::to_string(i));
  Tokenizer tok(std::move(toks));
  return make_transition_model(tok, {});
}

}  // namespace

TEST_CASE("reciprocal rank definition and tie handling") {
  Vec logits(5);
  logits << 1.0f, 5.0f, 3.0f, 3.0f, 0.5f;
  CHECK(reciprocal_rank(logits, 1) == 1.0);        // argmax
  CHECK(reciprocal_rank(logits, 2) == 0.5);        // one strictly greater, tie ignored
  CHECK(reciprocal_rank(logits, 3) == 0.5);
  CHECK(reciprocal_rank(logits, 0) == 0.25);       // three strictly greater
  CHECK(reciprocal_rank(logits, 4) == 1.0 / 5.0);
  CHECK_THROWS(reciprocal_rank(logits, 5));

  Vec tied = Vec::Ones(4);
  CHECK(reciprocal_rank(tied, 2) == 1.0);  // all tied, none strictly greater
}

TEST_CASE("reciprocal rank matches a brute-force sort oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(40));
    Vec logits(n);
    for (int i = 0; i < n; ++i)
      logits(i) = static_cast<float>(rng.below(8)) - 4.0f + 0.5f * static_cast<float>(rng.normal());
    const int token = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));

    // oracle: sort descending, rank = first index with equal value + 1
    std::vector<float> sorted(logits.data(), logits.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<float>());
    const auto it = std::find(sorted.begin(), sorted.end(), logits(token));
    const double expected = 1.0 / (1.0 + static_cast<double>(it - sorted.begin()));
    CHECK(reciprocal_rank(logits, token) == expected);
  }
}

TEST_CASE("lens at the final layer reproduces the output distribution") {
  for (Arch arch : {Arch::llama, Arch::gpt2}) {
    const Model model = testutil::small_model(23, arch);
    const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 150);
    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
      const Example& q = ds.examples[rng.below(ds.examples.size())];
      const PromptInstance p = comp_prompt(model, ds, q, rng.next_u64());
      const ResidualTrace t = model.forward_with_trace(p);
      const Vec lens = logit_lens(
          t.states.back().row(static_cast<Eigen::Index>(p.tokens.size()) - 1).transpose(), model);
      CHECK(lens == t.final_logits);  // identical computation path

      // full rank ordering match
      std::vector<int> order_a(static_cast<std::size_t>(lens.size()));
      std::iota(order_a.begin(), order_a.end(), 0);
      auto order_b = order_a;
      std::sort(order_a.begin(), order_a.end(), [&](int x, int y) { return lens(x) > lens(y); });
      std::sort(order_b.begin(), order_b.end(),
                [&](int x, int y) { return t.final_logits(x) > t.final_logits(y); });
      CHECK(order_a == order_b);
    }
  }
}

TEST_CASE("zero vector through a bias-free head gives uniform logits") {
  const Model model = testutil::small_model(29, Arch::llama);  // rmsnorm, no biases
  const Vec lens = logit_lens(Vec::Zero(model.cfg.d_model), model);
  CHECK(lens.maxCoeff() == lens.minCoeff());
  CHECK_THROWS(static_cast<void>(logit_lens(Vec::Zero(model.cfg.d_model + 1), model)));
}

TEST_CASE("constructed trace: a state equal to an unembedding row hits rr = 1") {
  const Model model = one_hot_model();
  const int target = *model.tokenizer.find("w5");

  const int decoy = *model.tokenizer.find("w9");

  ResidualTrace trace;
  trace.positions = {*model.tokenizer.find("w0"), *model.tokenizer.find("w1")};
  Mat layer0(2, model.cfg.d_model), layer1(2, model.cfg.d_model);
  layer0.row(0) = model.unembedding_row(decoy).transpose();
  layer0.row(1) = model.unembedding_row(decoy).transpose();
  layer1.row(0) = model.unembedding_row(decoy).transpose();
  layer1.row(1) = model.unembedding_row(target).transpose();
  trace.states = {layer0, layer1};
  trace.final_logits = Vec::Zero(model.cfg.vocab_size);

  PromptInstance p;
  p.tokens = trace.positions;
  p.query_start = 0;

  std::vector<TrackedVariable> vars{{"x", "w0", *model.tokenizer.find("w0")},
                                    {"fx", "w5", target}};
  const LensDecoder decoder(model);
  const ProcessingSignature sig = signature(trace, p, vars, decoder);
  CHECK(sig.rr(1, 1) == 1.0);        // the aligned state ranks its token first
  CHECK(sig.peak_pos(1, 1) == 1);
  CHECK(sig.rr(0, 1) == 0.5);        // decoy states leave the target at rank 2
}

TEST_CASE("signature reads only query-span states") {
  const Model model = testutil::small_model();
  const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_100_times_2, 0, 150);
  const Example* q = ds.find_x("7");
  REQUIRE(q != nullptr);
  const PromptInstance p = comp_prompt(model, ds, *q, 5);
  ResidualTrace t = model.forward_with_trace(p);
  const auto vars = resolve_variables(ds.spec, *q, model.tokenizer);
  const LensDecoder decoder(model);
  const ProcessingSignature a = signature(t, p, vars, decoder);

  // scramble states outside the query span; the signature must not change
  Rng rng(3);
  for (Mat& s : t.states)
    for (int pos = 0; pos < p.span_begin(); ++pos)
      for (int dcol = 0; dcol < model.cfg.d_model; ++dcol)
        s(pos, dcol) = static_cast<float>(rng.normal());
  const ProcessingSignature b = signature(t, p, vars, decoder);
  CHECK(a.rr == b.rr);
  CHECK(a.peak_pos == b.peak_pos);
}

TEST_CASE("collision filter blocks signature variables") {
  const Tokenizer tok = testutil::mini_tokenizer();
  TaskSpec spec{"t", "f", "g", false, std::nullopt, false, false};
  Example collided{"ancient", "modern", "moderno", std::nullopt, std::nullopt};
  CHECK_THROWS_WITH_AS(static_cast<void>(resolve_variables(spec, collided, tok)),
                       doctest::Contains("collision"), error);
}

TEST_CASE("presence heuristic") {
  ProcessingSignature sig;
  sig.roles = {"x", "fx", "gfx"};
  sig.first_tokens = {0, 1, 2};
  sig.rr = Eigen::MatrixXd::Zero(4, 3);
  sig.peak_pos = Eigen::MatrixXi::Zero(4, 3);
  sig.rr(0, 0) = 1.0;   // x scores never count
  sig.rr(2, 1) = 0.5;   // fx peak at layer 2
  sig.rr(3, 2) = 1.0;   // gfx never counts

  const PresenceScore p = presence(sig);
  CHECK(p.value == 0.5);
  CHECK(p.variable == "fx");
  CHECK(p.layer == 2);

  SUBCASE("monotone in layers") {
    ProcessingSignature trimmed = sig;
    trimmed.rr = sig.rr.topRows(2);
    trimmed.peak_pos = sig.peak_pos.topRows(2);
    CHECK(presence(trimmed).value <= p.value);
  }

  SUBCASE("gx participates when present") {
    ProcessingSignature with_gx = sig;
    with_gx.roles = {"x", "fx", "gx"};
    with_gx.rr(3, 2) = 0.0;  // was the gfx column
    with_gx.rr(1, 2) = 0.9;
    const PresenceScore q = presence(with_gx);
    CHECK(q.value == 0.9);
    CHECK(q.variable == "gx");
  }

  SUBCASE("no intermediate variable errors") {
    ProcessingSignature none = sig;
    none.roles = {"x", "gfx", "fgx"};
    CHECK_THROWS(presence(none));
  }
}

TEST_CASE("aggregation: means, exclusion threshold, mixed roles") {
  auto make_sig = [](double v, bool with_gx) {
    ProcessingSignature s;
    s.roles = with_gx ? std::vector<std::string>{"x", "fx", "gx"}
                      : std::vector<std::string>{"x", "fx"};
    s.first_tokens.assign(s.roles.size(), 0);
    s.rr = Eigen::MatrixXd::Constant(3, static_cast<int>(s.roles.size()), v);
    s.peak_pos = Eigen::MatrixXi::Zero(3, static_cast<int>(s.roles.size()));
    return s;
  };

  SUBCASE("identical signatures aggregate to themselves") {
    std::vector<ProcessingSignature> sigs(12, make_sig(0.25, false));
    const AggregateCurves c = aggregate_signatures(sigs, "correct", 10, false);
    CHECK(!c.excluded);
    CHECK(c.n == 12);
    CHECK(c.curve(0, 0) == 0.25);
    CHECK(c.roles == std::vector<std::string>{"x", "fx"});
  }

  SUBCASE("n = 9 is excluded with a marker") {
    std::vector<ProcessingSignature> sigs(9, make_sig(0.25, false));
    const AggregateCurves c = aggregate_signatures(sigs, "correct", 10, false);
    CHECK(c.excluded);
    CHECK(c.n == 9);
  }

  SUBCASE("alternating 1/0 means 0.5, median differs") {
    std::vector<ProcessingSignature> sigs;
    for (int i = 0; i < 20; ++i) sigs.push_back(make_sig(i % 2 == 0 ? 1.0 : 0.0, false));
    const AggregateCurves mean_c = aggregate_signatures(sigs, "correct", 10, false);
    CHECK(mean_c.curve(1, 1) == 0.5);
    const AggregateCurves med_c = aggregate_signatures(sigs, "correct", 10, true);
    CHECK(med_c.curve(1, 1) == 0.5);  // even count interpolates to 0.5 here too
  }

  SUBCASE("roles are the union; per-role counts recorded") {
    std::vector<ProcessingSignature> sigs(10, make_sig(0.5, false));
    sigs.resize(15, make_sig(1.0, true));
    const AggregateCurves c = aggregate_signatures(sigs, "incorrect", 10, false);
    CHECK(c.roles == std::vector<std::string>{"x", "fx", "gx"});
    CHECK(c.n_per_role[2] == 5);
    CHECK(c.curve(0, 2) == 1.0);
  }
}

TEST_CASE("signature json export") {
  ProcessingSignature s;
  s.roles = {"x", "fx"};
  s.first_tokens = {3, 4};
  s.rr = Eigen::MatrixXd::Constant(2, 2, 0.5);
  s.peak_pos = Eigen::MatrixXi::Zero(2, 2);
  s.span_len = 4;
  const std::string j = signature_to_json(s);
  CHECK(j.find("\"rr\"") != std::string::npos);
  CHECK(j.find("\"fx\"") != std::string::npos);
}
