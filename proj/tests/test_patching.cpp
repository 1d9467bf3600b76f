#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "twohop/common.hpp"
#include "twohop/patching.hpp"
#include "twohop/pipeline.hpp"
#include "twohop/prompting.hpp"

using namespace twohop;

namespace {

ProcessingSignature sig_with(const std::vector<std::string>& roles, int layers) {
  ProcessingSignature s;
  s.roles = roles;
  s.first_tokens.assign(roles.size(), 0);
  s.rr = Eigen::MatrixXd::Zero(layers + 1, static_cast<int>(roles.size()));
  s.peak_pos = Eigen::MatrixXi::Zero(layers + 1, static_cast<int>(roles.size()));
  s.span_len = 10;
  return s;
}

}  // namespace

TEST_CASE("locate_peak and tie breaking") {
  auto s = sig_with({"x", "fx", "gx", "gfx"}, 10);

  SUBCASE("single maximum") {
    s.rr(4, 1) = 0.8;
    s.peak_pos(4, 1) = 3;
    const PeakSite p = locate_peak(s);
    CHECK(p.layer == 4);
    CHECK(p.span_pos == 3);
    CHECK(p.rr == 0.8);
    CHECK(p.variable == "fx");
  }

  SUBCASE("equal maxima at layers 5 and 9 resolve to layer 5") {
    s.rr(5, 1) = 0.7;
    s.rr(9, 1) = 0.7;
    CHECK(locate_peak(s).layer == 5);
  }

  SUBCASE("within a layer the earlier position wins") {
    s.rr(5, 1) = 0.7;
    s.peak_pos(5, 1) = 6;
    s.rr(5, 2) = 0.7;
    s.peak_pos(5, 2) = 2;
    const PeakSite p = locate_peak(s);
    CHECK(p.span_pos == 2);
    CHECK(p.variable == "gx");
  }

  SUBCASE("x and gfx never supply the peak") {
    s.rr(3, 0) = 1.0;
    s.rr(3, 3) = 1.0;
    s.rr(2, 1) = 0.1;
    const PeakSite p = locate_peak(s);
    CHECK(p.variable == "fx");
    CHECK(p.rr == 0.1);
  }

  SUBCASE("no intermediates errors") {
    auto bare = sig_with({"x", "gfx"}, 4);
    CHECK_THROWS(locate_peak(bare));
  }
}

TEST_CASE("group classification thresholds") {
  CHECK(classify_peak(0.5) == SignatureGroup::compositional);
  CHECK(classify_peak(0.75) == SignatureGroup::compositional);
  CHECK(classify_peak(0.2) == SignatureGroup::direct);
  CHECK(classify_peak(0.05) == SignatureGroup::direct);
  CHECK(classify_peak(0.3) == SignatureGroup::excluded);
  CHECK(group_name(SignatureGroup::direct) == "direct");
}

TEST_CASE("percentile resolution is pinned by enumeration") {
  // nearest rank: the 71st percentile of a 10-token span is index 7
  CHECK(resolve_percentile(0.71, 10) == 7);
  CHECK(resolve_percentile(1.0, 10) == 9);
  CHECK(resolve_percentile(0.0, 10) == 0);
  CHECK(resolve_percentile(0.5, 1) == 0);

  // round trip: the percentile recorded for a peak resolves back to it
  for (int n = 1; n <= 30; ++n)
    for (int pos = 0; pos < n; ++pos) {
      const double pct = static_cast<double>(pos + 1) / n;
      CHECK(resolve_percentile(pct, n) == pos);
    }
  CHECK_THROWS(resolve_percentile(1.2, 10));
  CHECK_THROWS(resolve_percentile(0.5, 0));
}

TEST_CASE("median patch site") {
  auto site = [](int layer, int pos, double rr) {
    PeakSite s;
    s.layer = layer;
    s.span_pos = pos;
    s.rr = rr;
    s.variable = "fx";
    return s;
  };

  SUBCASE("single qualifying instance is its own site") {
    std::vector<PeakSite> sites{site(7, 3, 0.9)};
    std::vector<int> spans{10};
    const MedianSite m = median_patch_site(sites, spans);
    CHECK(m.layer == 7);
    CHECK(resolve_percentile(m.percentile, 10) == 3);
  }

  SUBCASE("median over layers 16, 18, 20 is 18") {
    std::vector<PeakSite> sites{site(16, 2, 0.8), site(18, 2, 0.8), site(20, 2, 0.8)};
    std::vector<int> spans{10, 10, 10};
    CHECK(median_patch_site(sites, spans).layer == 18);
  }

  SUBCASE("instances below the threshold do not qualify") {
    std::vector<PeakSite> sites{site(4, 1, 0.3), site(10, 2, 0.9)};
    std::vector<int> spans{8, 8};
    const MedianSite m = median_patch_site(sites, spans);
    CHECK(m.layer == 10);
    std::vector<PeakSite> none{site(4, 1, 0.3)};
    std::vector<int> one{8};
    CHECK_THROWS_WITH_AS(static_cast<void>(median_patch_site(none, one)),
                         doctest::Contains("no qualifying"), error);
  }
}

TEST_CASE("run_patch: self-patch identity and real effects") {
  const Model model = testutil::small_model();
  const TaskDataset ds = generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 150);
  const Example* q = ds.find_x("42");
  REQUIRE(q != nullptr);
  const PromptInstance p = hop_prompt(ds, *q, Hop::x_to_gfx, 10, 5, model.tokenizer);

  PatchPlan plan;
  plan.donor_prompt = p;
  plan.receiver_prompt = p;
  plan.donor_layer = 2;
  plan.donor_pos = p.span_begin() + 1;
  plan.recv_layer = 2;
  plan.recv_pos = p.span_begin() + 1;
  plan.candidate_tokens = {
      answer_first_token(model.tokenizer, "104"), answer_first_token(model.tokenizer, "84"),
      answer_first_token(model.tokenizer, "61"), answer_first_token(model.tokenizer, "99")};
  plan.group = SignatureGroup::compositional;

  SUBCASE("self-patch moves every candidate by less than 1e-4") {
    const CausalEffect eff = run_patch(model, plan);
    for (int c = 0; c < kNumCandidates; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      CHECK(std::abs(eff.delta[ci]) < 1e-4);
      CHECK(eff.delta_rr[ci] == 0.0);
      CHECK(eff.clean_prob[ci] >= 0.0);
      CHECK(eff.clean_prob[ci] <= 1.0);
    }
  }

  SUBCASE("a donor from a different prompt produces a real intervention") {
    const Example* other = ds.find_x("120");
    REQUIRE(other != nullptr);
    plan.donor_prompt = hop_prompt(ds, *other, Hop::x_to_gfx, 10, 6, model.tokenizer);
    plan.donor_pos = plan.donor_prompt.span_begin();
    const CausalEffect eff = run_patch(model, plan);
    double total = 0.0;
    for (double d : eff.delta) total += std::abs(d);
    CHECK(total > 0.0);
  }

  SUBCASE("duplicate candidate tokens are rejected") {
    plan.candidate_tokens[1] = plan.candidate_tokens[0];
    CHECK_THROWS_WITH_AS(static_cast<void>(run_patch(model, plan)),
                         doctest::Contains("pairwise distinct"), error);
  }

  SUBCASE("out-of-range sites are rejected") {
    plan.recv_layer = model.cfg.n_layers + 2;
    CHECK_THROWS(static_cast<void>(run_patch(model, plan)));
  }
}

TEST_CASE("patch stage on antonym task pair") {
  PipelineOptions opts;
  opts.data_dir = TWOHOP_DATA_DIR;
  opts.n_examples = 25;
  opts.eligibility_all = true;   // random weights solve nothing
  opts.patch_min_rr = 0.0;       // accept every instance at desk scale
  opts.max_pairs = 6;

  std::vector<TaskDataset> ds{build_task("antonym-spanish", opts.data_dir, 0),
                              build_task("antonym-german", opts.data_dir, 0),
                              build_task("plus-10-times-2", opts.data_dir, 0)};
  const Model model = testutil::model_for(ds);

  TaskRun recv = run_gap_stage(model, ds[0], opts);
  TaskRun donor = run_gap_stage(model, ds[1], opts);
  const LensDecoder decoder(model);
  const LensRun recv_lens = run_lens_stage(model, recv, decoder, opts);
  const LensRun donor_lens = run_lens_stage(model, donor, decoder, opts);

  const PatchStageResult res = run_patch_stage(model, recv, recv_lens, donor, donor_lens, opts);
  CHECK(res.donor_task == "antonym-german");
  CHECK(res.receiver_task == "antonym-spanish");
  int pairs = 0;
  for (const PatchGroupStats& g : res.groups) pairs += g.n_pairs;
  CHECK(pairs > 0);
  const std::string tsv = patch_result_to_tsv(res);
  CHECK(tsv.find("compositional") != std::string::npos);
  CHECK(tsv.find("direct") != std::string::npos);

  SUBCASE("mismatched f is rejected without the override") {
    TaskRun plus10 = run_gap_stage(model, ds[2], opts);
    const LensRun plus10_lens = run_lens_stage(model, plus10, decoder, opts);
    CHECK_THROWS_WITH_AS(
        static_cast<void>(run_patch_stage(model, recv, recv_lens, plus10, plus10_lens, opts)),
        doctest::Contains("share f"), error);
  }
}
