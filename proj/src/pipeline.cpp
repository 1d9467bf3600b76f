#include "twohop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "twohop/prompting.hpp"

namespace twohop {

std::uint64_t example_seed(const PipelineOptions& opts, const std::string& task_name,
                           const std::string& x) {
  return Rng(opts.seed).fork(task_name).fork("example:" + x).next_u64();
}

PromptInstance composition_prompt(const TaskDataset& task, const Example& e,
                                  std::uint64_t ex_seed, const Model& model,
                                  const PipelineOptions& opts) {
  const std::uint64_t hop_seed =
      opts.shared_hop_seed ? ex_seed : Rng(ex_seed).fork(hop_name(Hop::x_to_gfx)).next_u64();
  return hop_prompt(task, e, Hop::x_to_gfx, opts.k, hop_seed, model.tokenizer);
}

TaskRun run_gap_stage(const Model& model, TaskDataset dataset, const PipelineOptions& opts) {
  TaskRun run;
  run.dataset = std::move(dataset);

  std::vector<std::size_t> order(run.dataset.examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng query_rng = Rng(opts.seed).fork(run.dataset.spec.name).fork("queries");
  query_rng.shuffle(order);
  std::size_t n = order.size();
  if (opts.n_examples > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(opts.n_examples));

  EvalOptions eval_opts;
  eval_opts.k = opts.k;
  eval_opts.max_answer_tokens = opts.max_answer_tokens;
  eval_opts.shared_hop_seed = opts.shared_hop_seed;

  std::vector<HopResults> all_results;
  for (std::size_t qi = 0; qi < n; ++qi) {
    const std::size_t idx = order[qi];
    const Example& e = run.dataset.examples[idx];
    EvaluatedExample ev;
    ev.index = idx;
    ev.seed = example_seed(opts, run.dataset.spec.name, e.x);
    try {
      ev.results = evaluate_example(model, run.dataset, e, ev.seed, eval_opts);
    } catch (const error&) {
      // insufficient disjoint ICL pool for this query
      ++run.n_skipped;
      continue;
    }
    ev.collision = first_token_collision(run.dataset.spec, e, model.tokenizer);
    all_results.push_back(ev.results);
    run.evaluated.push_back(std::move(ev));
  }
  require(!run.evaluated.empty(),
          "gap stage: no evaluable queries for task " + run.dataset.spec.name);
  run.gap = compositionality_gap(all_results);
  run.gap.task = run.dataset.spec.name;
  return run;
}

std::vector<double> LensRun::presence_values(bool correct_only) const {
  std::vector<double> out;
  for (const AnalyzedExample& a : analyzed)
    if (!correct_only || a.composition_correct) out.push_back(a.presence.value);
  return out;
}

std::optional<double> LensRun::mean_presence(bool correct_only) const {
  const auto vals = presence_values(correct_only);
  if (vals.empty()) return std::nullopt;
  return mean(vals);
}

LensRun run_lens_stage(const Model& model, const TaskRun& run, const Decoder& decoder,
                       const PipelineOptions& opts) {
  LensRun lens;
  lens.decoder = decoder.name();

  for (const EvaluatedExample& ev : run.evaluated) {
    const bool hops_ok = ev.results.all_hops();
    if (!opts.eligibility_all && !hops_ok) continue;
    if (ev.collision) {
      ++lens.n_collisions;
      continue;
    }
    const Example& e = run.dataset.examples[ev.index];
    const PromptInstance prompt = composition_prompt(run.dataset, e, ev.seed, model, opts);
    const ResidualTrace trace = model.forward_with_trace(prompt);
    const auto vars = resolve_variables(run.dataset.spec, e, model.tokenizer);

    AnalyzedExample a;
    a.index = ev.index;
    a.sig = signature(trace, prompt, vars, decoder);
    a.sig.composition_correct = ev.results.composition;
    a.presence = presence(a.sig);
    a.peak = locate_peak(a.sig);
    a.span_len = prompt.span_len();
    a.all_hops_correct = hops_ok;
    a.composition_correct = ev.results.composition;
    lens.analyzed.push_back(std::move(a));
  }

  std::vector<ProcessingSignature> correct, incorrect;
  for (const AnalyzedExample& a : lens.analyzed)
    (a.composition_correct ? correct : incorrect).push_back(a.sig);
  lens.correct_curves =
      aggregate_signatures(correct, "correct", opts.min_examples, opts.median_curves);
  lens.incorrect_curves =
      aggregate_signatures(incorrect, "incorrect", opts.min_examples, opts.median_curves);
  return lens;
}

std::vector<Example> eligible_examples(const Model& model, const TaskRun& run,
                                       const PipelineOptions& opts) {
  std::vector<Example> out;
  for (const EvaluatedExample& ev : run.evaluated) {
    if (ev.collision) continue;
    const bool success = ev.results.all_hops() && ev.results.composition;
    if (!opts.eligibility_all && !success) continue;
    out.push_back(run.dataset.examples[ev.index]);
  }
  return out;
}

LinearityTaskResult run_linearity_stage(const Model& model, const TaskRun& run,
                                        const PipelineOptions& opts, bool with_hops) {
  LinearityTaskResult res;
  res.task = run.dataset.spec.name;
  const std::vector<Example> eligible = eligible_examples(model, run, opts);
  res.n_eligible = static_cast<int>(eligible.size());
  if (res.n_eligible < opts.n_fit + 10) {
    res.excluded = true;
    res.exclusion_reason = "only " + std::to_string(res.n_eligible) +
                           " eligible examples, need >= " + std::to_string(opts.n_fit + 10);
    return res;
  }

  const std::uint64_t fit_seed = Rng(opts.seed).fork(res.task).fork("linearity").next_u64();
  TaskLinearity tl =
      fit_linear(run.dataset, model, Hop::x_to_gfx, eligible, opts.n_fit, fit_seed, opts.fit_bias);
  res.map = tl.map;
  res.score = tl.map.score;

  if (opts.score_top1) {
    const Eigen::Index d = model.cfg.d_model;
    const Eigen::Index nh = static_cast<Eigen::Index>(tl.heldout_indices.size());
    MatD Xh(nh, d);
    std::vector<int> gold;
    for (Eigen::Index i = 0; i < nh; ++i) {
      const Example& e = eligible[tl.heldout_indices[static_cast<std::size_t>(i)]];
      Xh.row(i) = mean_source_embedding(model, hop_input(e, Hop::x_to_gfx)).transpose();
      gold.push_back(target_first_token(model, hop_output(e, Hop::x_to_gfx)));
    }
    res.score = top1_accuracy(tl.map, Xh, gold, model);
  }

  if (with_hops) {
    res.hops = hop_linearity_suite(run.dataset, model, eligible, opts.n_fit,
                                   Rng(fit_seed).fork("hops").next_u64(), opts.fit_bias);
  }
  return res;
}

namespace {

struct CandidateSet {
  std::array<int, kNumCandidates> tokens{};
  bool ok = false;
};

// g(f(x)), g(f(x')), g'(f(x)), g'(f(x')) resolved through both datasets
CandidateSet resolve_candidates(const Model& model, const TaskDataset& receiver,
                                const TaskDataset& donor, const std::string& x,
                                const std::string& x_prime) {
  CandidateSet c;
  const Example* rx = receiver.find_x(x);
  const Example* rxp = receiver.find_x(x_prime);
  const Example* dx = donor.find_x(x);
  const Example* dxp = donor.find_x(x_prime);
  if (!rx || !rxp || !dx || !dxp) return c;
  c.tokens = {answer_first_token(model.tokenizer, rx->gfx),
              answer_first_token(model.tokenizer, rxp->gfx),
              answer_first_token(model.tokenizer, dx->gfx),
              answer_first_token(model.tokenizer, dxp->gfx)};
  for (int i = 0; i < kNumCandidates; ++i)
    for (int j = i + 1; j < kNumCandidates; ++j)
      if (c.tokens[static_cast<std::size_t>(i)] == c.tokens[static_cast<std::size_t>(j)]) return c;
  c.ok = true;
  return c;
}

}  // namespace

PatchStageResult run_patch_stage(const Model& model, const TaskRun& receiver_run,
                                 const LensRun& receiver_lens, const TaskRun& donor_run,
                                 const LensRun& donor_lens, const PipelineOptions& opts) {
  const TaskSpec& rspec = receiver_run.dataset.spec;
  const TaskSpec& dspec = donor_run.dataset.spec;
  require(rspec.name != dspec.name, "patch stage: donor and receiver tasks must differ");
  if (!opts.allow_f_mismatch)
    require(rspec.f_desc == dspec.f_desc,
            "patch stage: tasks must share f (got '" + rspec.f_desc + "' vs '" + dspec.f_desc +
                "'); pass --allow-f-mismatch to override");
  require(rspec.g_desc != dspec.g_desc, "patch stage: tasks must differ in g");

  PatchStageResult result;
  result.donor_task = dspec.name;
  result.receiver_task = rspec.name;

  // global median site over qualifying instances of both tasks
  std::vector<PeakSite> sites;
  std::vector<int> lens_spans;
  for (const LensRun* lr : {&receiver_lens, &donor_lens}) {
    for (const AnalyzedExample& a : lr->analyzed) {
      sites.push_back(a.peak);
      lens_spans.push_back(a.span_len);
    }
  }
  result.site = median_patch_site(sites, lens_spans, opts.patch_min_rr);

  // qualifying donors: peak rr >= threshold
  std::vector<const AnalyzedExample*> donors;
  for (const AnalyzedExample& a : donor_lens.analyzed)
    if (a.peak.rr >= opts.patch_min_rr) donors.push_back(&a);
  require(!donors.empty(), "patch stage: no qualifying donor instances (peak rr >= " +
                               std::to_string(opts.patch_min_rr) + ")");

  struct Accum {
    std::vector<std::array<double, kNumCandidates>> deltas;
    std::vector<std::array<double, kNumCandidates>> deltas_rr;
  };
  Accum by_group[2];  // compositional, direct

  Rng donor_rng = Rng(opts.seed).fork("patch:donors");
  std::size_t donor_cursor = 0;
  std::vector<const AnalyzedExample*> donor_order = donors;
  donor_rng.shuffle(donor_order);

  int made[2] = {0, 0};
  for (const AnalyzedExample& recv : receiver_lens.analyzed) {
    const SignatureGroup group = classify_peak(recv.peak.rr);
    if (group == SignatureGroup::excluded) continue;
    const int gi = group == SignatureGroup::compositional ? 0 : 1;
    if (made[gi] >= opts.max_pairs) continue;

    const Example& x_ex = receiver_run.dataset.examples[recv.index];

    // next donor with a usable candidate set
    const AnalyzedExample* donor = nullptr;
    CandidateSet cands;
    for (std::size_t tries = 0; tries < donor_order.size(); ++tries) {
      const AnalyzedExample* cand = donor_order[donor_cursor];
      donor_cursor = (donor_cursor + 1) % donor_order.size();
      const Example& xp_ex = donor_run.dataset.examples[cand->index];
      if (xp_ex.x == x_ex.x) continue;
      cands = resolve_candidates(model, receiver_run.dataset, donor_run.dataset, x_ex.x, xp_ex.x);
      if (!cands.ok) {
        ++result.n_candidate_skips;
        continue;
      }
      donor = cand;
      break;
    }
    if (!donor) continue;
    const Example& xp_ex = donor_run.dataset.examples[donor->index];

    PatchPlan plan;
    const std::uint64_t recv_seed = example_seed(opts, rspec.name, x_ex.x);
    const std::uint64_t donor_seed = example_seed(opts, dspec.name, xp_ex.x);
    plan.receiver_prompt = composition_prompt(receiver_run.dataset, x_ex, recv_seed, model, opts);
    plan.donor_prompt = composition_prompt(donor_run.dataset, xp_ex, donor_seed, model, opts);
    plan.donor_layer = donor->peak.layer;
    plan.donor_pos = plan.donor_prompt.span_begin() + donor->peak.span_pos;
    if (opts.per_pair_site) {
      plan.recv_layer = recv.peak.layer;
      plan.recv_pos = plan.receiver_prompt.span_begin() + recv.peak.span_pos;
    } else {
      plan.recv_layer = result.site.layer;
      plan.recv_pos = plan.receiver_prompt.span_begin() +
                      resolve_percentile(result.site.percentile, plan.receiver_prompt.span_len());
    }
    plan.candidate_tokens = cands.tokens;
    plan.group = group;

    const CausalEffect eff = run_patch(model, plan);
    by_group[gi].deltas.push_back(eff.delta);
    by_group[gi].deltas_rr.push_back(eff.delta_rr);
    ++made[gi];
  }

  for (int gi = 0; gi < 2; ++gi) {
    PatchGroupStats stats;
    stats.group = gi == 0 ? SignatureGroup::compositional : SignatureGroup::direct;
    stats.n_pairs = static_cast<int>(by_group[gi].deltas.size());
    if (stats.n_pairs > 0) {
      for (int c = 0; c < kNumCandidates; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        std::vector<double> vals, vals_rr;
        for (const auto& d : by_group[gi].deltas) vals.push_back(d[ci]);
        for (const auto& d : by_group[gi].deltas_rr) vals_rr.push_back(d[ci]);
        stats.mean_delta[ci] = mean(vals);
        stats.mean_delta_rr[ci] = mean(vals_rr);
        if (vals.size() > 1) {
          double ss = 0.0;
          for (double v : vals) ss += (v - stats.mean_delta[ci]) * (v - stats.mean_delta[ci]);
          stats.stderr_delta[ci] =
              std::sqrt(ss / (vals.size() - 1)) / std::sqrt(static_cast<double>(vals.size()));
        }
      }
    }
    result.groups.push_back(stats);
  }
  return result;
}

std::string patch_result_to_tsv(const PatchStageResult& r) {
  std::string out = "donor_task\treceiver_task\tgroup\tn_pairs";
  for (const char* c : kCandidateNames) {
    out += "\tdelta[";
    out += c;
    out += "]\tstderr[";
    out += c;
    out += "]";
  }
  out += "\n";
  char buf[64];
  for (const PatchGroupStats& g : r.groups) {
    out += r.donor_task + "\t" + r.receiver_task + "\t" + group_name(g.group) + "\t" +
           std::to_string(g.n_pairs);
    for (int c = 0; c < kNumCandidates; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f", g.mean_delta[ci], g.stderr_delta[ci]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace twohop
