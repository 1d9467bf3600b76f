#include "twohop/gap.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "twohop/prompting.hpp"

namespace twohop {

using nlohmann::json;

bool exact_match(const std::string& prediction, const std::string& gold) {
  auto normalize = [](const std::string& s) {
    const auto nl = s.find('\n');
    return trim(nl == std::string::npos ? s : s.substr(0, nl));
  };
  return normalize(prediction) == normalize(gold);
}

HopResults evaluate_example(const Model& model, const TaskDataset& task, const Example& example,
                            std::uint64_t seed, const EvalOptions& opts) {
  HopResults res;
  Rng base(seed);

  auto run_hop = [&](Hop h) {
    const std::uint64_t hop_seed = opts.shared_hop_seed ? seed : base.fork(hop_name(h)).next_u64();
    const PromptInstance prompt =
        hop_prompt(task, example, h, opts.k, hop_seed, model.tokenizer);
    const std::string prediction = model.greedy_continue(prompt, opts.max_answer_tokens);
    return exact_match(prediction, hop_output(example, h));
  };

  for (Hop h : defined_hops(task.spec)) res.hops.emplace_back(h, run_hop(h));
  res.composition = run_hop(Hop::x_to_gfx);
  return res;
}

GapReport compositionality_gap(std::span<const HopResults> results) {
  require(!results.empty(), "compositionality_gap: no results");
  GapReport r;
  r.n_total = static_cast<int>(results.size());
  for (const HopResults& hr : results) {
    if (!hr.all_hops()) continue;
    ++r.n_all_hops;
    if (hr.composition) ++r.n_all_hops_and_comp;
  }
  if (r.n_all_hops > 0)
    r.gap = 1.0 - static_cast<double>(r.n_all_hops_and_comp) / r.n_all_hops;
  return r;
}

namespace {

Band band_of(std::vector<double> values) {
  Band b;
  b.median = quantile(values, 0.5);
  b.q1 = quantile(values, 0.25);
  b.q3 = quantile(std::move(values), 0.75);
  return b;
}

}  // namespace

AggregateBands aggregate_models(std::span<const GapReport> per_task) {
  require(!per_task.empty(), "aggregate_models: no reports");
  AggregateBands out;
  out.n_tasks = static_cast<int>(per_task.size());

  std::vector<double> hops, comp, given, gaps;
  for (const GapReport& r : per_task) {
    hops.push_back(r.hops_fraction());
    comp.push_back(r.comp_fraction());
    if (auto g = r.comp_given_hops()) given.push_back(*g);
    if (r.gap) gaps.push_back(*r.gap);
  }
  out.hops_fraction = band_of(std::move(hops));
  out.comp_fraction = band_of(std::move(comp));
  if (!given.empty()) out.comp_given_hops = band_of(std::move(given));
  out.n_gap_defined = static_cast<int>(gaps.size());
  if (!gaps.empty()) out.gap = band_of(std::move(gaps));
  return out;
}

PearsonResult hops_vs_comp_correlation(std::span<const GapReport> per_task) {
  std::vector<double> red, yellow;
  for (const GapReport& r : per_task) {
    if (auto g = r.comp_given_hops()) {
      red.push_back(r.hops_fraction());
      yellow.push_back(*g);
    }
  }
  require(red.size() >= 2, "hops_vs_comp_correlation: need >= 2 tasks with defined proportions");
  return pearson(red, yellow);
}

std::string gap_report_to_json(const GapReport& report) {
  json j;
  j["task"] = report.task;
  j["n_total"] = report.n_total;
  j["n_all_hops"] = report.n_all_hops;
  j["n_all_hops_and_comp"] = report.n_all_hops_and_comp;
  if (report.gap)
    j["gap"] = *report.gap;
  else
    j["gap"] = "undefined";
  return j.dump();
}

GapReport gap_report_from_json(const std::string& text) {
  json j = json::parse(text);
  GapReport r;
  r.task = j.value("task", "");
  r.n_total = j.at("n_total").get<int>();
  r.n_all_hops = j.at("n_all_hops").get<int>();
  r.n_all_hops_and_comp = j.at("n_all_hops_and_comp").get<int>();
  if (j.contains("gap") && j["gap"].is_number()) r.gap = j["gap"].get<double>();
  return r;
}

std::string gap_reports_to_tsv(std::span<const GapReport> reports) {
  std::string out = "task\tn_total\tn_all_hops\tn_all_hops_and_comp\tgap\n";
  for (const GapReport& r : reports) {
    out += r.task + "\t" + std::to_string(r.n_total) + "\t" + std::to_string(r.n_all_hops) + "\t" +
           std::to_string(r.n_all_hops_and_comp) + "\t";
    if (r.gap) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", *r.gap);
      out += buf;
    } else {
      out += "undefined";
    }
    out += "\n";
  }
  return out;
}

}  // namespace twohop
