// twohop: batch analyses of two-hop task processing in local causal LMs.
// Subcommands: gap, lens, patchscope, linearity, patch, report.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "twohop/patchscope.hpp"
#include "twohop/pipeline.hpp"
#include "twohop/report.hpp"
#include "twohop/svgplot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twohop;

namespace {

struct CommonOpts {
  std::string model_path;
  std::string tokenizer_path;
  std::vector<std::string> tasks;
  std::string out_root = "out";
  PipelineOptions pipe;
  std::string eligibility = "successful";
  std::string decoder = "lens";
  int dump_traces = 0;
};

void add_model_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--model", o.model_path,
                  "checkpoint file, or a directory containing model.bin and tokenizer.json")
      ->required();
  cmd->add_option("--tokenizer", o.tokenizer_path, "tokenizer JSON (default: next to checkpoint)");
}

void add_common_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--tasks", o.tasks, "comma-separated task names")->delimiter(',');
  cmd->add_option("--n", o.pipe.n_examples, "examples per task (<=0 for all)");
  cmd->add_option("--seed", o.pipe.seed, "run seed");
  cmd->add_option("--k", o.pipe.k, "in-context examples per prompt");
  cmd->add_option("--out", o.out_root, "output root directory");
  cmd->add_option("--data-dir", o.pipe.data_dir, "pair-file directory")
      ->envname("TWOHOP_DATA_DIR");
  cmd->add_option("--max-answer-tokens", o.pipe.max_answer_tokens, "greedy decoding budget");
  cmd->add_flag("--shared-hop-icl", o.pipe.shared_hop_seed,
                "reuse one ICL seed across the hops of an example");
  cmd->add_option("--eligibility", o.eligibility,
                  "which examples the analyses use: successful|all")
      ->check(CLI::IsMember({"successful", "all"}));
  cmd->add_option("--min-examples", o.pipe.min_examples,
                  "exclude tasks with fewer analyzed examples");
}

std::pair<std::string, std::string> resolve_model(const CommonOpts& o) {
  std::string model = o.model_path;
  const char* cache = std::getenv("TWOHOP_MODEL_DIR");
  if (cache && !fs::exists(model) && fs::path(model).is_relative()) {
    const std::string prefixed = std::string(cache) + "/" + model;
    if (fs::exists(prefixed)) model = prefixed;
  }
  if (!fs::exists(model)) throw error("model not found: " + model);
  std::string ckpt = model, tok = o.tokenizer_path;
  if (fs::is_directory(model)) {
    ckpt = model + "/model.bin";
    if (tok.empty()) tok = model + "/tokenizer.json";
  } else if (tok.empty()) {
    tok = (fs::path(model).parent_path() / "tokenizer.json").string();
  }
  if (!fs::exists(ckpt)) throw error("checkpoint not found: " + ckpt);
  if (!fs::exists(tok)) throw error("tokenizer not found: " + tok);
  return {ckpt, tok};
}

std::map<std::string, std::string> config_map(const CommonOpts& o, const std::string& stage) {
  std::map<std::string, std::string> m;
  m["stage"] = stage;
  m["model"] = o.model_path;
  std::string tasks;
  for (const auto& t : o.tasks) tasks += (tasks.empty() ? "" : ",") + t;
  m["tasks"] = tasks;
  m["n"] = std::to_string(o.pipe.n_examples);
  m["k"] = std::to_string(o.pipe.k);
  m["seed"] = std::to_string(o.pipe.seed);
  m["eligibility"] = o.eligibility;
  m["decoder"] = o.decoder;
  m["data_dir"] = o.pipe.data_dir;
  return m;
}

std::vector<std::string> default_tasks() {
  return {"antonym-spanish", "plus-100-times-2", "park-country-capital", "book-author-birthyear"};
}

void finalize(CommonOpts& o) {
  if (o.tasks.empty()) o.tasks = default_tasks();
  o.pipe.eligibility_all = o.eligibility == "all";
  for (const std::string& t : o.tasks)
    if (!is_known_task(t)) throw error("unknown task: '" + t + "'");
}

std::string hop_results_jsonl(const TaskRun& run) {
  std::string out;
  for (const EvaluatedExample& ev : run.evaluated) {
    json j;
    j["x"] = run.dataset.examples[ev.index].x;
    json hops = json::object();
    for (const auto& [h, ok] : ev.results.hops) hops[hop_name(h)] = ok;
    j["hops"] = hops;
    j["composition"] = ev.results.composition;
    j["all_hops"] = ev.results.all_hops();
    j["collision"] = ev.collision;
    out += j.dump() + "\n";
  }
  return out;
}

json bands_json(const AggregateBands& b) {
  auto band = [](const Band& x) {
    return json{{"median", x.median}, {"q1", x.q1}, {"q3", x.q3}};
  };
  json j;
  j["n_tasks"] = b.n_tasks;
  j["hops_fraction"] = band(b.hops_fraction);
  j["comp_fraction"] = band(b.comp_fraction);
  j["comp_given_hops"] = band(b.comp_given_hops);
  if (b.n_gap_defined > 0)
    j["gap"] = band(b.gap);
  else
    j["gap"] = "undefined";
  j["n_gap_defined"] = b.n_gap_defined;
  return j;
}

std::vector<TaskRun> run_gap_for_tasks(const Model& model, const CommonOpts& o, RunContext& ctx) {
  std::vector<TaskRun> runs;
  for (const std::string& name : o.tasks) {
    std::cerr << "[gap] task " << name << "\n";
    TaskDataset ds = build_task(name, o.pipe.data_dir, o.pipe.seed);
    runs.push_back(run_gap_stage(model, std::move(ds), o.pipe));
  }
  const std::string dir = ctx.stage_dir("gap");
  std::vector<GapReport> reports;
  for (const TaskRun& run : runs) {
    reports.push_back(run.gap);
    write_file(dir + "/" + run.gap.task + ".json", gap_report_to_json(run.gap) + "\n");
    write_file(dir + "/" + run.gap.task + ".examples.jsonl", hop_results_jsonl(run));
  }
  write_file(dir + "/gap.tsv", gap_reports_to_tsv(reports));
  emit_gap_charts(dir, reports);

  json summary;
  summary["model"] = {{"name", model.cfg.name},
                      {"n_params", model.n_params()},
                      {"n_layers", model.cfg.n_layers}};
  summary["aggregate"] = bands_json(aggregate_models(reports));
  json per_task = json::array();
  for (const GapReport& r : reports) per_task.push_back(json::parse(gap_report_to_json(r)));
  summary["tasks"] = per_task;
  write_file(dir + "/model_summary.json", summary.dump(1) + "\n");
  return runs;
}

struct LensOutputs {
  std::vector<LensRun> lens_runs;
};

LensOutputs run_lens_for_tasks(const Model& model, const CommonOpts& o, RunContext& ctx,
                               const std::vector<TaskRun>& runs) {
  LensOutputs out;
  std::unique_ptr<Decoder> decoder;
  if (o.decoder == "patchscope")
    decoder = std::make_unique<PatchscopeDecoder>(
        model, o.pipe.patchscope_pairs, Rng(o.pipe.seed).fork("patchscope").next_u64());
  else
    decoder = std::make_unique<LensDecoder>(model);

  const std::string dir = ctx.stage_dir(o.decoder == "patchscope" ? "patchscope" : "lens");
  std::vector<std::string> task_names;
  std::vector<std::vector<double>> presence_by_task;

  for (const TaskRun& run : runs) {
    std::cerr << "[" << decoder->name() << "] task " << run.dataset.spec.name << "\n";
    LensRun lens = run_lens_stage(model, run, *decoder, o.pipe);

    std::string sigs;
    for (const AnalyzedExample& a : lens.analyzed) {
      json j = json::parse(signature_to_json(a.sig));
      j["x"] = run.dataset.examples[a.index].x;
      j["presence"] = a.presence.value;
      j["presence_variable"] = a.presence.variable;
      j["presence_layer"] = a.presence.layer;
      sigs += j.dump() + "\n";
    }
    const std::string base = dir + "/" + run.dataset.spec.name;
    write_file(base + ".signatures.jsonl", sigs);

    for (const AggregateCurves* curves : {&lens.correct_curves, &lens.incorrect_curves}) {
      if (curves->excluded) {
        json marker;
        marker["task"] = run.dataset.spec.name;
        marker["outcome"] = curves->outcome;
        marker["excluded"] = true;
        marker["n"] = curves->n;
        marker["reason"] =
            "task excluded (<" + std::to_string(o.pipe.min_examples) + " examples)";
        write_file(base + "_" + curves->outcome + ".excluded.json", marker.dump(1) + "\n");
      } else {
        emit_signature_plot(dir, run.dataset.spec.name, *curves);
      }
    }

    if (o.dump_traces > 0) {
      const std::string tdir = dir + "/traces";
      ensure_dir(tdir);
      int dumped = 0;
      for (const AnalyzedExample& a : lens.analyzed) {
        if (dumped >= o.dump_traces) break;
        const Example& e = run.dataset.examples[a.index];
        const std::uint64_t es = example_seed(o.pipe, run.dataset.spec.name, e.x);
        const PromptInstance p = composition_prompt(run.dataset, e, es, model, o.pipe);
        save_trace(model.forward_with_trace(p),
                   tdir + "/" + run.dataset.spec.name + "_" + std::to_string(dumped));
        ++dumped;
      }
    }

    task_names.push_back(run.dataset.spec.name);
    presence_by_task.push_back(lens.presence_values(!o.pipe.eligibility_all));
    out.lens_runs.push_back(std::move(lens));
  }

  emit_presence_histogram(dir, task_names, presence_by_task, o.decoder);
  return out;
}

int cmd_gap(CommonOpts& o) {
  finalize(o);
  auto [ckpt, tok] = resolve_model(o);
  const Model model = Model::load(ckpt, tok);
  RunContext ctx = RunContext::create(o.out_root, "gap", config_map(o, "gap"), o.pipe.seed);
  ctx.record_model(model);
  run_gap_for_tasks(model, o, ctx);
  ctx.write_manifest();
  std::cout << ctx.dir() << "\n";
  return 0;
}

int cmd_lens(CommonOpts& o) {
  finalize(o);
  auto [ckpt, tok] = resolve_model(o);
  const Model model = Model::load(ckpt, tok);
  const std::string stage = o.decoder == "patchscope" ? "patchscope" : "lens";
  RunContext ctx = RunContext::create(o.out_root, stage, config_map(o, stage), o.pipe.seed);
  ctx.record_model(model);
  const auto runs = run_gap_for_tasks(model, o, ctx);
  run_lens_for_tasks(model, o, ctx, runs);
  ctx.write_manifest();
  std::cout << ctx.dir() << "\n";
  return 0;
}

int cmd_linearity(CommonOpts& o, bool with_hops) {
  finalize(o);
  auto [ckpt, tok] = resolve_model(o);
  const Model model = Model::load(ckpt, tok);
  RunContext ctx =
      RunContext::create(o.out_root, "linearity", config_map(o, "linearity"), o.pipe.seed);
  ctx.record_model(model);
  const auto runs = run_gap_for_tasks(model, o, ctx);
  const auto lens_out = run_lens_for_tasks(model, o, ctx, runs);

  const std::string dir = ctx.stage_dir("linearity");
  json per_task = json::array();
  std::vector<double> presence_means, linearity_scores;
  std::vector<ScatterPoint> scatter;

  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::cerr << "[linearity] task " << runs[i].dataset.spec.name << "\n";
    LinearityTaskResult res = run_linearity_stage(model, runs[i], o.pipe, with_hops);
    json j;
    j["task"] = res.task;
    j["n_eligible"] = res.n_eligible;
    j["excluded"] = res.excluded;
    if (res.excluded) {
      j["reason"] = res.exclusion_reason;
    } else {
      j["score"] = res.score;
      j["metric"] = o.pipe.score_top1 ? "top1" : "mean_cosine";
      save_linear_map(res.map, dir + "/" + res.task + ".x_to_gfx");
      if (res.hops) {
        json h;
        h["x_to_fx"] = res.hops->first_hop;
        h["fx_to_gfx"] = res.hops->second_hop;
        if (res.hops->gx_first) h["x_to_gx"] = *res.hops->gx_first;
        if (res.hops->gx_second) h["gx_to_gfx"] = *res.hops->gx_second;
        h["min"] = res.hops->min_score;
        h["max"] = res.hops->max_score;
        j["hops"] = h;
      }
      if (auto p = lens_out.lens_runs[i].mean_presence(!o.pipe.eligibility_all)) {
        j["mean_presence"] = *p;
        presence_means.push_back(*p);
        linearity_scores.push_back(res.score);
        scatter.push_back({res.score, *p, res.task, static_cast<int>(scatter.size())});
      }
    }
    per_task.push_back(j);
  }

  json summary;
  summary["tasks"] = per_task;
  if (presence_means.size() >= 3) {
    const PearsonResult pr = correlate_tasks(linearity_scores, presence_means);
    if (pr.defined) {
      summary["presence_vs_linearity_r2"] = pr.r2;
      summary["presence_vs_linearity_r"] = pr.r;
      summary["inverse"] = pr.r < 0.0;
    } else {
      summary["presence_vs_linearity_r2"] = "undefined (zero variance)";
    }
  } else {
    summary["presence_vs_linearity_r2"] =
        "not computed (need >= 3 tasks with eligible fits, got " +
        std::to_string(presence_means.size()) + ")";
  }
  write_file(dir + "/linearity.json", summary.dump(1) + "\n");
  if (!scatter.empty())
    write_scatter(dir + "/presence_vs_linearity.svg", "presence vs linearity by task",
                  "linearity (held-out cosine)", "intermediate presence", scatter, false);
  ctx.write_manifest();
  std::cout << ctx.dir() << "\n";
  return 0;
}

int cmd_patch(CommonOpts& o, const std::string& donor_task, const std::string& receiver_task) {
  o.tasks = {receiver_task, donor_task};
  finalize(o);
  auto [ckpt, tok] = resolve_model(o);
  const Model model = Model::load(ckpt, tok);
  RunContext ctx = RunContext::create(o.out_root, "patch", config_map(o, "patch"), o.pipe.seed);
  ctx.record_model(model);
  const auto runs = run_gap_for_tasks(model, o, ctx);
  const auto lens_out = run_lens_for_tasks(model, o, ctx, runs);

  std::cerr << "[patch] " << donor_task << " -> " << receiver_task << "\n";
  const PatchStageResult res = run_patch_stage(model, runs[0], lens_out.lens_runs[0], runs[1],
                                               lens_out.lens_runs[1], o.pipe);
  const std::string dir = ctx.stage_dir("patch");
  write_file(dir + "/effects.tsv", patch_result_to_tsv(res));
  json j;
  j["donor_task"] = res.donor_task;
  j["receiver_task"] = res.receiver_task;
  j["median_site"] = {{"layer", res.site.layer}, {"percentile", res.site.percentile}};
  j["n_candidate_skips"] = res.n_candidate_skips;
  json groups = json::array();
  for (const PatchGroupStats& g : res.groups) {
    json gj;
    gj["group"] = group_name(g.group);
    gj["n_pairs"] = g.n_pairs;
    for (int c = 0; c < kNumCandidates; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      gj["delta"][kCandidateNames[ci]] = g.mean_delta[ci];
      gj["stderr"][kCandidateNames[ci]] = g.stderr_delta[ci];
      gj["delta_rr"][kCandidateNames[ci]] = g.mean_delta_rr[ci];
    }
    groups.push_back(gj);
  }
  j["groups"] = groups;
  write_file(dir + "/effects.json", j.dump(1) + "\n");
  ctx.write_manifest();
  std::cout << ctx.dir() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_root,
               std::uint64_t seed) {
  require(inputs.size() >= 2, "report: need >= 2 model_summary.json inputs");
  std::map<std::string, std::string> cfg;
  cfg["stage"] = "report";
  for (std::size_t i = 0; i < inputs.size(); ++i) cfg["input" + std::to_string(i)] = inputs[i];
  RunContext ctx = RunContext::create(out_root, "report", cfg, seed);

  std::vector<std::pair<double, json>> by_size;
  for (const std::string& path : inputs) {
    ctx.record_input(path, path);
    json j = json::parse(read_file(path));
    by_size.emplace_back(j.at("model").at("n_params").get<double>(), j);
  }
  std::sort(by_size.begin(), by_size.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<ModelPoint> points;
  std::vector<Series> band_series(3);
  band_series[0].label = "all hops (median)";
  band_series[1].label = "composition|hops (median)";
  band_series[2].label = "gap (median)";
  band_series[2].dashed = true;

  const std::string dir = ctx.stage_dir("report");
  double xi = 0.0;
  for (const auto& [params, j] : by_size) {
    const json& agg = j.at("aggregate");
    ModelPoint p;
    p.name = j.at("model").at("name").get<std::string>();
    p.n_params = params;
    p.n_layers = j.at("model").at("n_layers").get<int>();
    if (!agg.at("gap").is_object()) {
      std::cerr << "report: model " << p.name << " has undefined gap, skipped\n";
      continue;
    }
    p.gap = agg.at("gap").at("median").get<double>();
    points.push_back(p);
    band_series[0].xs.push_back(xi);
    band_series[0].ys.push_back(agg.at("hops_fraction").at("median").get<double>());
    band_series[1].xs.push_back(xi);
    band_series[1].ys.push_back(agg.at("comp_given_hops").at("median").get<double>());
    band_series[2].xs.push_back(xi);
    band_series[2].ys.push_back(p.gap);
    xi += 1.0;
  }
  require(points.size() >= 2, "report: fewer than 2 inputs with a defined gap");
  emit_gap_vs_size(dir, points);
  write_line_chart(dir + "/models_curves.svg", "hop/composition medians by model",
                   "model (sorted by parameters)", "proportion", band_series);
  json names = json::array();
  for (const ModelPoint& p : points) names.push_back(p.name);
  json data;
  data["models"] = names;
  write_file(dir + "/models_curves.json", data.dump(1) + "\n");
  ctx.write_manifest();
  std::cout << ctx.dir() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-hop composition analyses for locally hosted causal language models"};
  app.require_subcommand(1);
  app.set_config("--config");

  CommonOpts gap_o, lens_o, scope_o, lin_o, patch_o;
  bool lin_hops = false;
  bool no_bias = false;
  bool top1 = false;
  std::string donor_task = "antonym-german", receiver_task = "antonym-spanish";
  std::vector<std::string> report_inputs;
  std::string report_out = "out";
  std::uint64_t report_seed = 0;

  CLI::App* gap_cmd = app.add_subcommand("gap", "hop/composition accuracy and the gap");
  add_model_options(gap_cmd, gap_o);
  add_common_options(gap_cmd, gap_o);

  CLI::App* lens_cmd = app.add_subcommand("lens", "processing signatures via logit lens");
  add_model_options(lens_cmd, lens_o);
  add_common_options(lens_cmd, lens_o);
  lens_cmd->add_option("--decoder", lens_o.decoder, "residual decoder: lens|patchscope")
      ->check(CLI::IsMember({"lens", "patchscope"}));
  lens_cmd->add_flag("--median-curves", lens_o.pipe.median_curves,
                     "aggregate with medians instead of means");
  lens_cmd->add_option("--dump-traces", lens_o.dump_traces,
                       "export residual traces for the first N analyzed examples per task");
  lens_cmd->add_option("--patchscope-pairs", lens_o.pipe.patchscope_pairs,
                       "repeated token pairs in the identity prompt");

  CLI::App* scope_cmd =
      app.add_subcommand("patchscope", "processing signatures via token-identity patchscope");
  add_model_options(scope_cmd, scope_o);
  add_common_options(scope_cmd, scope_o);
  scope_cmd->add_option("--patchscope-pairs", scope_o.pipe.patchscope_pairs,
                        "repeated token pairs in the identity prompt");
  scope_cmd->add_flag("--median-curves", scope_o.pipe.median_curves,
                      "aggregate with medians instead of means");

  CLI::App* lin_cmd =
      app.add_subcommand("linearity", "embedding-space linear maps and correlations");
  add_model_options(lin_cmd, lin_o);
  add_common_options(lin_cmd, lin_o);
  lin_cmd->add_option("--n-fit", lin_o.pipe.n_fit, "examples used to fit each map");
  lin_cmd->add_flag("--no-bias", no_bias, "fit without a bias term");
  lin_cmd->add_flag("--score-top1", top1, "score by nearest-unembedding-row accuracy");
  lin_cmd->add_flag("--hops", lin_hops, "also fit per-hop maps (min/max across hops)");
  lin_cmd->add_option("--decoder", lin_o.decoder, "presence decoder: lens|patchscope")
      ->check(CLI::IsMember({"lens", "patchscope"}));
  lin_cmd->add_option("--patchscope-pairs", lin_o.pipe.patchscope_pairs,
                      "repeated token pairs in the identity prompt");

  CLI::App* patch_cmd = app.add_subcommand("patch", "cross-task activation patching");
  add_model_options(patch_cmd, patch_o);
  add_common_options(patch_cmd, patch_o);
  patch_cmd->add_option("--donor-task", donor_task, "task g'(f(x)) supplying donor states");
  patch_cmd->add_option("--receiver-task", receiver_task, "task g(f(x)) receiving the patch");
  patch_cmd->add_flag("--allow-f-mismatch", patch_o.pipe.allow_f_mismatch,
                      "permit donor/receiver tasks with different f");
  patch_cmd->add_flag("--per-pair-site", patch_o.pipe.per_pair_site,
                      "patch at each receiver's own peak instead of the median site");
  patch_cmd->add_option("--max-pairs", patch_o.pipe.max_pairs, "patched pairs per group");
  patch_cmd->add_option("--min-rr", patch_o.pipe.patch_min_rr,
                        "donor/median-site qualification threshold");

  CLI::App* report_cmd =
      app.add_subcommand("report", "cross-model plots from saved model_summary.json files");
  report_cmd->add_option("--inputs", report_inputs, "model_summary.json files")
      ->delimiter(',')
      ->required();
  report_cmd->add_option("--out", report_out, "output root directory");
  report_cmd->add_option("--seed", report_seed, "run seed recorded in the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n" << e.what() << "\n";
    return 2;
  }

  try {
    if (gap_cmd->parsed()) return cmd_gap(gap_o);
    if (lens_cmd->parsed()) return cmd_lens(lens_o);
    if (scope_cmd->parsed()) {
      scope_o.decoder = "patchscope";
      return cmd_lens(scope_o);
    }
    if (lin_cmd->parsed()) {
      lin_o.pipe.fit_bias = !no_bias;
      lin_o.pipe.score_top1 = top1;
      return cmd_linearity(lin_o, lin_hops);
    }
    if (patch_cmd->parsed()) return cmd_patch(patch_o, donor_task, receiver_task);
    if (report_cmd->parsed()) return cmd_report(report_inputs, report_out, report_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help() << "\n";
  return 2;
}
