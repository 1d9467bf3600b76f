#include "twohop/report.hpp"

#include <algorithm>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "twohop/svgplot.hpp"

namespace twohop {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  require(!ec, "cannot create directory: " + path);
}

std::uint64_t content_hash(const std::string& path) { return fnv1a(read_file(path)); }

RunContext RunContext::create(const std::string& out_root, const std::string& stage,
                              const std::map<std::string, std::string>& config,
                              std::uint64_t seed) {
  RunContext ctx;
  ctx.seed_ = seed;
  ctx.config_ = config;
  std::string blob = stage + "|" + std::to_string(seed);
  for (const auto& [k, v] : config) blob += "|" + k + "=" + v;
  ctx.run_id_ = stage + "-" + hex_u64(fnv1a(blob)).substr(4);
  ctx.dir_ = out_root + "/" + ctx.run_id_;
  ensure_dir(ctx.dir_);
  return ctx;
}

std::string RunContext::stage_dir(const std::string& stage) const {
  const std::string d = dir_ + "/" + stage;
  ensure_dir(d);
  return d;
}

void RunContext::record_input(const std::string& label, const std::string& path) {
  input_hashes_[label] = hex_u64(content_hash(path));
}

void RunContext::record_model(const Model& model) {
  model_info_["name"] = model.cfg.name;
  model_info_["arch"] = arch_name(model.cfg.arch);
  model_info_["checkpoint"] = model.checkpoint_path;
  model_info_["tokenizer"] = model.tokenizer_path;
  model_info_["n_layers"] = std::to_string(model.cfg.n_layers);
  model_info_["d_model"] = std::to_string(model.cfg.d_model);
  model_info_["vocab_size"] = std::to_string(model.cfg.vocab_size);
  model_info_["n_params"] = std::to_string(model.n_params());
  if (!model.checkpoint_path.empty()) record_input("checkpoint", model.checkpoint_path);
  if (!model.tokenizer_path.empty()) record_input("tokenizer", model.tokenizer_path);
}

void RunContext::write_manifest() const {
  json j;
  j["run_id"] = run_id_;
  j["seed"] = seed_;
  j["config"] = config_;
  j["inputs"] = input_hashes_;
  j["model"] = model_info_;
  write_file(dir_ + "/manifest.json", j.dump(1) + "\n");
}

void emit_signature_plot(const std::string& dir, const std::string& task,
                         const AggregateCurves& curves) {
  require(!curves.excluded, "task excluded (<10 examples): " + task + " [" + curves.outcome + "]");
  std::vector<Series> series;
  for (std::size_t r = 0; r < curves.roles.size(); ++r) {
    Series s;
    s.label = curves.roles[r];
    s.dashed = curves.roles[r] == "fx" || curves.roles[r] == "gx";  // intermediates
    for (Eigen::Index l = 0; l < curves.curve.rows(); ++l) {
      s.xs.push_back(static_cast<double>(l));
      s.ys.push_back(curves.curve(l, static_cast<int>(r)));
    }
    series.push_back(std::move(s));
  }
  const std::string base = dir + "/" + task + "_" + curves.outcome;
  write_line_chart(base + ".svg", task + " (" + curves.outcome + ", n=" +
                       std::to_string(curves.n) + ")",
                   "layer", "reciprocal rank", series);
  write_file(base + ".json", curves_to_json(curves) + "\n");
}

PresenceHistogram emit_presence_histogram(const std::string& dir,
                                          std::span<const std::string> tasks,
                                          const std::vector<std::vector<double>>& values,
                                          const std::string& decoder) {
  require(tasks.size() == values.size(), "emit_presence_histogram: task/value mismatch");
  PresenceHistogram h;
  h.tasks.assign(tasks.begin(), tasks.end());
  h.values = values;

  std::vector<double> edges;
  for (int i = 0; i <= 10; ++i) edges.push_back(i / 10.0);

  std::vector<std::vector<double>> counts(tasks.size(), std::vector<double>(10, 0.0));
  int total = 0, low = 0, high = 0;
  for (std::size_t t = 0; t < values.size(); ++t) {
    for (double v : values[t]) {
      int bin = static_cast<int>(v * 10.0);
      bin = std::clamp(bin, 0, 9);  // presence 1.0 falls in the rightmost bin
      counts[t][static_cast<std::size_t>(bin)] += 1.0;
      ++total;
      if (v < 0.1) ++low;
      if (v >= 0.5) ++high;
    }
  }
  if (total > 0) {
    h.fraction_low = static_cast<double>(low) / total;
    h.fraction_high = static_cast<double>(high) / total;
  }

  const std::string base = dir + "/presence_histogram";
  write_stacked_histogram(base + ".svg", "intermediate-variable presence (" + decoder + ")",
                          "max reciprocal rank of intermediates", tasks, counts, edges);
  json j;
  j["decoder"] = decoder;
  j["bin_edges"] = edges;
  j["tasks"] = h.tasks;
  json per_task = json::object();
  for (std::size_t t = 0; t < h.tasks.size(); ++t) per_task[h.tasks[t]] = values[t];
  j["values"] = per_task;
  j["fraction_below_0.1"] = h.fraction_low;
  j["fraction_at_least_0.5"] = h.fraction_high;
  j["bimodal_fraction"] = h.fraction_low + h.fraction_high;
  write_file(base + ".json", j.dump(1) + "\n");
  return h;
}

void emit_gap_vs_size(const std::string& dir, std::vector<ModelPoint> points) {
  require(points.size() >= 2, "emit_gap_vs_size: need >= 2 models");
  std::sort(points.begin(), points.end(),
            [](const ModelPoint& a, const ModelPoint& b) { return a.n_params < b.n_params; });

  std::vector<ScatterPoint> by_params, by_layers;
  for (std::size_t i = 0; i < points.size(); ++i) {
    by_params.push_back({points[i].n_params, points[i].gap, points[i].name, static_cast<int>(i)});
    by_layers.push_back(
        {static_cast<double>(points[i].n_layers), points[i].gap, points[i].name,
         static_cast<int>(i)});
  }
  write_scatter(dir + "/gap_vs_params.svg", "compositionality gap vs parameters", "parameters",
                "gap", by_params, /*log_x=*/true);
  write_scatter(dir + "/gap_vs_layers.svg", "compositionality gap vs layers", "layers", "gap",
                by_layers, /*log_x=*/false);

  json j = json::array();
  for (const ModelPoint& p : points)
    j.push_back({{"model", p.name},
                 {"n_params", p.n_params},
                 {"n_layers", p.n_layers},
                 {"gap", p.gap}});
  write_file(dir + "/gap_vs_size.json", j.dump(1) + "\n");
}

void emit_gap_charts(const std::string& dir, std::span<const GapReport> reports) {
  require(!reports.empty(), "emit_gap_charts: no reports");
  std::vector<std::string> series{"all hops (of total)", "composition (of hops-correct)"};
  std::vector<BarGroup> groups;
  for (const GapReport& r : reports) {
    BarGroup g;
    g.label = r.task;
    g.values = {r.hops_fraction(), r.comp_given_hops().value_or(0.0)};
    groups.push_back(std::move(g));
  }
  write_bar_chart(dir + "/gap_bars.svg", "hop and composition accuracy by task", "proportion",
                  series, groups);

  json j;
  json arr = json::array();
  for (const GapReport& r : reports) arr.push_back(json::parse(gap_report_to_json(r)));
  j["tasks"] = arr;
  if (reports.size() >= 2) {
    bool enough = true;
    int defined = 0;
    for (const GapReport& r : reports)
      if (r.comp_given_hops()) ++defined;
    enough = defined >= 2;
    if (enough) {
      const PearsonResult pr = hops_vs_comp_correlation(reports);
      if (pr.defined) {
        j["hops_vs_comp_r2"] = pr.r2;
        j["hops_vs_comp_r"] = pr.r;
      } else {
        j["hops_vs_comp_r2"] = "undefined";
      }
    }
  }
  write_file(dir + "/gap_bars.json", j.dump(1) + "\n");
}

}  // namespace twohop
