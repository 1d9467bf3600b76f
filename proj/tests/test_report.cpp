#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "testutil.hpp"
#include "twohop/common.hpp"
#include "twohop/report.hpp"
#include "twohop/svgplot.hpp"

using namespace twohop;
namespace fs = std::filesystem;

TEST_CASE("run context: derived id, manifest, input hashes") {
  const std::string root = testutil::temp_dir("runctx");
  const std::map<std::string, std::string> cfg{{"stage", "gap"}, {"tasks", "a,b"}};

  RunContext a = RunContext::create(root, "gap", cfg, 7);
  RunContext b = RunContext::create(root, "gap", cfg, 7);
  CHECK(a.run_id() == b.run_id());  // same config, same id
  RunContext c = RunContext::create(root, "gap", cfg, 8);
  CHECK(a.run_id() != c.run_id());

  write_file(root + "/input.txt", "hello");
  a.record_input("pairfile", root + "/input.txt");
  a.write_manifest();
  const std::string manifest = read_file(a.dir() + "/manifest.json");
  CHECK(manifest.find("\"run_id\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 7") != std::string::npos);
  CHECK(manifest.find(hex_u64(fnv1a("hello"))) != std::string::npos);

  CHECK(content_hash(root + "/input.txt") == fnv1a("hello"));
}

TEST_CASE("signature plot emission and the exclusion error") {
  const std::string dir = testutil::temp_dir("sigplot");
  AggregateCurves curves;
  curves.outcome = "correct";
  curves.n = 12;
  curves.roles = {"x", "fx", "gfx"};
  curves.curve = Eigen::MatrixXd::Constant(5, 3, 0.4);
  curves.n_per_role = {12, 12, 12};

  emit_signature_plot(dir, "toy-task", curves);
  const std::string svg = read_file(dir + "/toy-task_correct.svg");
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);  // fx drawn dashed
  CHECK(fs::exists(dir + "/toy-task_correct.json"));         // sibling data file

  AggregateCurves excluded;
  excluded.outcome = "correct";
  excluded.n = 9;
  excluded.excluded = true;
  CHECK_THROWS_WITH_AS(emit_signature_plot(dir, "toy-task", excluded),
                       doctest::Contains("task excluded"), error);
}

TEST_CASE("presence histogram: bins, fractions, bimodality") {
  const std::string dir = testutil::temp_dir("hist");
  const std::vector<std::string> tasks{"a", "b"};

  SUBCASE("all-1.0 presences land in the rightmost bin") {
    const std::vector<std::vector<double>> values{{1.0, 1.0, 1.0}, {1.0}};
    const PresenceHistogram h = emit_presence_histogram(dir, tasks, values, "lens");
    CHECK(h.fraction_high == 1.0);
    CHECK(h.fraction_low == 0.0);
    const std::string data = read_file(dir + "/presence_histogram.json");
    CHECK(data.find("\"bin_edges\"") != std::string::npos);
    CHECK(data.find("0.9") != std::string::npos);
  }

  SUBCASE("bimodal fixture reports the < 0.1 and >= 0.5 mass") {
    const std::vector<std::vector<double>> values{{0.05, 0.01, 0.6}, {0.9, 0.02}};
    const PresenceHistogram h = emit_presence_histogram(dir, tasks, values, "lens");
    CHECK(h.fraction_low == doctest::Approx(0.6));
    CHECK(h.fraction_high == doctest::Approx(0.4));
    CHECK(h.fraction_low + h.fraction_high == doctest::Approx(1.0));
  }
}

TEST_CASE("gap-vs-size plots") {
  const std::string dir = testutil::temp_dir("gvs");
  std::vector<ModelPoint> pts{{"m1", 1e9, 16, 0.7}, {"m0", 1e8, 12, 0.8}, {"m2", 1e10, 32, 0.5}};
  emit_gap_vs_size(dir, pts);
  CHECK(fs::exists(dir + "/gap_vs_params.svg"));
  CHECK(fs::exists(dir + "/gap_vs_layers.svg"));
  const std::string data = read_file(dir + "/gap_vs_size.json");
  // sorted by size
  CHECK(data.find("m0") < data.find("m1"));
  CHECK(data.find("m1") < data.find("m2"));
  CHECK(read_file(dir + "/gap_vs_params.svg").find("log scale") != std::string::npos);

  std::vector<ModelPoint> one{{"m0", 1e8, 12, 0.8}};
  CHECK_THROWS(emit_gap_vs_size(dir, one));
}

TEST_CASE("gap charts and r^2 reporting") {
  const std::string dir = testutil::temp_dir("gapcharts");
  GapReport a;
  a.task = "t1";
  a.n_total = 100;
  a.n_all_hops = 60;
  a.n_all_hops_and_comp = 30;
  a.gap = 0.5;
  GapReport b = a;
  b.task = "t2";
  b.n_all_hops = 80;
  b.n_all_hops_and_comp = 20;
  b.gap = 0.75;
  std::vector<GapReport> rs{a, b};
  emit_gap_charts(dir, rs);
  CHECK(fs::exists(dir + "/gap_bars.svg"));
  const std::string data = read_file(dir + "/gap_bars.json");
  CHECK(data.find("hops_vs_comp_r2") != std::string::npos);
}

TEST_CASE("emitted artifacts are byte-identical across reruns") {
  const std::string d1 = testutil::temp_dir("det1");
  const std::string d2 = testutil::temp_dir("det2");
  std::vector<Series> series(2);
  series[0].label = "a";
  series[1].label = "b";
  series[1].dashed = true;
  for (int i = 0; i < 8; ++i) {
    series[0].xs.push_back(i);
    series[0].ys.push_back(0.1 * i);
    series[1].xs.push_back(i);
    series[1].ys.push_back(1.0 - 0.07 * i);
  }
  write_line_chart(d1 + "/c.svg", "t", "x", "y", series);
  write_line_chart(d2 + "/c.svg", "t", "x", "y", series);
  CHECK(read_file(d1 + "/c.svg") == read_file(d2 + "/c.svg"));

  std::vector<ScatterPoint> pts{{1.0, 2.0, "p", 0}, {3.0, 1.0, "q", 1}};
  write_scatter(d1 + "/s.svg", "t", "x", "y", pts, true);
  write_scatter(d2 + "/s.svg", "t", "x", "y", pts, true);
  CHECK(read_file(d1 + "/s.svg") == read_file(d2 + "/s.svg"));
}
