#include "twohop/linearity.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "twohop/prompting.hpp"

namespace twohop {

using nlohmann::json;

VecD mean_source_embedding(const Model& model, const std::string& surface) {
  const std::vector<int> ids = answer_position_tokens(model.tokenizer, surface);
  const Mat rows = model.embedding_rows(ids);
  VecD out = VecD::Zero(model.cfg.d_model);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out += rows.row(i).transpose().cast<double>();
  out /= static_cast<double>(rows.rows());
  return out;
}

int target_first_token(const Model& model, const std::string& surface) {
  return answer_first_token(model.tokenizer, surface);
}

VecD target_unembedding(const Model& model, const std::string& surface) {
  return model.unembedding_row(target_first_token(model, surface)).cast<double>();
}

LinearMap fit_least_squares(const MatD& X, const MatD& Y, bool bias) {
  require(X.rows() == Y.rows() && X.rows() > 0, "fit_least_squares: shape mismatch");
  const Eigen::Index n = X.rows(), d = X.cols();
  MatD Xa;
  if (bias) {
    Xa.resize(n, d + 1);
    Xa.leftCols(d) = X;
    Xa.col(d).setOnes();
  } else {
    Xa = X;
  }
  // minimum-norm least squares; exact when the system is determined
  MatD M = Xa.completeOrthogonalDecomposition().solve(Y);
  LinearMap map;
  map.W = M.topRows(d).transpose();
  map.b = bias ? VecD(M.row(d).transpose()) : VecD(VecD::Zero(Y.cols()));
  map.fit_size = static_cast<int>(n);
  return map;
}

double linearity_score(const LinearMap& map, const MatD& X_heldout, const MatD& Y_heldout) {
  require(X_heldout.rows() == Y_heldout.rows() && X_heldout.rows() > 0,
          "linearity_score: empty or mismatched held-out set");
  double total = 0.0;
  for (Eigen::Index i = 0; i < X_heldout.rows(); ++i) {
    const VecD pred = map.W * X_heldout.row(i).transpose() + map.b;
    total += cosine_similarity(pred, Y_heldout.row(i).transpose());
  }
  return total / static_cast<double>(X_heldout.rows());
}

double top1_accuracy(const LinearMap& map, const MatD& X_heldout,
                     std::span<const int> gold_tokens, const Model& model) {
  require(static_cast<std::size_t>(X_heldout.rows()) == gold_tokens.size(),
          "top1_accuracy: shape mismatch");
  const Mat& U = model.unembedding_matrix();
  MatD Ud = U.cast<double>();
  VecD row_norms(Ud.rows());
  for (Eigen::Index r = 0; r < Ud.rows(); ++r) row_norms(r) = Ud.row(r).norm();

  int hits = 0;
  for (Eigen::Index i = 0; i < X_heldout.rows(); ++i) {
    VecD pred = map.W * X_heldout.row(i).transpose() + map.b;
    const double pn = pred.norm();
    if (pn == 0.0) continue;
    VecD scores = Ud * pred;
    Eigen::Index best = 0;
    double best_cos = -2.0;
    for (Eigen::Index r = 0; r < scores.size(); ++r) {
      if (row_norms(r) == 0.0) continue;
      const double c = scores(r) / (row_norms(r) * pn);
      if (c > best_cos) {
        best_cos = c;
        best = r;
      }
    }
    if (static_cast<int>(best) == gold_tokens[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X_heldout.rows());
}

TaskLinearity fit_linear(const TaskDataset& task, const Model& model, Hop relation,
                         std::span<const Example> eligible, int n_fit, std::uint64_t seed,
                         bool bias) {
  require(hop_defined(task.spec, relation),
          "fit_linear: relation " + hop_name(relation) + " undefined for task " + task.spec.name);
  const int n = static_cast<int>(eligible.size());
  require(n >= n_fit + 10, "fit_linear: task " + task.spec.name + " has " + std::to_string(n) +
                               " eligible examples, need >= " + std::to_string(n_fit + 10));

  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  TaskLinearity out;
  out.fit_indices.assign(order.begin(), order.begin() + n_fit);
  out.heldout_indices.assign(order.begin() + n_fit, order.end());

  const Eigen::Index d = model.cfg.d_model;
  MatD X(n_fit, d), Y(n_fit, d);
  for (int i = 0; i < n_fit; ++i) {
    const Example& e = eligible[out.fit_indices[static_cast<std::size_t>(i)]];
    X.row(i) = mean_source_embedding(model, hop_input(e, relation)).transpose();
    Y.row(i) = target_unembedding(model, hop_output(e, relation)).transpose();
  }
  out.map = fit_least_squares(X, Y, bias);
  out.map.relation = relation;

  const Eigen::Index nh = static_cast<Eigen::Index>(out.heldout_indices.size());
  MatD Xh(nh, d), Yh(nh, d);
  for (Eigen::Index i = 0; i < nh; ++i) {
    const Example& e = eligible[out.heldout_indices[static_cast<std::size_t>(i)]];
    Xh.row(i) = mean_source_embedding(model, hop_input(e, relation)).transpose();
    Yh.row(i) = target_unembedding(model, hop_output(e, relation)).transpose();
  }
  out.map.score = linearity_score(out.map, Xh, Yh);
  return out;
}

PearsonResult correlate_tasks(std::span<const double> metric_a, std::span<const double> metric_b) {
  require(metric_a.size() == metric_b.size(), "correlate_tasks: size mismatch");
  require(metric_a.size() >= 3, "correlate_tasks: need >= 3 tasks");
  return pearson(metric_a, metric_b);
}

HopLinearity hop_linearity_suite(const TaskDataset& task, const Model& model,
                                 std::span<const Example> eligible, int n_fit, std::uint64_t seed,
                                 bool bias) {
  HopLinearity out;
  Rng rng(seed);
  auto fit = [&](Hop h) {
    return fit_linear(task, model, h, eligible, n_fit, rng.fork(hop_name(h)).next_u64(), bias)
        .map.score;
  };
  out.first_hop = fit(Hop::x_to_fx);
  out.second_hop = fit(Hop::fx_to_gfx);
  std::vector<double> all{out.first_hop, out.second_hop};
  if (task.spec.has_gx) {
    out.gx_first = fit(Hop::x_to_gx);
    out.gx_second = fit(Hop::gx_to_gfx);
    all.push_back(*out.gx_first);
    all.push_back(*out.gx_second);
  }
  out.min_score = *std::min_element(all.begin(), all.end());
  out.max_score = *std::max_element(all.begin(), all.end());
  return out;
}

void save_linear_map(const LinearMap& map, const std::string& base_path) {
  std::ofstream bin(base_path + ".bin", std::ios::binary);
  require(bin.good(), "cannot write linear map: " + base_path + ".bin");
  // W row-major, then b
  for (Eigen::Index r = 0; r < map.W.rows(); ++r)
    for (Eigen::Index c = 0; c < map.W.cols(); ++c) {
      const double v = map.W(r, c);
      bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  for (Eigen::Index i = 0; i < map.b.size(); ++i) {
    const double v = map.b(i);
    bin.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  require(bin.good(), "linear map write failed");

  json j;
  j["d"] = map.W.rows();
  j["relation"] = hop_name(map.relation);
  j["fit_size"] = map.fit_size;
  j["score"] = map.score;
  j["layout"] = "f64: d x d row-major W, then d-vector b";
  write_file(base_path + ".json", j.dump(1) + "\n");
}

LinearMap load_linear_map(const std::string& base_path) {
  json j = json::parse(read_file(base_path + ".json"));
  const Eigen::Index d = j.at("d").get<Eigen::Index>();
  LinearMap map;
  auto rel = hop_from_name(j.at("relation").get<std::string>());
  require(rel.has_value(), "linear map metadata: bad relation");
  map.relation = *rel;
  map.fit_size = j.at("fit_size").get<int>();
  map.score = j.at("score").get<double>();
  map.W.resize(d, d);
  map.b.resize(d);
  std::ifstream bin(base_path + ".bin", std::ios::binary);
  require(bin.good(), "cannot open linear map: " + base_path + ".bin");
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      bin.read(reinterpret_cast<char*>(&map.W(r, c)), sizeof(double));
  for (Eigen::Index i = 0; i < d; ++i)
    bin.read(reinterpret_cast<char*>(&map.b(i)), sizeof(double));
  require(bin.good(), "truncated linear map: " + base_path + ".bin");
  return map;
}

}  // namespace twohop
