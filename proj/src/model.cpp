#include "twohop/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "twohop/common.hpp"

namespace twohop {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'T', 'H', 'C', 'K', 'P', 'T', '0', '1'};
}

std::string arch_name(Arch a) { return a == Arch::gpt2 ? "gpt2" : "llama"; }

Arch arch_from_name(const std::string& name) {
  if (name == "gpt2") return Arch::gpt2;
  if (name == "llama") return Arch::llama;
  throw error("unknown arch: '" + name + "'");
}

void ModelConfig::validate() const {
  require(n_layers >= 1, "config: n_layers must be >= 1");
  require(vocab_size >= 2, "config: vocab_size must be >= 2");
  require(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0,
          "config: d_model must be a positive multiple of n_heads");
  require(n_kv_heads >= 1 && n_heads % n_kv_heads == 0,
          "config: n_heads must be a multiple of n_kv_heads");
  require(d_ff >= 1 && max_seq >= 1, "config: d_ff and max_seq must be positive");
}

void ResidualTrace::validate() const {
  require(!states.empty(), "trace: no states");
  require(final_logits.size() > 0, "trace: missing final logits");
  require(final_logits.allFinite(), "trace: non-finite final logits");
  for (const Mat& s : states)
    require(s.rows() == static_cast<Eigen::Index>(positions.size()), "trace: state shape mismatch");
}

void Model::validate() const {
  cfg.validate();
  require(tok_embed.rows() == cfg.vocab_size && tok_embed.cols() == cfg.d_model,
          "model: tok_embed shape mismatch");
  if (cfg.arch == Arch::gpt2)
    require(pos_embed.rows() == cfg.max_seq && pos_embed.cols() == cfg.d_model,
            "model: pos_embed shape mismatch");
  require(static_cast<int>(layers.size()) == cfg.n_layers, "model: layer count mismatch");
  if (!cfg.tied_embeddings)
    require(unembed.rows() == cfg.vocab_size && unembed.cols() == cfg.d_model,
            "model: unembed shape mismatch");
  require(tokenizer.size() == cfg.vocab_size, "model: tokenizer size != vocab_size");
}

std::int64_t Model::n_params() const {
  std::int64_t n = tok_embed.size() + pos_embed.size() + final_norm_w.size() +
                   final_norm_b.size() + unembed.size() + unembed_bias.size();
  for (const LayerWeights& l : layers) {
    n += l.attn_norm_w.size() + l.attn_norm_b.size() + l.wq.size() + l.wk.size() + l.wv.size() +
         l.wo.size() + l.bq.size() + l.bk.size() + l.bv.size() + l.bo.size() +
         l.mlp_norm_w.size() + l.mlp_norm_b.size() + l.w_in.size() + l.w_gate.size() +
         l.w_out.size() + l.b_in.size() + l.b_out.size();
  }
  return n;
}

// ---- checkpoint io ------------------------------------------------------

namespace {

struct TensorEntry {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

class CheckpointWriter {
 public:
  void add(const std::string& name, const Mat& m) {
    if (m.size() == 0) return;
    entries_.push_back({name, m.rows(), m.cols()});
    data_.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  }
  void add(const std::string& name, const Vec& v) {
    if (v.size() == 0) return;
    entries_.push_back({name, 1, v.size()});
    data_.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
  }

  void write(const std::string& path, json header) const {
    json toc = json::array();
    for (const auto& e : entries_)
      toc.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
    header["tensors"] = toc;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    std::uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [ptr, count] : data_)
      out.write(reinterpret_cast<const char*>(ptr), static_cast<std::streamsize>(count * sizeof(float)));
    require(out.good(), "checkpoint write failed: " + path);
  }

 private:
  std::vector<TensorEntry> entries_;
  std::vector<std::pair<const float*, std::size_t>> data_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    require(in_.good(), "cannot open checkpoint: " + path);
    char magic[8];
    in_.read(magic, sizeof(magic));
    require(in_.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0,
            "not a checkpoint file (bad magic): " + path);
    std::uint64_t hlen = 0;
    in_.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    require(in_.good() && hlen > 0 && hlen < (1ull << 30), "corrupt checkpoint header: " + path);
    std::string htext(hlen, '\0');
    in_.read(htext.data(), static_cast<std::streamsize>(hlen));
    require(in_.good(), "truncated checkpoint header: " + path);
    header_ = json::parse(htext);
    std::uint64_t offset = sizeof(kMagic) + sizeof(hlen) + hlen;
    for (const auto& t : header_.at("tensors")) {
      TensorEntry e{t.at("name").get<std::string>(), t.at("rows").get<std::int64_t>(),
                    t.at("cols").get<std::int64_t>()};
      offsets_[e.name] = {offset, e};
      offset += static_cast<std::uint64_t>(e.rows * e.cols) * sizeof(float);
    }
  }

  const json& header() const { return header_; }

  bool has(const std::string& name) const { return offsets_.count(name) > 0; }

  Mat matrix(const std::string& name) {
    auto it = offsets_.find(name);
    require(it != offsets_.end(), "checkpoint missing tensor '" + name + "': " + path_);
    const auto& [offset, e] = it->second;
    Mat m(e.rows, e.cols);
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(reinterpret_cast<char*>(m.data()),
             static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(float))));
    require(in_.good(), "truncated tensor '" + name + "': " + path_);
    return m;
  }

  Vec vector(const std::string& name) {
    Mat m = matrix(name);
    require(m.rows() == 1, "tensor '" + name + "' is not a vector");
    Vec v(m.cols());
    for (Eigen::Index i = 0; i < m.cols(); ++i) v(i) = m(0, i);
    return v;
  }

  Mat matrix_or_empty(const std::string& name) { return has(name) ? matrix(name) : Mat(); }
  Vec vector_or_empty(const std::string& name) { return has(name) ? vector(name) : Vec(); }

 private:
  std::string path_;
  std::ifstream in_;
  json header_;
  std::map<std::string, std::pair<std::uint64_t, TensorEntry>> offsets_;
};

}  // namespace

void Model::save(const std::string& path) const {
  json h;
  h["arch"] = arch_name(cfg.arch);
  h["name"] = cfg.name;
  h["n_layers"] = cfg.n_layers;
  h["d_model"] = cfg.d_model;
  h["n_heads"] = cfg.n_heads;
  h["n_kv_heads"] = cfg.n_kv_heads;
  h["d_ff"] = cfg.d_ff;
  h["vocab_size"] = cfg.vocab_size;
  h["max_seq"] = cfg.max_seq;
  h["norm_eps"] = cfg.norm_eps;
  h["rope_theta"] = cfg.rope_theta;
  h["tied_embeddings"] = cfg.tied_embeddings;

  CheckpointWriter w;
  w.add("tok_embed", tok_embed);
  w.add("pos_embed", pos_embed);
  for (int i = 0; i < cfg.n_layers; ++i) {
    const LayerWeights& l = layers[static_cast<std::size_t>(i)];
    const std::string p = "layers." + std::to_string(i) + ".";
    w.add(p + "attn_norm.w", l.attn_norm_w);
    w.add(p + "attn_norm.b", l.attn_norm_b);
    w.add(p + "wq", l.wq);
    w.add(p + "wk", l.wk);
    w.add(p + "wv", l.wv);
    w.add(p + "wo", l.wo);
    w.add(p + "bq", l.bq);
    w.add(p + "bk", l.bk);
    w.add(p + "bv", l.bv);
    w.add(p + "bo", l.bo);
    w.add(p + "mlp_norm.w", l.mlp_norm_w);
    w.add(p + "mlp_norm.b", l.mlp_norm_b);
    w.add(p + "w_in", l.w_in);
    w.add(p + "w_gate", l.w_gate);
    w.add(p + "w_out", l.w_out);
    w.add(p + "b_in", l.b_in);
    w.add(p + "b_out", l.b_out);
  }
  w.add("final_norm.w", final_norm_w);
  w.add("final_norm.b", final_norm_b);
  if (!cfg.tied_embeddings) w.add("unembed", unembed);
  w.add("unembed_bias", unembed_bias);
  w.write(path, std::move(h));
}

Model Model::load(const std::string& checkpoint, const std::string& tokenizer_file) {
  CheckpointReader r(checkpoint);
  const json& h = r.header();

  Model m;
  m.cfg.arch = arch_from_name(h.at("arch").get<std::string>());
  m.cfg.name = h.value("name", "unnamed");
  m.cfg.n_layers = h.at("n_layers").get<int>();
  m.cfg.d_model = h.at("d_model").get<int>();
  m.cfg.n_heads = h.at("n_heads").get<int>();
  m.cfg.n_kv_heads = h.value("n_kv_heads", m.cfg.n_heads);
  m.cfg.d_ff = h.at("d_ff").get<int>();
  m.cfg.vocab_size = h.at("vocab_size").get<int>();
  m.cfg.max_seq = h.at("max_seq").get<int>();
  m.cfg.norm_eps = h.value("norm_eps", 1e-5f);
  m.cfg.rope_theta = h.value("rope_theta", 10000.0f);
  m.cfg.tied_embeddings = h.value("tied_embeddings", false);
  m.cfg.validate();

  m.tok_embed = r.matrix("tok_embed");
  m.pos_embed = r.matrix_or_empty("pos_embed");
  for (int i = 0; i < m.cfg.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    LayerWeights l;
    l.attn_norm_w = r.vector(p + "attn_norm.w");
    l.attn_norm_b = r.vector_or_empty(p + "attn_norm.b");
    l.wq = r.matrix(p + "wq");
    l.wk = r.matrix(p + "wk");
    l.wv = r.matrix(p + "wv");
    l.wo = r.matrix(p + "wo");
    l.bq = r.vector_or_empty(p + "bq");
    l.bk = r.vector_or_empty(p + "bk");
    l.bv = r.vector_or_empty(p + "bv");
    l.bo = r.vector_or_empty(p + "bo");
    l.mlp_norm_w = r.vector(p + "mlp_norm.w");
    l.mlp_norm_b = r.vector_or_empty(p + "mlp_norm.b");
    l.w_in = r.matrix(p + "w_in");
    l.w_gate = r.matrix_or_empty(p + "w_gate");
    l.w_out = r.matrix(p + "w_out");
    l.b_in = r.vector_or_empty(p + "b_in");
    l.b_out = r.vector_or_empty(p + "b_out");
    m.layers.push_back(std::move(l));
  }
  m.final_norm_w = r.vector("final_norm.w");
  m.final_norm_b = r.vector_or_empty("final_norm.b");
  if (!m.cfg.tied_embeddings) m.unembed = r.matrix("unembed");
  m.unembed_bias = r.vector_or_empty("unembed_bias");

  m.tokenizer = Tokenizer::load(tokenizer_file);
  m.checkpoint_path = checkpoint;
  m.tokenizer_path = tokenizer_file;
  m.validate();
  return m;
}

// ---- forward ------------------------------------------------------------

namespace {

Vec norm_row(const Vec& x, const Vec& w, const Vec& b, float eps, Arch arch) {
  if (arch == Arch::llama) {
    const float ms = x.squaredNorm() / static_cast<float>(x.size());
    Vec out = x * (1.0f / std::sqrt(ms + eps));
    return out.cwiseProduct(w);
  }
  const float mu = x.mean();
  Vec centered = (x.array() - mu).matrix();
  const float var = centered.squaredNorm() / static_cast<float>(x.size());
  Vec out = centered * (1.0f / std::sqrt(var + eps));
  out = out.cwiseProduct(w);
  if (b.size() > 0) out += b;
  return out;
}

Mat norm_rows(const Mat& x, const Vec& w, const Vec& b, float eps, Arch arch) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vec row = x.row(i).transpose();
    out.row(i) = norm_row(row, w, b, eps, arch).transpose();
  }
  return out;
}

float gelu(float v) {
  // tanh approximation
  const float c = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * v * (1.0f + std::tanh(c * (v + 0.044715f * v * v * v)));
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

// interleaved-pair rotary embedding on a [P, n_heads*head_dim] block
void apply_rope(Mat& qk, int n_heads, int head_dim, float theta_base) {
  const int half = head_dim / 2;
  for (Eigen::Index pos = 0; pos < qk.rows(); ++pos) {
    for (int h = 0; h < n_heads; ++h) {
      float* head = qk.row(pos).data() + static_cast<std::ptrdiff_t>(h) * head_dim;
      for (int i = 0; i < half; ++i) {
        const float freq =
            std::pow(theta_base, -2.0f * static_cast<float>(i) / static_cast<float>(head_dim));
        const float angle = static_cast<float>(pos) * freq;
        const float c = std::cos(angle), s = std::sin(angle);
        const float a = head[2 * i], b = head[2 * i + 1];
        head[2 * i] = a * c - b * s;
        head[2 * i + 1] = a * s + b * c;
      }
    }
  }
}

void softmax_row_inplace(Eigen::Ref<Eigen::Matrix<float, 1, Eigen::Dynamic>> row) {
  const float mx = row.maxCoeff();
  row = (row.array() - mx).exp();
  row /= row.sum();
}

}  // namespace

ResidualTrace Model::forward_impl(std::span<const int> tokens, std::span<const PatchHook> hooks,
                                  bool keep_states) const {
  const int P = static_cast<int>(tokens.size());
  require(P >= 1, "forward: empty token sequence");
  require(P <= cfg.max_seq, "forward: prompt length " + std::to_string(P) +
                                " exceeds model context " + std::to_string(cfg.max_seq));
  for (int t : tokens)
    require(t >= 0 && t < cfg.vocab_size, "forward: token id out of range: " + std::to_string(t));
  for (const PatchHook& hk : hooks) {
    require(hk.layer >= 0 && hk.layer <= cfg.n_layers,
            "patch hook layer out of range: " + std::to_string(hk.layer));
    require(hk.position >= 0 && hk.position < P,
            "patch hook position out of range: " + std::to_string(hk.position));
    require(hk.state.size() == cfg.d_model, "patch hook state dimension mismatch");
  }

  const int D = cfg.d_model;
  const int H = cfg.n_heads;
  const int KV = cfg.n_kv_heads;
  const int hd = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  ResidualTrace trace;
  trace.positions.assign(tokens.begin(), tokens.end());
  if (keep_states) trace.states.reserve(static_cast<std::size_t>(cfg.n_layers) + 1);

  Mat x(P, D);
  for (int p = 0; p < P; ++p) {
    x.row(p) = tok_embed.row(tokens[static_cast<std::size_t>(p)]);
    if (cfg.arch == Arch::gpt2) x.row(p) += pos_embed.row(p);
  }

  auto apply_hooks = [&](int layer_index) {
    for (const PatchHook& hk : hooks)
      if (hk.layer == layer_index) x.row(hk.position) = hk.state.transpose();
  };

  apply_hooks(0);
  if (keep_states) trace.states.push_back(x);

  Mat ctx(P, H * hd);
  for (int li = 0; li < cfg.n_layers; ++li) {
    const LayerWeights& l = layers[static_cast<std::size_t>(li)];

    // attention
    Mat h = norm_rows(x, l.attn_norm_w, l.attn_norm_b, cfg.norm_eps, cfg.arch);
    Mat q = h * l.wq;
    Mat k = h * l.wk;
    Mat v = h * l.wv;
    if (l.bq.size() > 0) q.rowwise() += l.bq.transpose();
    if (l.bk.size() > 0) k.rowwise() += l.bk.transpose();
    if (l.bv.size() > 0) v.rowwise() += l.bv.transpose();
    if (cfg.arch == Arch::llama) {
      apply_rope(q, H, hd, cfg.rope_theta);
      apply_rope(k, KV, hd, cfg.rope_theta);
    }

    for (int hh = 0; hh < H; ++hh) {
      const int kvh = hh / (H / KV);
      auto qh = q.middleCols(hh * hd, hd);
      auto kh = k.middleCols(kvh * hd, hd);
      auto vh = v.middleCols(kvh * hd, hd);
      for (int p = 0; p < P; ++p) {
        // causal: position p attends to 0..p
        Eigen::Matrix<float, 1, Eigen::Dynamic> scores =
            (qh.row(p) * kh.topRows(p + 1).transpose()) * scale;
        softmax_row_inplace(scores);
        ctx.block(p, hh * hd, 1, hd) = scores * vh.topRows(p + 1);
      }
    }
    Mat attn_out = ctx * l.wo;
    if (l.bo.size() > 0) attn_out.rowwise() += l.bo.transpose();
    x += attn_out;

    // mlp
    Mat h2 = norm_rows(x, l.mlp_norm_w, l.mlp_norm_b, cfg.norm_eps, cfg.arch);
    Mat inner = h2 * l.w_in;
    if (l.b_in.size() > 0) inner.rowwise() += l.b_in.transpose();
    if (cfg.arch == Arch::llama) {
      Mat gate = h2 * l.w_gate;
      for (Eigen::Index i = 0; i < inner.size(); ++i)
        inner.data()[i] = silu(gate.data()[i]) * inner.data()[i];
    } else {
      for (Eigen::Index i = 0; i < inner.size(); ++i) inner.data()[i] = gelu(inner.data()[i]);
    }
    Mat mlp_out = inner * l.w_out;
    if (l.b_out.size() > 0) mlp_out.rowwise() += l.b_out.transpose();
    x += mlp_out;

    apply_hooks(li + 1);
    if (keep_states) trace.states.push_back(x);
  }

  Vec last = x.row(P - 1).transpose();
  trace.final_logits = unembedding_matrix() * apply_final_norm(last);
  if (unembed_bias.size() > 0) trace.final_logits += unembed_bias;
  if (keep_states) trace.validate();
  return trace;
}

ResidualTrace Model::forward_with_trace(std::span<const int> tokens,
                                        std::span<const PatchHook> hooks) const {
  return forward_impl(tokens, hooks, true);
}

ResidualTrace Model::forward_with_trace(const PromptInstance& prompt,
                                        std::span<const PatchHook> hooks) const {
  return forward_impl(prompt.tokens, hooks, true);
}

Vec Model::forward_logits(std::span<const int> tokens, std::span<const PatchHook> hooks) const {
  return forward_impl(tokens, hooks, false).final_logits;
}

Vec Model::apply_final_norm(const Vec& state) const {
  require(state.size() == cfg.d_model, "apply_final_norm: dimension mismatch");
  return norm_row(state, final_norm_w, final_norm_b, cfg.norm_eps, cfg.arch);
}

int Model::greedy_next(std::span<const int> tokens) const {
  Vec logits = forward_logits(tokens);
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

std::string Model::greedy_continue(const PromptInstance& prompt, int max_tokens) const {
  require(max_tokens >= 1, "greedy_continue: max_tokens must be >= 1");
  std::vector<int> tokens = prompt.tokens;
  std::string generated;
  for (int step = 0; step < max_tokens; ++step) {
    if (static_cast<int>(tokens.size()) >= cfg.max_seq) break;
    const int next = greedy_next(tokens);
    tokens.push_back(next);
    generated += tokenizer.text(next);
    if (generated.find('\n') != std::string::npos) break;
  }
  const auto nl = generated.find('\n');
  if (nl != std::string::npos) generated.resize(nl);
  return trim(generated);
}

std::vector<int> Model::tokenize(std::string_view text, bool answer_position) const {
  if (text.empty()) return {};
  if (answer_position) return answer_position_tokens(tokenizer, text);
  return tokenizer.encode(text);
}

std::string Model::detokenize(std::span<const int> ids) const { return tokenizer.decode(ids); }

Mat Model::embedding_rows(std::span<const int> ids) const {
  Mat out(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < cfg.vocab_size,
            "embedding_rows: token id out of range: " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = tok_embed.row(ids[i]);
  }
  return out;
}

Vec Model::unembedding_row(int id) const {
  require(id >= 0 && id < cfg.vocab_size,
          "unembedding_row: token id out of range: " + std::to_string(id));
  return unembedding_matrix().row(id).transpose();
}

// ---- trace export -------------------------------------------------------

void save_trace(const ResidualTrace& trace, const std::string& base_path) {
  trace.validate();
  std::ofstream bin(base_path + ".bin", std::ios::binary);
  require(bin.good(), "cannot write trace: " + base_path + ".bin");
  for (const Mat& s : trace.states)
    bin.write(reinterpret_cast<const char*>(s.data()),
              static_cast<std::streamsize>(s.size() * static_cast<Eigen::Index>(sizeof(float))));
  bin.write(reinterpret_cast<const char*>(trace.final_logits.data()),
            static_cast<std::streamsize>(trace.final_logits.size() *
                                         static_cast<Eigen::Index>(sizeof(float))));
  require(bin.good(), "trace write failed");

  json j;
  j["layers"] = trace.n_layers();
  j["positions"] = trace.n_positions();
  j["d_model"] = trace.states[0].cols();
  j["vocab_size"] = trace.final_logits.size();
  j["token_ids"] = trace.positions;
  j["layout"] = "f32 row-major: (layers+1) x positions x d_model, then vocab_size logits";
  write_file(base_path + ".json", j.dump(1) + "\n");
}

ResidualTrace load_trace(const std::string& base_path) {
  json j = json::parse(read_file(base_path + ".json"));
  const int layers = j.at("layers").get<int>();
  const int positions = j.at("positions").get<int>();
  const Eigen::Index d_model = j.at("d_model").get<Eigen::Index>();
  const Eigen::Index vocab = j.at("vocab_size").get<Eigen::Index>();

  ResidualTrace trace;
  trace.positions = j.at("token_ids").get<std::vector<int>>();
  require(static_cast<int>(trace.positions.size()) == positions, "trace sidecar inconsistent");

  std::ifstream bin(base_path + ".bin", std::ios::binary);
  require(bin.good(), "cannot open trace: " + base_path + ".bin");
  for (int li = 0; li <= layers; ++li) {
    Mat s(positions, d_model);
    bin.read(reinterpret_cast<char*>(s.data()),
             static_cast<std::streamsize>(s.size() * static_cast<Eigen::Index>(sizeof(float))));
    trace.states.push_back(std::move(s));
  }
  trace.final_logits.resize(vocab);
  bin.read(reinterpret_cast<char*>(trace.final_logits.data()),
           static_cast<std::streamsize>(vocab * static_cast<Eigen::Index>(sizeof(float))));
  require(bin.good(), "truncated trace: " + base_path + ".bin");
  trace.validate();
  return trace;
}

}  // namespace twohop
