#include "twohop/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "twohop/color.hpp"
#include "twohop/common.hpp"

namespace twohop {

using nlohmann::json;

std::string hop_name(Hop h) {
  switch (h) {
    case Hop::x_to_fx: return "x->fx";
    case Hop::fx_to_gfx: return "fx->gfx";
    case Hop::x_to_gx: return "x->gx";
    case Hop::gx_to_gfx: return "gx->gfx";
    case Hop::x_to_gfx: return "x->gfx";
  }
  throw error("unreachable hop");
}

std::optional<Hop> hop_from_name(const std::string& name) {
  for (Hop h : {Hop::x_to_fx, Hop::fx_to_gfx, Hop::x_to_gx, Hop::gx_to_gfx, Hop::x_to_gfx})
    if (hop_name(h) == name) return h;
  return std::nullopt;
}

void TaskSpec::validate() const {
  require(!name.empty(), "TaskSpec: empty name");
  require(has_gx || !gx_to_gfx_rule.has_value(),
          "TaskSpec " + name + ": gx_to_gfx_rule requires has_gx");
}

std::vector<std::string> Example::value_set() const {
  std::vector<std::string> v{x, fx, gfx};
  if (gx) v.push_back(*gx);
  if (fgx) v.push_back(*fgx);
  return v;
}

const std::string& hop_input(const Example& e, Hop h) {
  switch (h) {
    case Hop::x_to_fx:
    case Hop::x_to_gx:
    case Hop::x_to_gfx: return e.x;
    case Hop::fx_to_gfx: return e.fx;
    case Hop::gx_to_gfx:
      require(e.gx.has_value(), "hop gx->gfx on example without gx");
      return *e.gx;
  }
  throw error("unreachable hop");
}

const std::string& hop_output(const Example& e, Hop h) {
  switch (h) {
    case Hop::x_to_fx: return e.fx;
    case Hop::fx_to_gfx:
    case Hop::gx_to_gfx:
    case Hop::x_to_gfx: return e.gfx;
    case Hop::x_to_gx:
      require(e.gx.has_value(), "hop x->gx on example without gx");
      return *e.gx;
  }
  throw error("unreachable hop");
}

bool hop_defined(const TaskSpec& spec, Hop h) {
  if (h == Hop::x_to_gx || h == Hop::gx_to_gfx) return spec.has_gx;
  return true;
}

std::vector<Hop> defined_hops(const TaskSpec& spec) {
  std::vector<Hop> hops{Hop::x_to_fx, Hop::fx_to_gfx};
  if (spec.has_gx) {
    hops.push_back(Hop::x_to_gx);
    hops.push_back(Hop::gx_to_gfx);
  }
  return hops;
}

void TaskDataset::validate() const {
  spec.validate();
  require(examples.size() >= 20,
          "task " + spec.name + ": dataset too small (" + std::to_string(examples.size()) +
              " examples, need >= 20)");
  std::unordered_set<std::string> seen;
  for (const Example& e : examples) {
    require(!e.gfx.empty(), "task " + spec.name + ": empty gfx for x='" + e.x + "'");
    require(e.x != e.gfx, "task " + spec.name + ": x == gfx for x='" + e.x + "'");
    require(seen.insert(e.x).second, "task " + spec.name + ": duplicate x='" + e.x + "'");
    if (!spec.has_gx) {
      require(!e.gx && !e.fgx, "task " + spec.name + ": gx/fgx populated but has_gx is false");
    }
    if (spec.commutative && e.fgx) {
      require(*e.fgx == e.gfx, "task " + spec.name + ": commutative task with fgx != gfx");
    }
  }
}

const Example* TaskDataset::find_x(const std::string& x) const {
  for (const Example& e : examples)
    if (e.x == x) return &e;
  return nullptr;
}

namespace {

// collapse duplicate x, first occurrence wins
void dedup_examples(std::vector<Example>& examples) {
  std::unordered_set<std::string> seen;
  std::vector<Example> out;
  out.reserve(examples.size());
  for (Example& e : examples)
    if (seen.insert(e.x).second) out.push_back(std::move(e));
  examples = std::move(out);
}

}  // namespace

TaskDataset generate_arithmetic_task(ArithmeticKind kind, long lo, long hi) {
  require(lo >= 0 && lo < hi, "generate_arithmetic_task: need 0 <= lo < hi");
  TaskDataset ds;
  switch (kind) {
    case ArithmeticKind::plus_10_times_2:
      ds.spec = {"plus-10-times-2", "+10", "*2", true, "+20", true, false};
      break;
    case ArithmeticKind::plus_100_times_2:
      ds.spec = {"plus-100-times-2", "+100", "*2", true, "+200", true, false};
      break;
    case ArithmeticKind::mod_20_times_2:
      ds.spec = {"mod-20-times-2", "mod 20", "*2", true, "mod 40", true, false};
      break;
  }
  for (long x = lo; x <= hi; ++x) {
    Example e;
    e.x = std::to_string(x);
    long fx = 0, gx = 2 * x, gfx = 0, fgx = 0;
    switch (kind) {
      case ArithmeticKind::plus_10_times_2:
        fx = x + 10;
        gfx = 2 * x + 20;
        fgx = 2 * x + 10;
        break;
      case ArithmeticKind::plus_100_times_2:
        fx = x + 100;
        gfx = 2 * x + 200;
        fgx = 2 * x + 100;
        break;
      case ArithmeticKind::mod_20_times_2:
        fx = x % 20;
        gfx = 2 * (x % 20);
        fgx = (2 * x) % 20;
        break;
    }
    e.fx = std::to_string(fx);
    e.gx = std::to_string(gx);
    e.gfx = std::to_string(gfx);
    e.fgx = std::to_string(fgx);
    if (e.x == e.gfx) continue;  // x=0 under mod-20-times-2; keeps x != gfx
    ds.examples.push_back(std::move(e));
  }
  ds.provenance = "generated: integers " + std::to_string(lo) + ".." + std::to_string(hi);
  ds.validate();
  return ds;
}

TaskDataset generate_string_task(std::span<const std::string> wordlist) {
  TaskDataset ds;
  ds.spec = {"word-truncate-reverse", "truncate", "reverse", true, "drop-first-char", false, true};
  for (const std::string& w : wordlist) {
    require(w.size() >= 3, "generate_string_task: word too short: '" + w + "'");
    for (char c : w)
      require(c >= 'a' && c <= 'z', "generate_string_task: word not lowercase alphabetic: '" + w + "'");
    Example e;
    e.x = w;
    e.fx = w.substr(0, w.size() - 1);
    std::string rev(w.rbegin(), w.rend());
    e.gx = rev;
    e.gfx = std::string(e.fx.rbegin(), e.fx.rend());
    e.fgx = rev.substr(1);
    ds.examples.push_back(std::move(e));
  }
  dedup_examples(ds.examples);
  ds.provenance = "generated: wordlist of " + std::to_string(ds.examples.size()) + " words";
  ds.validate();
  return ds;
}

TaskDataset generate_color_task(int n, std::uint64_t seed) {
  require(n >= 1, "generate_color_task: n must be >= 1");
  TaskDataset ds;
  ds.spec = {"rgb-rotate-name", "rotate-hue-120", "color-name", false, std::nullopt, false, false};
  Rng rng(seed);
  std::unordered_set<std::string> seen;
  while (static_cast<int>(ds.examples.size()) < n) {
    Rgb x{static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)),
          static_cast<int>(rng.below(256))};
    Example e;
    e.x = format_rgb(x);
    if (!seen.insert(e.x).second) continue;
    Rgb fx = rotate_hue(x, 120.0);
    e.fx = format_rgb(fx);
    e.gfx = nearest_css3_name(fx);
    if (e.x == e.gfx) continue;  // cannot happen, x is a triple; keeps validate() honest
    ds.examples.push_back(std::move(e));
  }
  ds.provenance = "generated: " + std::to_string(n) + " random RGB triples, seed " +
                  std::to_string(seed);
  ds.validate();
  return ds;
}

PairMap pair_map_from_rows(std::vector<std::pair<std::string, std::string>> rows) {
  PairMap m;
  std::unordered_set<std::string> keys;
  for (auto& [k, v] : rows) {
    require(keys.insert(k).second, "duplicate key: '" + k + "'");
    m.rows.emplace_back(std::move(k), std::move(v));
  }
  return m;
}

const std::string* PairMap::lookup(const std::string& key) const {
  for (const auto& [k, v] : rows)
    if (k == key) return &v;
  return nullptr;
}

PairMap ingest_pair_file(const std::string& path, PairRole role) {
  const std::string role_name = role == PairRole::f ? "f" : "g";
  std::string contents = read_file(path);
  PairMap m;
  std::unordered_set<std::string> keys;
  std::istringstream in(contents);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    require(tab != std::string::npos && tab > 0 && tab + 1 < line.size() &&
                line.find('\t', tab + 1) == std::string::npos,
            path + ":" + std::to_string(lineno) + ": malformed row in " + role_name +
                " pair file (expected exactly two tab-separated columns)");
    std::string key = line.substr(0, tab);
    std::string value = line.substr(tab + 1);
    require(keys.insert(key).second,
            path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    m.rows.emplace_back(std::move(key), std::move(value));
  }
  return m;
}

TaskDataset compose_task(const PairMap& f_map, const PairMap& g_map, TaskSpec spec) {
  require(!f_map.empty() && !g_map.empty(), "compose_task: empty mapping");
  spec.validate();
  TaskDataset ds;
  ds.spec = std::move(spec);
  // index g for the join
  std::unordered_map<std::string, const std::string*> g_index;
  for (const auto& [k, v] : g_map.rows) g_index.emplace(k, &v);
  for (const auto& [x, fx] : f_map.rows) {
    auto it = g_index.find(fx);
    if (it == g_index.end()) continue;
    Example e;
    e.x = x;
    e.fx = fx;
    e.gfx = *it->second;
    if (ds.spec.has_gx) {
      auto gx_it = g_index.find(x);
      if (gx_it != g_index.end()) {
        e.gx = *gx_it->second;
        if (ds.spec.commutative) e.fgx = e.gfx;
      }
    }
    if (e.x == e.gfx) continue;  // degenerate composition, drop
    ds.examples.push_back(std::move(e));
  }
  require(!ds.examples.empty(), "compose_task: empty join between f and g mappings");
  dedup_examples(ds.examples);
  ds.provenance = "composed from pair files (" + std::to_string(ds.examples.size()) + " joined)";
  ds.validate();
  return ds;
}

std::vector<Example> sample_icl(const TaskDataset& dataset, const Example& query, int k,
                                std::uint64_t seed) {
  require(k >= 1, "sample_icl: k must be >= 1");
  const auto query_values = query.value_set();
  std::unordered_set<std::string> qset(query_values.begin(), query_values.end());

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    bool intersects = false;
    for (const std::string& v : dataset.examples[i].value_set()) {
      if (qset.count(v)) {
        intersects = true;
        break;
      }
    }
    if (!intersects) eligible.push_back(i);
  }
  require(static_cast<int>(eligible.size()) >= k,
          "sample_icl: only " + std::to_string(eligible.size()) + " eligible examples, need " +
              std::to_string(k));

  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(k));
  // partial Fisher-Yates: first k of a seeded shuffle
  for (int j = 0; j < k; ++j) {
    std::size_t pick = static_cast<std::size_t>(j) +
                       static_cast<std::size_t>(rng.below(eligible.size() - static_cast<std::size_t>(j)));
    std::swap(eligible[static_cast<std::size_t>(j)], eligible[pick]);
    out.push_back(dataset.examples[eligible[static_cast<std::size_t>(j)]]);
  }
  return out;
}

bool numeric_surface(std::string_view surface) { return starts_with_digit(surface); }

std::vector<int> answer_position_tokens(const Tokenizer& tok, std::string_view surface) {
  require(!surface.empty(), "answer_position_tokens: empty surface form");
  if (numeric_surface(surface)) return tok.encode(surface);
  return tok.encode(" " + std::string(surface));
}

int answer_first_token(const Tokenizer& tok, std::string_view surface) {
  return answer_position_tokens(tok, surface).front();
}

std::vector<std::pair<std::string, std::string>> tracked_variables(const TaskSpec& spec,
                                                                   const Example& e) {
  std::vector<std::pair<std::string, std::string>> vars;
  vars.emplace_back("x", e.x);
  vars.emplace_back("fx", e.fx);
  if (spec.has_gx && e.gx) vars.emplace_back("gx", *e.gx);
  vars.emplace_back("gfx", e.gfx);
  if (e.fgx && *e.fgx != e.gfx) vars.emplace_back("fgx", *e.fgx);
  return vars;
}

bool first_token_collision(const TaskSpec& spec, const Example& e, const Tokenizer& tok) {
  const auto vars = tracked_variables(spec, e);
  std::vector<int> firsts;
  firsts.reserve(vars.size());
  for (const auto& [role, surface] : vars) firsts.push_back(answer_first_token(tok, surface));
  for (std::size_t i = 0; i < firsts.size(); ++i)
    for (std::size_t j = i + 1; j < firsts.size(); ++j)
      if (firsts[i] == firsts[j]) return true;
  return false;
}

std::string dataset_to_jsonl(const TaskDataset& dataset) {
  std::string out;
  for (const Example& e : dataset.examples) {
    json j;
    j["x"] = e.x;
    j["fx"] = e.fx;
    j["gfx"] = e.gfx;
    if (e.gx) j["gx"] = *e.gx;
    if (e.fgx) j["fgx"] = *e.fgx;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> examples_from_jsonl(const std::string& jsonl) {
  std::vector<Example> out;
  std::istringstream in(jsonl);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    require(!j.is_discarded() && j.is_object(),
            "jsonl line " + std::to_string(lineno) + ": not a JSON object");
    Example e;
    e.x = j.at("x").get<std::string>();
    e.fx = j.at("fx").get<std::string>();
    e.gfx = j.at("gfx").get<std::string>();
    if (j.contains("gx")) e.gx = j["gx"].get<std::string>();
    if (j.contains("fgx")) e.fgx = j["fgx"].get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> wordlist_from_pairs(const PairMap& pairs) {
  std::set<std::string> words;
  auto usable = [](const std::string& w) {
    if (w.size() < 3) return false;
    for (char c : w)
      if (c < 'a' || c > 'z') return false;
    return true;
  };
  for (const auto& [k, v] : pairs.rows) {
    if (usable(k)) words.insert(k);
    if (usable(v)) words.insert(v);
  }
  return {words.begin(), words.end()};
}

// ---- task registry ----------------------------------------------------

namespace {

struct ComposedFamily {
  const char* name;
  const char* f_file;
  const char* g_file;
  const char* f_desc;
  const char* g_desc;
  bool has_gx;
  bool numeric;
  bool commutative;
};

// pair-file-backed families; provenance of the shipped sample files is
// documented in data/README.md
constexpr ComposedFamily kComposed[] = {
    {"antonym-spanish", "antonyms.tsv", "en_es.tsv", "antonym", "to-spanish", true, false, true},
    {"antonym-german", "antonyms.tsv", "en_de.tsv", "antonym", "to-german", true, false, true},
    {"antonym-french", "antonyms.tsv", "en_fr.tsv", "antonym", "to-french", true, false, true},
    {"park-country-capital", "park_country.tsv", "country_capital.tsv", "park-country",
     "country-capital", false, false, false},
    {"book-author-birthyear", "book_author.tsv", "author_birthyear.tsv", "book-author",
     "author-birthyear", false, true, false},
    {"song-artist-birthyear", "song_artist.tsv", "artist_birthyear.tsv", "song-artist",
     "artist-birthyear", false, true, false},
    {"movie-director-birthyear", "movie_director.tsv", "director_birthyear.tsv", "movie-director",
     "director-birthyear", false, true, false},
    {"person-university-year", "person_university.tsv", "university_year.tsv", "person-university",
     "university-year", false, true, false},
    {"person-university-founder", "person_university.tsv", "university_founder.tsv",
     "person-university", "university-founder", false, false, false},
    {"product-company-hq", "product_company.tsv", "company_hq.tsv", "product-company",
     "company-hq", false, false, false},
    {"product-company-ceo", "product_company.tsv", "company_ceo.tsv", "product-company",
     "company-ceo", false, false, false},
};

}  // namespace

std::vector<std::string> known_task_names() {
  std::vector<std::string> names{"plus-10-times-2", "plus-100-times-2", "mod-20-times-2",
                                 "word-truncate-reverse", "rgb-rotate-name"};
  for (const auto& fam : kComposed) names.push_back(fam.name);
  return names;
}

bool is_known_task(const std::string& name) {
  auto names = known_task_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

TaskDataset build_task(const std::string& name, const std::string& data_dir, std::uint64_t seed) {
  if (name == "plus-10-times-2")
    return generate_arithmetic_task(ArithmeticKind::plus_10_times_2, 0, 999);
  if (name == "plus-100-times-2")
    return generate_arithmetic_task(ArithmeticKind::plus_100_times_2, 0, 999);
  if (name == "mod-20-times-2")
    return generate_arithmetic_task(ArithmeticKind::mod_20_times_2, 0, 999);
  if (name == "word-truncate-reverse") {
    PairMap antonyms = ingest_pair_file(data_dir + "/antonyms.tsv", PairRole::f);
    auto words = wordlist_from_pairs(antonyms);
    return generate_string_task(words);
  }
  if (name == "rgb-rotate-name") return generate_color_task(200, seed);

  for (const auto& fam : kComposed) {
    if (name != fam.name) continue;
    PairMap f_map = ingest_pair_file(data_dir + "/" + fam.f_file, PairRole::f);
    PairMap g_map = ingest_pair_file(data_dir + "/" + fam.g_file, PairRole::g);
    TaskSpec spec;
    spec.name = fam.name;
    spec.f_desc = fam.f_desc;
    spec.g_desc = fam.g_desc;
    spec.has_gx = fam.has_gx;
    spec.answer_is_numeric = fam.numeric;
    spec.commutative = fam.commutative;
    return compose_task(f_map, g_map, std::move(spec));
  }
  throw error("unknown task: '" + name + "' (known: " + [] {
    std::string s;
    for (const auto& n : known_task_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }() + ")");
}

}  // namespace twohop
