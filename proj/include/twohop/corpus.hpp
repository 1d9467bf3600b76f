#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twohop/tokenizer.hpp"

namespace twohop {

// The hops of a two-hop task y = g(f(x)). x_to_gfx is the composition itself.
enum class Hop { x_to_fx, fx_to_gfx, x_to_gx, gx_to_gfx, x_to_gfx };

std::string hop_name(Hop h);
std::optional<Hop> hop_from_name(const std::string& name);

struct TaskSpec {
  std::string name;
  std::string f_desc;
  std::string g_desc;
  bool has_gx = false;                          // task defines x -> g(x) -> g(f(x))
  std::optional<std::string> gx_to_gfx_rule;    // closed-form rule, e.g. "+200"
  bool answer_is_numeric = false;               // composition answer; controls trailing space
  bool commutative = false;                     // f(g(x)) == g(f(x)) by construction

  void validate() const;
};

struct Example {
  std::string x;
  std::string fx;
  std::string gfx;
  std::optional<std::string> gx;
  std::optional<std::string> fgx;

  // populated surface forms, used by the ICL disjointness rule
  std::vector<std::string> value_set() const;
};

// hop endpoints; throws if the hop is not populated on this example
const std::string& hop_input(const Example& e, Hop h);
const std::string& hop_output(const Example& e, Hop h);
bool hop_defined(const TaskSpec& spec, Hop h);
std::vector<Hop> defined_hops(const TaskSpec& spec);  // excludes the composition

struct TaskDataset {
  TaskSpec spec;
  std::vector<Example> examples;
  std::string provenance;

  void validate() const;
  const Example* find_x(const std::string& x) const;
};

enum class ArithmeticKind { plus_10_times_2, plus_100_times_2, mod_20_times_2 };

TaskDataset generate_arithmetic_task(ArithmeticKind kind, long lo, long hi);
TaskDataset generate_string_task(std::span<const std::string> wordlist);
TaskDataset generate_color_task(int n, std::uint64_t seed);

// Two-column TSV ingestion. Preserves row order; duplicate keys and
// malformed rows are rejected with the offending line/key named.
struct PairMap {
  std::vector<std::pair<std::string, std::string>> rows;

  const std::string* lookup(const std::string& key) const;
  bool empty() const { return rows.empty(); }
};

enum class PairRole { f, g };
PairMap ingest_pair_file(const std::string& path, PairRole role);
PairMap pair_map_from_rows(std::vector<std::pair<std::string, std::string>> rows);

// Join {x, f[x], g[f[x]]} over keys where defined. gx/fgx populated when
// spec.has_gx and the lookups resolve (fgx = gfx for commutative tasks).
TaskDataset compose_task(const PairMap& f_map, const PairMap& g_map, TaskSpec spec);

// k examples drawn uniformly without replacement among those sharing no
// surface form with the query's value set. Deterministic given seed.
std::vector<Example> sample_icl(const TaskDataset& dataset, const Example& query, int k,
                                std::uint64_t seed);

// Answer-position tokenization. Numeric surface forms follow a prompt
// ending "A: " and tokenize bare; words absorb the leading space.
bool numeric_surface(std::string_view surface);
std::vector<int> answer_position_tokens(const Tokenizer& tok, std::string_view surface);
int answer_first_token(const Tokenizer& tok, std::string_view surface);

// True iff two distinct tracked variables of the example share the same
// first token in answer position. fgx does not count as distinct when it
// equals gfx (the two are rendered as one variable downstream).
bool first_token_collision(const TaskSpec& spec, const Example& e, const Tokenizer& tok);

// Variables tracked by the lens analyses, in canonical order
// x, fx, gx, gfx, fgx; fgx omitted when equal to gfx.
std::vector<std::pair<std::string, std::string>> tracked_variables(const TaskSpec& spec,
                                                                   const Example& e);

// JSONL serialization: one object per line, keys {x, fx, gx, gfx, fgx},
// absent optionals omitted.
std::string dataset_to_jsonl(const TaskDataset& dataset);
std::vector<Example> examples_from_jsonl(const std::string& jsonl);

// ---- task registry ----------------------------------------------------
// Builds any of the named task families, generating where the task is
// closed-form and composing pair files from data_dir otherwise.

std::vector<std::string> known_task_names();
bool is_known_task(const std::string& name);
TaskDataset build_task(const std::string& name, const std::string& data_dir, std::uint64_t seed);

// default wordlist for word-truncate-reverse: words appearing in the
// antonym pair file, filtered to lowercase alphabetic, length >= 3
std::vector<std::string> wordlist_from_pairs(const PairMap& pairs);

}  // namespace twohop
