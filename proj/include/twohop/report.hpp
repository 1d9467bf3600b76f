#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "twohop/lens.hpp"
#include "twohop/pipeline.hpp"

namespace twohop {

// One run directory out/<run-id>/<stage>/... with a manifest capturing
// config, seed, model identifiers, and content hashes of inputs. The run
// id is derived from the config, so identical runs land in identical
// paths with identical bytes.
class RunContext {
 public:
  static RunContext create(const std::string& out_root, const std::string& stage,
                           const std::map<std::string, std::string>& config, std::uint64_t seed);

  const std::string& dir() const { return dir_; }
  const std::string& run_id() const { return run_id_; }
  std::string stage_dir(const std::string& stage) const;  // creates the directory

  void record_input(const std::string& label, const std::string& path);
  void record_model(const Model& model);
  void write_manifest() const;

 private:
  std::string dir_;
  std::string run_id_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::string> input_hashes_;
  std::map<std::string, std::string> model_info_;
};

std::uint64_t content_hash(const std::string& path);

// signature line chart (intermediates dashed) plus its sibling data file;
// throws when the curves are excluded (< min examples)
void emit_signature_plot(const std::string& dir, const std::string& task,
                         const AggregateCurves& curves);

struct PresenceHistogram {
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> values;  // per task
  double fraction_low = 0.0;   // presence < 0.1
  double fraction_high = 0.0;  // presence >= 0.5
};

// fixed bins of width 0.1 over [0,1]; reports the <0.1 / >=0.5 fractions
PresenceHistogram emit_presence_histogram(const std::string& dir,
                                          std::span<const std::string> tasks,
                                          const std::vector<std::vector<double>>& values,
                                          const std::string& decoder);

struct ModelPoint {
  std::string name;
  double n_params = 0.0;
  int n_layers = 0;
  double gap = 0.0;
};

// gap vs parameter count (log axis) and gap vs layer count
void emit_gap_vs_size(const std::string& dir, std::vector<ModelPoint> points);

void emit_gap_charts(const std::string& dir, std::span<const GapReport> reports);

void ensure_dir(const std::string& path);

}  // namespace twohop
