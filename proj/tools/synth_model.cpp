// Writes a deterministic random-weight checkpoint plus a tokenizer whose
// vocabulary covers the generated task corpora. Meant for tests and dry
// runs of the analysis pipeline on machines without a converted model.

#include <CLI11.hpp>
#include <iostream>

#include "twohop/report.hpp"
#include "twohop/synth.hpp"

using namespace twohop;

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic checkpoint + tokenizer"};
  std::string out_dir = "synth-model";
  std::string arch = "llama";
  std::string data_dir = "data";
  SynthSpec spec;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--arch", arch, "gpt2|llama")->check(CLI::IsMember({"gpt2", "llama"}));
  app.add_option("--layers", spec.n_layers, "transformer blocks");
  app.add_option("--d-model", spec.d_model, "model width");
  app.add_option("--heads", spec.n_heads, "attention heads");
  app.add_option("--kv-heads", spec.n_kv_heads, "key/value heads");
  app.add_option("--d-ff", spec.d_ff, "feed-forward width");
  app.add_option("--max-seq", spec.max_seq, "context length");
  app.add_option("--seed", spec.seed, "weight seed");
  app.add_option("--name", spec.name, "model name in the header");
  app.add_option("--data-dir", data_dir, "pair-file directory for the tokenizer vocabulary");
  app.add_flag("--tied", spec.tied_embeddings, "tie unembedding to the embedding");

  CLI11_PARSE(app, argc, argv);
  spec.arch = arch_from_name(arch);

  try {
    std::vector<TaskDataset> datasets;
    for (const std::string& name : known_task_names()) {
      try {
        datasets.push_back(build_task(name, data_dir, spec.seed));
      } catch (const error& e) {
        std::cerr << "skipping task " << name << " for vocabulary: " << e.what() << "\n";
      }
    }
    Tokenizer tok = make_task_tokenizer(datasets);
    Model model = make_synth_model(spec, std::move(tok));

    ensure_dir(out_dir);
    model.save(out_dir + "/model.bin");
    model.tokenizer.save(out_dir + "/tokenizer.json");
    std::cout << out_dir << "/model.bin: " << model.cfg.vocab_size << " tokens, "
              << model.n_params() << " params\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
