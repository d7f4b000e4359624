// Writes a deterministic synthetic dataset (keyword -> API rule) so the full
// pipeline can be exercised offline with the scripted annotator.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "apirec/corpus.hpp"
#include "apirec/synth.hpp"
#include "apirec/util.hpp"

using namespace apirec;

int main(int argc, char** argv) {
  CLI::App app{"apirec-synth: generate a synthetic mashup/API dataset"};
  SynthSpec spec;
  std::string out_dir = "data";
  app.add_option("--apis", spec.n_apis, "number of APIs");
  app.add_option("--mashups", spec.n_mashups, "number of mashups");
  app.add_option("--max-per-mashup", spec.max_apis_per_mashup, "max APIs per mashup");
  app.add_option("--seed", spec.seed, "generator seed");
  app.add_option("--out", out_dir, "output directory");
  CLI11_PARSE(app, argc, argv);

  try {
    SynthCorpus corpus = make_synthetic_corpus(spec);
    util::write_text_file_atomic(out_dir + "/apis.jsonl", repository_to_jsonl(corpus.repo));
    util::write_text_file_atomic(out_dir + "/mashups.jsonl", mashups_to_jsonl(corpus.mashups));
    std::cout << "wrote " << corpus.repo.apis.size() << " APIs and " << corpus.mashups.size()
              << " mashups under " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
