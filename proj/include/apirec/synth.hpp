#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "apirec/corpus.hpp"
#include "apirec/llm.hpp"

// Deterministic synthetic corpus with a keyword -> API generative rule, plus a
// scripted annotator provider, so the whole pipeline runs offline.

namespace apirec {

struct SynthSpec {
  int n_apis = 20;
  int n_mashups = 200;
  int max_apis_per_mashup = 3;
  uint64_t seed = 7;
  // Prefix each requirement with a unique short tag; makes the corpus
  // memorizable by key rather than by composition (overfit-style runs).
  bool tagged_requirements = false;
};

struct SynthCorpus {
  ApiRepository repo;
  std::vector<Mashup> mashups;
};

// Every API owns one keyword; a mashup's description lists exactly the
// keywords of its invoked APIs, so the ground truth is recoverable from the
// text by rule.
SynthCorpus make_synthetic_corpus(const SynthSpec& spec);

// Scripted annotator: extracts the "Target APIs:" line from the annotation
// prompt and emits one ***name*** clause per target. Deterministic, so a warm
// cache replays byte-identically.
std::shared_ptr<ChatProvider> make_scripted_annotator();

// Scripted judge: parses the Reason section and scores the fraction of
// recommended APIs that carry a non-empty reason clause.
std::shared_ptr<ChatProvider> make_scripted_judge();

}  // namespace apirec
