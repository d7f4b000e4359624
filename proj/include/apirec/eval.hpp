#pragma once

#include <optional>
#include <string>
#include <vector>

#include "apirec/generation.hpp"
#include "apirec/llm.hpp"
#include "apirec/metrics.hpp"
#include "apirec/model.hpp"

// Corpus-level evaluation: per-mashup recommendation, instance scoring, and
// aggregate rates, plus optional LLM judging.

namespace apirec {

struct EvalOptions {
  DecodeConfig decode;
  TemplateSpec tmpl;
  bool recommendation_only = false;
  int threads = 1;  // per-mashup generation fans out over immutable snapshots
  std::vector<std::string> judges;  // judge model ids; empty disables RS
};

struct InstanceResult {
  std::string mashup_id;
  Recommendation rec;
  ParseReport parse;
  RewardBreakdown score;
};

struct EvalOutput {
  EvalReport report;
  std::vector<InstanceResult> instances;  // mashup order of the split
};

// Scores every mashup of the split with its own cutoff s = |api_list|;
// @1 columns use the first emitted API. Judges, when configured, rate each
// non-empty recommendation and fill the RS block. Throws DataError on an
// empty split.
EvalOutput evaluate_model(const Policy& policy, const std::vector<Mashup>& split,
                          const ApiRepository& repo, const Codec& codec,
                          const RewardWeights& weights, const EvalOptions& opts,
                          ChatClient* judge_client = nullptr);

std::string instances_to_jsonl(const std::vector<InstanceResult>& instances);

}  // namespace apirec
