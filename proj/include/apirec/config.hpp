#pragma once

#include <string>
#include <vector>

#include "apirec/grpo.hpp"
#include "apirec/metrics.hpp"
#include "apirec/model.hpp"
#include "apirec/sft.hpp"

// Single experiment configuration: one JSON file drives every pipeline stage.
// String values may hold ${ENV_VAR} placeholders; they are resolved only at
// the point of use, so secrets never reach run directories or digests.

namespace apirec {

struct AnnotatorConfig {
  std::string provider = "scripted";  // scripted | http
  std::string model = "scripted-annotator";
  std::string base_url;
  std::string api_key = "${APIREC_API_KEY}";
  double temperature = 0.7;
  int max_attempts = 3;
  int max_tokens = 1024;
  int concurrency = 4;
};

struct JudgeConfig {
  std::string provider = "scripted";
  std::vector<std::string> models;
  std::string base_url;
  std::string api_key = "${APIREC_API_KEY}";
};

struct Ablations {
  bool skip_grpo = false;            // nG: stop after the first stage
  bool no_special_tokens = false;    // nS: plain-text labels, no delimiters
  bool recommendation_only = false;  // Rec: drop the reasoning task
};

struct ExperimentConfig {
  uint64_t seed = 42;
  std::string apis_path = "data/apis.jsonl";
  std::string mashups_path = "data/mashups.jsonl";
  std::string cache_dir = "cache";
  BackboneConfig backbone;
  LoraConfig lora;
  SftConfig sft;
  GrpoConfig grpo;
  DecodeConfig decode;
  RewardWeights weights;
  AnnotatorConfig annotator;
  JudgeConfig judge;
  Ablations ablations;

  TemplateSpec template_spec() const {
    return {!ablations.no_special_tokens, !ablations.recommendation_only};
  }
  std::string to_json() const;  // canonical, placeholder strings intact
  std::string digest() const;   // sha256 of to_json()
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

// Replaces every ${VAR} with getenv(VAR); throws UsageError when a referenced
// variable is unset.
std::string resolve_env(const std::string& value);

}  // namespace apirec
