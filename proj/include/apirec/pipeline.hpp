#pragma once

#include <string>
#include <vector>

#include "apirec/config.hpp"
#include "apirec/corpus.hpp"

// Pipeline stages behind the CLI. Every stage reads and writes a run
// directory named by the config digest, so any downstream stage can be
// re-run from the recorded artifacts alone.

namespace apirec {

struct RunPaths {
  std::string root;

  std::string run_meta() const { return root + "/run.json"; }
  std::string resolved_config() const { return root + "/resolved_config.json"; }
  std::string apis() const { return root + "/data/apis.jsonl"; }
  std::string mashups() const { return root + "/data/mashups.jsonl"; }
  std::string ingest_report() const { return root + "/data/ingest_report.json"; }
  std::string stats() const { return root + "/stats.json"; }
  std::string split() const { return root + "/split.json"; }
  std::string annotations() const { return root + "/annotations.jsonl"; }
  std::string annotation_report() const { return root + "/annotation_report.json"; }
  std::string vocabulary() const { return root + "/vocabulary.json"; }
  std::string sft_dir() const { return root + "/sft"; }
  std::string grpo_dir() const { return root + "/grpo"; }
  std::string sft_best() const { return root + "/sft/sft-best.ckpt"; }
  std::string grpo_best() const { return root + "/grpo/grpo-best.ckpt"; }
  std::string eval_json() const { return root + "/eval.json"; }
  std::string eval_instances() const { return root + "/instances.jsonl"; }
};

// Locates the existing run directory for this config digest under out_root or
// creates run-<digest12>-<timestamp>, recording the resolved config (with env
// placeholders intact, so secrets stay out of artifacts).
RunPaths find_or_create_run_dir(const ExperimentConfig& cfg, const std::string& out_root);

struct LoadedCorpus {
  ApiRepository repo;
  std::vector<Mashup> mashups;
};

LoadedCorpus load_normalized_corpus(const RunPaths& paths);
std::vector<Mashup> select_split(const std::vector<Mashup>& mashups,
                                 const std::vector<std::string>& ids);

void stage_ingest(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_stats(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_split(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_annotate(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_train_sft(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_train_grpo(const ExperimentConfig& cfg, const RunPaths& paths, bool force);
void stage_evaluate(const ExperimentConfig& cfg, const RunPaths& paths, bool force,
                    const std::vector<std::string>& judges_override,
                    const std::string& checkpoint_override, double temperature_override);
void stage_recommend(const ExperimentConfig& cfg, const RunPaths& paths, const std::string& text,
                     double temperature_override);
void stage_report(const std::vector<std::string>& run_dirs);

}  // namespace apirec
