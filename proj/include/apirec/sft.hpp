#pragma once

#include <optional>
#include <string>
#include <vector>

#include "apirec/corpus.hpp"
#include "apirec/model.hpp"
#include "apirec/vocab.hpp"

// First-stage supervised fine-tuning: render annotated examples into the
// training template and minimize the full-sequence cross-entropy.

namespace apirec {

// Ablation switches over the rendered template: plain mode drops the four
// delimiter tokens (API tokens stay atomic), recommendation-only drops the
// reason section.
struct TemplateSpec {
  bool special_tokens = true;
  bool include_reasons = true;
};

struct SectionOffsets {
  size_t api_start = 0, api_stop = 0, reason_start = 0, reason_stop = 0;
};

struct TrainingSequence {
  std::string mashup_id;
  std::vector<int> ids;  // leading BOS conditioning token + w_1..w_H + EOS
  std::optional<SectionOffsets> offsets;  // delimiter positions; absent in plain mode

  // Eq-1 sequence length: transitions predicted, excluding the BOS start.
  size_t transition_count() const { return ids.empty() ? 0 : ids.size() - 1; }
};

// Shared prompt prefix, ending right after the "Recommended APIs: " label so
// generation starts at the API section.
std::string template_prefix(const std::string& requirement, const TemplateSpec& tmpl);

// Full first-stage sequence text: prefix + API span + reason span.
std::string render_example_text(const std::string& requirement,
                                const std::vector<std::string>& apis,
                                const std::string& rationale, const TemplateSpec& tmpl);

// Renders and validates one training sequence. Throws DataError when the
// rationale references an unregistered API token or the sequence exceeds
// max_len; the delimiter grammar of the result is checked structurally.
TrainingSequence render_example(const Mashup& mashup, const std::vector<std::string>& apis,
                                const std::string& rationale, const Codec& codec,
                                const TemplateSpec& tmpl, size_t max_len);

enum class LrSchedule { Constant, Cosine };

struct SftConfig {
  double learning_rate = 1e-5;
  int epochs = 20;
  int batch_size = 8;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8, weight_decay = 0.0;
  double warmup_fraction = 0.05;  // linear warmup over this share of steps
  LrSchedule schedule = LrSchedule::Cosine;
  double min_lr_fraction = 0.1;   // cosine floor as a share of learning_rate
  double grad_clip = 1.0;         // global L2 norm ceiling; 0 disables
  uint64_t seed = 42;
  size_t max_sequence_length = 512;
  int save_every = 0;  // also keep sft-epoch{n} every n epochs; 0 = final only

  void validate() const;
};

// Full-sequence mean cross-entropy (prompt and target positions alike).
double cross_entropy_loss(const Policy& policy, const TrainingSequence& seq,
                          Workspace<float>& ws);

struct SftResult {
  int best_epoch = 0;
  double best_val_loss = 0;
  double final_train_loss = 0;
  std::vector<std::string> log_lines;  // one per epoch
  std::string best_checkpoint, final_checkpoint;
};

// Seeded-shuffle epoch loop with gradient accumulation over batch_size
// sequences and linear warmup. Tracks the lowest-validation-loss epoch and
// writes sft-best / sft-epoch{n} checkpoints under out_dir when given.
// Aborts with TrainingDivergence on a non-finite loss, saving the last
// finite epoch state as sft-abort.
SftResult train_sft(Policy& policy, const std::vector<TrainingSequence>& train,
                    const std::vector<TrainingSequence>& val, const SftConfig& cfg,
                    const std::string& out_dir = "");

struct AnnotationLookup {
  std::string mashup_id;
  std::string rationale;
  bool valid = false;
};

struct RenderedCorpus {
  std::vector<TrainingSequence> sequences;
  std::vector<std::string> dropped;  // mashup ids skipped, with reasons
};

// Renders every mashup that has a usable annotation (or every mashup, in
// recommendation-only mode); overlong or invalid examples are dropped and
// reported rather than truncated.
RenderedCorpus render_corpus(const std::vector<Mashup>& mashups,
                             const std::vector<AnnotationLookup>& annotations, const Codec& codec,
                             const TemplateSpec& tmpl, size_t max_len);

}  // namespace apirec
