#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "apirec/generation.hpp"
#include "apirec/metrics.hpp"
#include "apirec/model.hpp"

// Second-stage reinforcement learning: group rollouts from the frozen old
// policy, group-standardized advantages, and the clipped surrogate objective
// with KL regularization, ascended on LoRA parameters only. The scalar
// surrogate/KL pieces are exposed in double precision so a toy softmax policy
// can drive the exact same math as the backbone path.

namespace apirec {

enum class KlEstimator { Unbiased, Exact };

struct GrpoConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 5e-6;
  int epochs = 20;
  double rollout_temperature = 0.9;
  KlEstimator kl_estimator = KlEstimator::Unbiased;
  uint64_t seed = 42;
  int max_new_tokens = 96;
  double kl_halt_ceiling = 10.0;  // post-update KL above this aborts training
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int save_every = 0;

  void validate() const;  // G >= 2, eps in (0,1), beta >= 0
};

struct RolloutOutput {
  std::vector<int> ids;              // completion tokens
  std::vector<double> old_logprobs;  // per token, under the old policy
  Recommendation rec;
  ParseReport parse;
  double reward = 0;
};

struct GroupRollout {
  std::string mashup_id;
  std::vector<int> question;
  std::vector<RolloutOutput> outputs;
  std::vector<double> advantages;  // one per output, constant across its tokens
};

// (r_i - mean) / population std; all zeros when the spread collapses
// (std < 1e-8).
std::vector<double> compute_advantages(std::span<const double> rewards);

struct SurrogateTerm {
  double value = 0;
  double dlp = 0;  // d value / d lp_theta
  bool clipped = false;
};

// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) with ratio = exp(lp - lp_old).
SurrogateTerm clipped_surrogate(double lp_theta, double lp_old, double advantage, double eps);

// Unbiased per-token KL estimate r - log r - 1, r = exp(lp_ref - lp_theta),
// and its derivative in lp_theta.
double kl_unbiased(double lp_theta, double lp_ref);
double kl_unbiased_dlp(double lp_theta, double lp_ref);

// Exact KL(softmax(z) || softmax(z_ref)) over one logit row, and its gradient
// accumulated into dz with the given coefficient.
double exact_kl_row(std::span<const double> z, std::span<const double> z_ref);
void exact_kl_row_grad(std::span<const double> z, std::span<const double> z_ref, double coeff,
                       std::span<double> dz_acc);

struct ObjectiveStats {
  double objective = 0;
  double surrogate = 0;  // objective before the KL penalty
  double kl = 0;         // value of the applied estimator
  double clip_fraction = 0;
  double mean_ratio = 1;
  size_t tokens = 0;
};

// Pure objective over per-token logprob arrays (the unbiased-KL form; exact
// KL needs full rows and lives in the model-bound path). When dlp_out is
// given, fills d objective / d lp_theta per token.
ObjectiveStats grpo_objective_terms(const std::vector<std::vector<double>>& lp_theta,
                                    const std::vector<std::vector<double>>& lp_old,
                                    const std::vector<std::vector<double>>& lp_ref,
                                    std::span<const double> advantages, double eps, double beta,
                                    std::vector<std::vector<double>>* dlp_out = nullptr);

// G temperature-sampled completions of the rendered question with old-policy
// log-probs recorded from a full forward pass; seeded and reproducible.
GroupRollout sample_group(const PolicySnapshot& old_policy, const Mashup& mashup,
                          const Codec& codec, const GrpoConfig& cfg, std::mt19937_64& rng,
                          const TemplateSpec& tmpl = {});

// r_i = score_instance(parse(o_i)).total
void score_group(GroupRollout& rollout, const std::set<std::string>& truth,
                 const RewardWeights& weights, bool recommendation_only = false);

// Objective value and diagnostics at the current policy; when grads is given
// accumulates d(-J)/d(params) for a minimizing optimizer. The reference policy
// equals old_policy (re-snapshotted every step upstream).
ObjectiveStats grpo_objective(const Policy& policy, const PolicySnapshot& old_policy,
                              const GroupRollout& rollout, const GrpoConfig& cfg,
                              Workspace<float>& ws, GradBuffers<float>* grads);

struct GrpoStepStats {
  double reward_mean = 0, reward_std = 0;
  ObjectiveStats objective;
  double kl_post = 0;  // unbiased estimate vs the step's old policy, after the update
  bool degenerate = false;
  size_t well_formed = 0;
};

struct GrpoResult {
  int best_epoch = 0;  // 0 = the injected SFT state before any update
  double best_val_reward = 0;
  std::vector<std::string> log_lines;
  std::string best_checkpoint, final_checkpoint;
};

// Per step: snapshot the current policy as old = ref, sample a group for one
// mashup (batch size 1), score, standardize, one ascent step on the LoRA
// parameters. Halts with TrainingDivergence when the post-update KL exceeds
// the ceiling. Requires injected adapters; forces lora_only scope.
GrpoResult train_grpo(Policy& policy, const std::vector<Mashup>& train,
                      const std::vector<Mashup>& val, const Codec& codec, const GrpoConfig& cfg,
                      const RewardWeights& weights, bool recommendation_only = false,
                      const TemplateSpec& tmpl = {}, const std::string& out_dir = "");

// Mean total reward of greedy recommendations over a split.
double mean_total_reward(const Policy& policy, const std::vector<Mashup>& mashups,
                         const Codec& codec, const RewardWeights& weights,
                         bool recommendation_only = false, const TemplateSpec& tmpl = {},
                         int max_new_tokens = 96);

}  // namespace apirec
