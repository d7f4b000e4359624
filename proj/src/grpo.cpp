#include "apirec/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "apirec/kernels.hpp"
#include "apirec/util.hpp"

namespace apirec {

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("grpo: group_size must be >= 2");
  if (!(clip_epsilon > 0 && clip_epsilon < 1))
    throw std::invalid_argument("grpo: clip_epsilon must lie in (0,1)");
  if (kl_beta < 0) throw std::invalid_argument("grpo: kl_beta must be >= 0");
  if (learning_rate <= 0) throw std::invalid_argument("grpo: learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("grpo: epochs must be >= 1");
  if (rollout_temperature <= 0)
    throw std::invalid_argument("grpo: rollout_temperature must be > 0");
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("compute_advantages: need a group of >= 2 rewards");
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(g);
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population variance
  double std_dev = std::sqrt(var);
  std::vector<double> adv(g, 0.0);
  if (std_dev < 1e-8) return adv;
  for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / std_dev;
  return adv;
}

SurrogateTerm clipped_surrogate(double lp_theta, double lp_old, double advantage, double eps) {
  SurrogateTerm t;
  double ratio = std::exp(lp_theta - lp_old);
  double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  double unclipped = ratio * advantage;
  double clipped = clipped_ratio * advantage;
  if (unclipped <= clipped) {
    t.value = unclipped;
    t.dlp = ratio * advantage;  // d(ratio)/d(lp) = ratio
    t.clipped = false;
  } else {
    t.value = clipped;
    // The clip branch is constant in lp except where clamp is inactive, in
    // which case both branches coincide.
    bool clamp_active = ratio < 1.0 - eps || ratio > 1.0 + eps;
    t.dlp = clamp_active ? 0.0 : ratio * advantage;
    t.clipped = clamp_active;
  }
  return t;
}

double kl_unbiased(double lp_theta, double lp_ref) {
  double r = std::exp(lp_ref - lp_theta);
  return r - std::log(r) - 1.0;
}

double kl_unbiased_dlp(double lp_theta, double lp_ref) {
  double r = std::exp(lp_ref - lp_theta);
  return 1.0 - r;
}

double exact_kl_row(std::span<const double> z, std::span<const double> z_ref) {
  if (z.size() != z_ref.size()) throw std::invalid_argument("exact_kl_row: size mismatch");
  const int n = static_cast<int>(z.size());
  double lse = kern::ref::logsumexp(z.data(), n);
  double lse_ref = kern::ref::logsumexp(z_ref.data(), n);
  double kl = 0;
  for (int i = 0; i < n; ++i) {
    double lp = z[i] - lse;
    double lq = z_ref[i] - lse_ref;
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

void exact_kl_row_grad(std::span<const double> z, std::span<const double> z_ref, double coeff,
                       std::span<double> dz_acc) {
  const int n = static_cast<int>(z.size());
  double lse = kern::ref::logsumexp(z.data(), n);
  double lse_ref = kern::ref::logsumexp(z_ref.data(), n);
  double kl = 0;
  for (int i = 0; i < n; ++i) {
    double lp = z[i] - lse;
    kl += std::exp(lp) * (lp - (z_ref[i] - lse_ref));
  }
  for (int i = 0; i < n; ++i) {
    double lp = z[i] - lse;
    double lq = z_ref[i] - lse_ref;
    dz_acc[i] += coeff * std::exp(lp) * (lp - lq - kl);
  }
}

ObjectiveStats grpo_objective_terms(const std::vector<std::vector<double>>& lp_theta,
                                    const std::vector<std::vector<double>>& lp_old,
                                    const std::vector<std::vector<double>>& lp_ref,
                                    std::span<const double> advantages, double eps, double beta,
                                    std::vector<std::vector<double>>* dlp_out) {
  const size_t g = lp_theta.size();
  if (lp_old.size() != g || lp_ref.size() != g || advantages.size() != g)
    throw std::invalid_argument("grpo_objective_terms: group size mismatch");
  ObjectiveStats stats;
  if (dlp_out) {
    dlp_out->resize(g);
    for (size_t i = 0; i < g; ++i) (*dlp_out)[i].assign(lp_theta[i].size(), 0.0);
  }
  double ratio_sum = 0;
  size_t clipped = 0;
  for (size_t i = 0; i < g; ++i) {
    const auto& lt = lp_theta[i];
    if (lp_old[i].size() != lt.size() || lp_ref[i].size() != lt.size())
      throw std::invalid_argument("grpo_objective_terms: missing per-token log-probs");
    if (lt.empty()) continue;
    const double w = 1.0 / (static_cast<double>(g) * static_cast<double>(lt.size()));
    for (size_t t = 0; t < lt.size(); ++t) {
      SurrogateTerm s = clipped_surrogate(lt[t], lp_old[i][t], advantages[i], eps);
      stats.surrogate += w * s.value;
      double dlp = w * s.dlp;
      double kl = kl_unbiased(lt[t], lp_ref[i][t]);
      stats.kl += w * kl;
      if (beta > 0) dlp -= beta * w * kl_unbiased_dlp(lt[t], lp_ref[i][t]);
      if (dlp_out) (*dlp_out)[i][t] = dlp;
      ratio_sum += std::exp(lt[t] - lp_old[i][t]);
      if (s.clipped) ++clipped;
      ++stats.tokens;
    }
  }
  stats.objective = stats.surrogate - beta * stats.kl;
  if (stats.tokens) {
    stats.clip_fraction = static_cast<double>(clipped) / stats.tokens;
    stats.mean_ratio = ratio_sum / stats.tokens;
  }
  return stats;
}

GroupRollout sample_group(const PolicySnapshot& old_policy, const Mashup& mashup,
                          const Codec& codec, const GrpoConfig& cfg, std::mt19937_64& rng,
                          const TemplateSpec& tmpl) {
  cfg.validate();
  GroupRollout rollout;
  rollout.mashup_id = mashup.mashup_id;
  rollout.question = render_question(mashup, codec, tmpl);

  DecodeConfig dc;
  dc.mode = DecodeMode::Sample;
  dc.temperature = cfg.rollout_temperature;
  dc.max_new_tokens = cfg.max_new_tokens;
  dc.ensure_stops(codec.space());
  if (!tmpl.include_reasons) dc.stop_ids.insert(codec.space().delimiter(Delimiter::ApiStop));

  Workspace<float> ws;
  for (int i = 0; i < cfg.group_size; ++i) {
    RolloutOutput out;
    GenerateResult gen = generate(*old_policy, std::span<const int>(rollout.question), dc, rng);
    out.ids = std::move(gen.completion);
    // Old-policy log-probs from the same full-forward path the update uses, so
    // the theta-equals-old ratio is exactly one.
    if (!out.ids.empty())
      out.old_logprobs = sequence_logprobs(*old_policy, std::span<const int>(rollout.question),
                                           std::span<const int>(out.ids), ws);
    auto [rec, parse] = parse_generation(std::span<const int>(out.ids), codec, tmpl);
    out.rec = std::move(rec);
    out.parse = parse;
    out.parse.truncated = out.parse.truncated || gen.truncated;
    rollout.outputs.push_back(std::move(out));
  }
  return rollout;
}

void score_group(GroupRollout& rollout, const std::set<std::string>& truth,
                 const RewardWeights& weights, bool recommendation_only) {
  for (auto& out : rollout.outputs) {
    RewardBreakdown b = score_instance(out.rec.api_list, out.rec.apis_reason, truth, weights,
                                       recommendation_only);
    out.reward = b.total;
  }
}

ObjectiveStats grpo_objective(const Policy& policy, const PolicySnapshot& old_policy,
                              const GroupRollout& rollout, const GrpoConfig& cfg,
                              Workspace<float>& ws, GradBuffers<float>* grads) {
  const size_t g = rollout.outputs.size();
  if (rollout.advantages.size() != g)
    throw std::invalid_argument("grpo_objective: advantages not computed");
  const int V = policy.cfg.vocab_size;
  ObjectiveStats stats;
  double ratio_sum = 0;
  size_t clipped = 0;

  Workspace<float> ws_old;  // reference forward for the exact estimator
  for (size_t i = 0; i < g; ++i) {
    const auto& out = rollout.outputs[i];
    if (out.ids.empty()) continue;
    if (out.old_logprobs.size() != out.ids.size())
      throw std::invalid_argument("grpo_objective: rollout lacks old-policy log-probs");
    std::vector<int> ids(rollout.question.begin(), rollout.question.end());
    ids.insert(ids.end(), out.ids.begin(), out.ids.end());

    const float* logits = forward_logits(policy, std::span<const int>(ids), ws);
    const float* old_logits = nullptr;
    if (cfg.kl_estimator == KlEstimator::Exact && cfg.kl_beta > 0)
      old_logits = forward_logits(*old_policy, std::span<const int>(ids), ws_old);

    const double w = 1.0 / (static_cast<double>(g) * static_cast<double>(out.ids.size()));
    if (grads) {
      if (ws.dlogits.size() < ids.size() * size_t(V)) ws.dlogits.resize(ids.size() * size_t(V));
      std::fill(ws.dlogits.begin(), ws.dlogits.begin() + ids.size() * size_t(V), 0.f);
    }

    std::vector<double> zrow(V), zrow_ref(V);
    for (size_t t = 0; t < out.ids.size(); ++t) {
      size_t pos = rollout.question.size() + t - 1;  // logits row predicting ids[pos+1]
      const float* row = logits + pos * size_t(V);
      double lse = kern::logsumexp(row, V);
      double lp = static_cast<double>(row[out.ids[t]]) - lse;

      SurrogateTerm s = clipped_surrogate(lp, out.old_logprobs[t], rollout.advantages[i],
                                          cfg.clip_epsilon);
      stats.surrogate += w * s.value;
      double dlp = w * s.dlp;  // d(J)/d(lp)
      ratio_sum += std::exp(lp - out.old_logprobs[t]);
      if (s.clipped) ++clipped;
      ++stats.tokens;

      if (cfg.kl_estimator == KlEstimator::Unbiased) {
        stats.kl += w * kl_unbiased(lp, out.old_logprobs[t]);
        if (cfg.kl_beta > 0) dlp -= cfg.kl_beta * w * kl_unbiased_dlp(lp, out.old_logprobs[t]);
      }

      if (grads) {
        // d(-J)/d(logits) = -dlp * (onehot - softmax)
        float* drow = ws.dlogits.data() + pos * size_t(V);
        kern::softmax_fwd(drow, row, V);
        const float dlpf = static_cast<float>(dlp);
        for (int j = 0; j < V; ++j) drow[j] *= dlpf;
        drow[out.ids[t]] -= dlpf;
      }
      if (old_logits) {
        const float* orow = old_logits + pos * size_t(V);
        for (int j = 0; j < V; ++j) {
          zrow[j] = static_cast<double>(row[j]);
          zrow_ref[j] = static_cast<double>(orow[j]);
        }
        stats.kl += w * exact_kl_row(zrow, zrow_ref);
        if (grads && cfg.kl_beta > 0) {
          std::vector<double> dz(V, 0.0);
          exact_kl_row_grad(zrow, zrow_ref, 1.0, dz);
          float* drow = ws.dlogits.data() + pos * size_t(V);
          // objective takes -beta*KL; loss = -J adds +beta*KL
          for (int j = 0; j < V; ++j)
            drow[j] += static_cast<float>(cfg.kl_beta * w * dz[j]);
        }
      }
    }
    if (grads) backward_from_dlogits(policy, std::span<const int>(ids), ws.dlogits, ws, *grads);
  }

  stats.objective = stats.surrogate - cfg.kl_beta * stats.kl;
  if (stats.tokens) {
    stats.clip_fraction = static_cast<double>(clipped) / stats.tokens;
    stats.mean_ratio = ratio_sum / stats.tokens;
  }
  return stats;
}

double mean_total_reward(const Policy& policy, const std::vector<Mashup>& mashups,
                         const Codec& codec, const RewardWeights& weights,
                         bool recommendation_only, const TemplateSpec& tmpl,
                         int max_new_tokens) {
  if (mashups.empty()) throw DataError("mean_total_reward: empty split");
  DecodeConfig dc;
  dc.mode = DecodeMode::Greedy;
  dc.max_new_tokens = max_new_tokens;
  dc.ensure_stops(codec.space());
  if (!tmpl.include_reasons) dc.stop_ids.insert(codec.space().delimiter(Delimiter::ApiStop));
  std::mt19937_64 rng(0);
  double sum = 0;
  for (const auto& m : mashups) {
    auto [rec, parse] = recommend(policy, m, dc, codec, rng, tmpl);
    std::set<std::string> truth(m.invoked_apis.begin(), m.invoked_apis.end());
    sum += score_instance(rec.api_list, rec.apis_reason, truth, weights, recommendation_only)
               .total;
  }
  return sum / static_cast<double>(mashups.size());
}

namespace {

double post_update_kl(const Policy& policy, const GroupRollout& rollout, Workspace<float>& ws) {
  double total = 0;
  size_t groups = 0;
  for (const auto& out : rollout.outputs) {
    if (out.ids.empty()) continue;
    std::vector<double> lps = sequence_logprobs(policy, std::span<const int>(rollout.question),
                                                std::span<const int>(out.ids), ws);
    double kl = 0;
    for (size_t t = 0; t < lps.size(); ++t) kl += kl_unbiased(lps[t], out.old_logprobs[t]);
    total += kl / static_cast<double>(lps.size());
    ++groups;
  }
  return groups ? total / static_cast<double>(groups) : 0.0;
}

}  // namespace

GrpoResult train_grpo(Policy& policy, const std::vector<Mashup>& train,
                      const std::vector<Mashup>& val, const Codec& codec, const GrpoConfig& cfg,
                      const RewardWeights& weights, bool recommendation_only,
                      const TemplateSpec& tmpl, const std::string& out_dir) {
  cfg.validate();
  if (train.empty()) throw DataError("train_grpo: empty training split");
  if (policy.lora.empty())
    throw DataError("train_grpo: inject LoRA adapters before the second stage");
  set_trainable_scope(policy, TrainScope::LoraOnly);

  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  GrpoResult result;
  Workspace<float> ws;
  GradBuffers<float> grads = make_grad_buffers(policy);
  AdamW<float> opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.adam_eps;

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // The injected-but-untouched SFT state competes as epoch 0, so the best
  // checkpoint can never fall below the stage input on validation reward.
  Policy best = policy;
  double best_val = val.empty() ? -1.0
                                : mean_total_reward(policy, val, codec, weights,
                                                    recommendation_only, tmpl,
                                                    cfg.max_new_tokens);
  int best_epoch = 0;
  result.log_lines.push_back("epoch 0 val_reward " + std::to_string(best_val) +
                             " (stage input)");

  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    util::seeded_shuffle(order, rng);
    for (size_t oi = 0; oi < order.size(); ++oi) {
      const Mashup& mashup = train[order[oi]];
      std::set<std::string> truth(mashup.invoked_apis.begin(), mashup.invoked_apis.end());

      PolicySnapshot old = snapshot(policy);  // pi_old and pi_ref for this step
      GroupRollout rollout = sample_group(old, mashup, codec, cfg, rng, tmpl);
      score_group(rollout, truth, weights, recommendation_only);

      std::vector<double> rewards;
      for (const auto& o : rollout.outputs) rewards.push_back(o.reward);
      rollout.advantages = compute_advantages(rewards);
      double rmean = util::mean_of(rewards);
      double rvar = 0;
      for (double r : rewards) rvar += (r - rmean) * (r - rmean);
      double rstd = std::sqrt(rvar / rewards.size());
      size_t well_formed = 0;
      for (const auto& o : rollout.outputs)
        if (o.parse.well_formed()) ++well_formed;

      bool degenerate =
          std::all_of(rollout.advantages.begin(), rollout.advantages.end(),
                      [](double a) { return a == 0.0; });
      ObjectiveStats stats;
      double kl_post = 0;
      if (!degenerate) {
        grads.zero();
        stats = grpo_objective(policy, old, rollout, cfg, ws, &grads);
        ++step;
        opt.step(policy, grads, cfg.learning_rate);
        kl_post = post_update_kl(policy, rollout, ws);
      }

      char line[256];
      std::snprintf(line, sizeof(line),
                    "epoch %d step %ld mashup %s reward %.4f±%.4f kl %.3e clip %.3f "
                    "well_formed %zu/%zu%s",
                    epoch, step, mashup.mashup_id.c_str(), rmean, rstd, kl_post,
                    stats.clip_fraction, well_formed, rollout.outputs.size(),
                    degenerate ? " (degenerate group, no update)" : "");
      result.log_lines.emplace_back(line);

      if (!degenerate && kl_post > cfg.kl_halt_ceiling) {
        if (!out_dir.empty()) save_checkpoint(policy, out_dir + "/grpo-halt.ckpt");
        throw TrainingDivergence("grpo: post-update KL " + std::to_string(kl_post) +
                                 " exceeded ceiling " + std::to_string(cfg.kl_halt_ceiling));
      }
    }

    if (!val.empty()) {
      double vr = mean_total_reward(policy, val, codec, weights, recommendation_only, tmpl,
                                    cfg.max_new_tokens);
      result.log_lines.push_back("epoch " + std::to_string(epoch) + " val_reward " +
                                 std::to_string(vr));
      if (vr > best_val) {
        best_val = vr;
        best_epoch = epoch;
        best = policy;
      }
    } else {
      best = policy;
      best_epoch = epoch;
    }
    if (!out_dir.empty() && cfg.save_every > 0 && epoch % cfg.save_every == 0 &&
        epoch != cfg.epochs)
      save_checkpoint(policy, out_dir + "/grpo-epoch" + std::to_string(epoch) + ".ckpt");
  }

  result.best_epoch = best_epoch;
  result.best_val_reward = best_val;
  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir + "/grpo-epoch" + std::to_string(cfg.epochs) + ".ckpt";
    save_checkpoint(policy, result.final_checkpoint);
    result.best_checkpoint = out_dir + "/grpo-best.ckpt";
    save_checkpoint(best, result.best_checkpoint);
  }
  return result;
}

}  // namespace apirec
