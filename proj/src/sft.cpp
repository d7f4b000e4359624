#include "apirec/sft.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <regex>
#include <unordered_map>

#include "apirec/util.hpp"

namespace apirec {

std::string template_prefix(const std::string& requirement, const TemplateSpec& tmpl) {
  std::string p = "API Recommendation Task\n";
  p += tmpl.include_reasons
           ? "Recommend APIs for the mashup according to its description and give the reason "
             "for each recommendation.\n"
           : "Recommend APIs for the mashup according to its description.\n";
  p += "Mashup Description: " + requirement + "\n";
  p += "Recommended APIs: ";
  return p;
}

std::string render_example_text(const std::string& requirement,
                                const std::vector<std::string>& apis,
                                const std::string& rationale, const TemplateSpec& tmpl) {
  std::string text = template_prefix(requirement, tmpl);
  if (tmpl.special_tokens) {
    text += "<API_start>";
    for (const auto& api : apis) text += "<API_" + api + ">";
    text += "<API_stop>";
  } else {
    for (size_t i = 0; i < apis.size(); ++i) {
      if (i) text += ", ";
      text += "<API_" + apis[i] + ">";
    }
  }
  if (tmpl.include_reasons) {
    text += "\nReason: ";
    if (tmpl.special_tokens)
      text += "<REASON_start>" + rationale + "<REASON_stop>";
    else
      text += rationale;
  }
  return text;
}

namespace {

void check_rationale_tokens(const std::string& rationale, const TokenSpace& space) {
  static const std::regex api_surface(R"(<API_([A-Za-z0-9._-]+)>)");
  auto begin = std::sregex_iterator(rationale.begin(), rationale.end(), api_surface);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    std::string name = (*it)[1].str();
    if (name == "start" || name == "stop") continue;  // delimiter surfaces
    if (!space.api_token.count(name))
      throw DataError("rationale references an API token not in the repository: " + name);
  }
}

SectionOffsets locate_sections(const std::vector<int>& ids, const TokenSpace& space) {
  int counts[4] = {0, 0, 0, 0};
  SectionOffsets off;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (!space.is_delimiter(ids[i])) continue;
    int d = ids[i] - space.base_vocab_size;
    ++counts[d];
    switch (static_cast<Delimiter>(d)) {
      case Delimiter::ApiStart: off.api_start = i; break;
      case Delimiter::ApiStop: off.api_stop = i; break;
      case Delimiter::ReasonStart: off.reason_start = i; break;
      case Delimiter::ReasonStop: off.reason_stop = i; break;
    }
  }
  for (int d = 0; d < 4; ++d)
    if (counts[d] != 1)
      throw DataError(std::string("rendered sequence must contain ") +
                      delimiter_surface(static_cast<Delimiter>(d)) + " exactly once, found " +
                      std::to_string(counts[d]));
  if (!(off.api_start < off.api_stop && off.api_stop < off.reason_start &&
        off.reason_start < off.reason_stop))
    throw DataError("rendered sequence delimiters out of order");
  for (size_t i = off.api_start + 1; i < off.api_stop; ++i)
    if (!space.is_api_token(ids[i]))
      throw DataError("non-API token inside the API span at position " + std::to_string(i));
  return off;
}

}  // namespace

TrainingSequence render_example(const Mashup& mashup, const std::vector<std::string>& apis,
                                const std::string& rationale, const Codec& codec,
                                const TemplateSpec& tmpl, size_t max_len) {
  if (apis.empty()) throw DataError("render_example: api list must be non-empty");
  if (util::trim(mashup.requirement).empty())
    throw DataError("render_example: mashup requirement is empty");
  if (tmpl.include_reasons) check_rationale_tokens(rationale, codec.space());
  for (const auto& api : apis)
    codec.space().token_of(api);  // throws on unknown api

  TrainingSequence seq;
  seq.mashup_id = mashup.mashup_id;
  std::string text = render_example_text(mashup.requirement, apis, rationale, tmpl);
  seq.ids = codec.encode(text, /*add_bos=*/true, /*add_eos=*/true);
  if (seq.ids.size() > max_len)
    throw DataError("rendered sequence for '" + mashup.mashup_id + "' has " +
                    std::to_string(seq.ids.size()) + " tokens, limit is " +
                    std::to_string(max_len));
  if (tmpl.special_tokens && tmpl.include_reasons)
    seq.offsets = locate_sections(seq.ids, codec.space());
  return seq;
}

void SftConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("sft: learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("sft: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("sft: batch_size must be >= 1");
  if (max_sequence_length < 2) throw std::invalid_argument("sft: max_sequence_length too small");
}

double cross_entropy_loss(const Policy& policy, const TrainingSequence& seq,
                          Workspace<float>& ws) {
  return ce_loss(policy, std::span<const int>(seq.ids), ws);
}

// Scales gradients so their global L2 norm stays below max_norm.
static void clip_grad_norm(Policy& policy, GradBuffers<float>& grads, double max_norm) {
  double sq = 0;
  visit_grad_buffers(policy, grads, [&](const std::string&, const std::vector<float>& g) {
    for (float x : g) sq += double(x) * double(x);
  });
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0) return;
  float scale = static_cast<float>(max_norm / norm);
  auto shrink = [&](std::vector<float>& g) {
    for (float& x : g) x *= scale;
  };
  detail::visit_base_params(grads.base, [&](const std::string&, std::vector<float>& g) {
    shrink(g);
  });
  for (auto& g : grads.lora_a) shrink(g);
  for (auto& g : grads.lora_b) shrink(g);
}

SftResult train_sft(Policy& policy, const std::vector<TrainingSequence>& train,
                    const std::vector<TrainingSequence>& val, const SftConfig& cfg,
                    const std::string& out_dir) {
  cfg.validate();
  if (train.empty()) throw DataError("train_sft: no training sequences");
  for (const auto& s : train)
    if (static_cast<int>(s.ids.size()) > policy.cfg.context_length)
      throw DataError("train_sft: sequence for '" + s.mashup_id + "' (" +
                      std::to_string(s.ids.size()) + " tokens) exceeds context_length " +
                      std::to_string(policy.cfg.context_length));

  SftResult result;
  Workspace<float> ws;
  GradBuffers<float> grads = make_grad_buffers(policy);
  AdamW<float> opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.adam_eps;
  opt.weight_decay = cfg.weight_decay;

  const size_t batches_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch) * cfg.epochs;
  const double warmup_steps = std::max(1.0, cfg.warmup_fraction * total_steps);
  auto lr_at = [&](long step) {
    if (step <= warmup_steps) return cfg.learning_rate * step / warmup_steps;
    if (cfg.schedule == LrSchedule::Constant) return cfg.learning_rate;
    double progress = (step - warmup_steps) / std::max(1.0, total_steps - warmup_steps);
    double floor = cfg.min_lr_fraction * cfg.learning_rate;
    return floor + (cfg.learning_rate - floor) * 0.5 * (1.0 + std::cos(M_PI * progress));
  };

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  Policy last_finite = policy;
  Policy best;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  long step = 0;

  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    util::seeded_shuffle(order, shuffle_rng);
    double train_loss_sum = 0;
    for (size_t b = 0; b < batches_per_epoch; ++b) {
      size_t lo = b * cfg.batch_size;
      size_t hi = std::min(lo + cfg.batch_size, train.size());
      grads.zero();
      for (size_t i = lo; i < hi; ++i) {
        const auto& seq = train[order[i]];
        double loss = ce_loss_and_grad(policy, std::span<const int>(seq.ids), ws, grads,
                                       1.0 / static_cast<double>(hi - lo));
        if (!std::isfinite(loss)) {
          if (!out_dir.empty()) save_checkpoint(last_finite, out_dir + "/sft-abort.ckpt");
          policy = last_finite;
          throw TrainingDivergence("sft: non-finite loss at epoch " + std::to_string(epoch) +
                                   "; last finite state saved as sft-abort");
        }
        train_loss_sum += loss;
      }
      ++step;
      if (cfg.grad_clip > 0) clip_grad_norm(policy, grads, cfg.grad_clip);
      opt.step(policy, grads, lr_at(step));
    }
    double train_loss = train_loss_sum / static_cast<double>(train.size());

    double val_loss = train_loss;
    if (!val.empty()) {
      double sum = 0;
      for (const auto& seq : val) sum += ce_loss(policy, std::span<const int>(seq.ids), ws);
      val_loss = sum / static_cast<double>(val.size());
    }
    if (!std::isfinite(val_loss)) {
      if (!out_dir.empty()) save_checkpoint(last_finite, out_dir + "/sft-abort.ckpt");
      policy = last_finite;
      throw TrainingDivergence("sft: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    }
    last_finite = policy;

    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d train_loss %.6f val_loss %.6f secs %.1f", epoch,
                  train_loss, val_loss, secs);
    result.log_lines.emplace_back(line);
    result.final_train_loss = train_loss;

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best = policy;
    }
    if (!out_dir.empty() && cfg.save_every > 0 && epoch % cfg.save_every == 0 &&
        epoch != cfg.epochs)
      save_checkpoint(policy, out_dir + "/sft-epoch" + std::to_string(epoch) + ".ckpt");
  }

  result.best_epoch = best_epoch;
  result.best_val_loss = best_val;
  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir + "/sft-epoch" + std::to_string(cfg.epochs) + ".ckpt";
    save_checkpoint(policy, result.final_checkpoint);
    result.best_checkpoint = out_dir + "/sft-best.ckpt";
    save_checkpoint(best, result.best_checkpoint);
  }
  return result;
}

RenderedCorpus render_corpus(const std::vector<Mashup>& mashups,
                             const std::vector<AnnotationLookup>& annotations, const Codec& codec,
                             const TemplateSpec& tmpl, size_t max_len) {
  std::unordered_map<std::string, const AnnotationLookup*> by_id;
  for (const auto& a : annotations) by_id[a.mashup_id] = &a;

  RenderedCorpus out;
  for (const auto& m : mashups) {
    std::string rationale;
    if (tmpl.include_reasons) {
      auto it = by_id.find(m.mashup_id);
      if (it == by_id.end()) {
        out.dropped.push_back(m.mashup_id + ": no annotation");
        continue;
      }
      if (!it->second->valid) {
        out.dropped.push_back(m.mashup_id + ": annotation failed target coverage");
        continue;
      }
      rationale = it->second->rationale;
    }
    try {
      out.sequences.push_back(render_example(m, m.invoked_apis, rationale, codec, tmpl, max_len));
    } catch (const DataError& e) {
      out.dropped.push_back(m.mashup_id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace apirec
