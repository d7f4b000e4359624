#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "apirec/vocab.hpp"

// The autoregressive policy: a compact decoder-only transformer (pre-norm,
// learned or rotary positions) with hand-written backward passes, LoRA adapter
// injection, generation, and per-token log-probability queries. float is the
// production instantiation; double runs the scalar reference kernels and backs
// the finite-difference gradient checks.

namespace apirec {

enum class Positional { Learned, Rotary };

struct BackboneConfig {
  int layers = 2;
  int heads = 4;
  int hidden_dim = 128;
  int context_length = 512;
  Positional positional = Positional::Learned;
  bool tie_embeddings = true;  // logits project through wte when set
  int vocab_size = 0;  // filled from the TokenSpace at build time
  std::string vocab_digest;

  void validate() const;  // throws std::invalid_argument
  std::string to_json() const;
  static BackboneConfig from_json(const std::string& text);
};

struct LoraConfig {
  int rank = 8;
  double scale = 0.0;  // <= 0 means the 2/rank default
  std::set<std::string> target_sites = {"attn.q", "attn.v"};

  double effective_scale() const { return scale > 0 ? scale : 2.0 / rank; }
};

enum class TrainScope { Full, LoraOnly };

enum class DecodeMode { Greedy, Sample };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;
  int max_new_tokens = 96;
  std::set<int> stop_ids;

  // stop_ids always contains REASON_stop and end-of-sequence.
  void ensure_stops(const TokenSpace& space);
};

template <typename T>
struct LayerParams {
  std::vector<T> ln1_w, ln1_b;
  std::vector<T> wq, bq, wk, bk, wv, bv, wo, bo;  // each w is [C, C]
  std::vector<T> ln2_w, ln2_b;
  std::vector<T> w_fc, b_fc, w_proj, b_proj;  // w_fc [4C, C], w_proj [C, 4C]
};

template <typename T>
struct Params {
  std::vector<T> wte;  // [V, C]
  std::vector<T> wpe;  // [Tmax, C]; empty under rotary positions
  std::vector<LayerParams<T>> layers;
  std::vector<T> lnf_w, lnf_b;
  std::vector<T> w_head;  // [V, C]; empty when embeddings are tied
};

template <typename T>
struct LoraSite {
  int layer = 0;
  std::string site;  // attn.q | attn.k | attn.v | attn.out | mlp.fc | mlp.proj
  int rows = 0, cols = 0, rank = 0;
  T scale = T(1);
  std::vector<T> a;  // [rank, cols], small gaussian init
  std::vector<T> b;  // [rows, rank], zero init
};

namespace detail {

template <typename ParamsLike, typename Fn>
void visit_base_params(ParamsLike& p, Fn&& fn) {
  fn("wte", p.wte);
  fn("wpe", p.wpe);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    auto& lp = p.layers[l];
    std::string pre = "blk" + std::to_string(l) + ".";
    fn(pre + "ln1_w", lp.ln1_w);
    fn(pre + "ln1_b", lp.ln1_b);
    fn(pre + "attn.q.w", lp.wq);
    fn(pre + "attn.q.b", lp.bq);
    fn(pre + "attn.k.w", lp.wk);
    fn(pre + "attn.k.b", lp.bk);
    fn(pre + "attn.v.w", lp.wv);
    fn(pre + "attn.v.b", lp.bv);
    fn(pre + "attn.out.w", lp.wo);
    fn(pre + "attn.out.b", lp.bo);
    fn(pre + "ln2_w", lp.ln2_w);
    fn(pre + "ln2_b", lp.ln2_b);
    fn(pre + "mlp.fc.w", lp.w_fc);
    fn(pre + "mlp.fc.b", lp.b_fc);
    fn(pre + "mlp.proj.w", lp.w_proj);
    fn(pre + "mlp.proj.b", lp.b_proj);
  }
  fn("lnf_w", p.lnf_w);
  fn("lnf_b", p.lnf_b);
  fn("w_head", p.w_head);
}

}  // namespace detail

template <typename T>
struct Backbone {
  BackboneConfig cfg;
  Params<T> params;
  std::vector<LoraSite<T>> lora;
  std::optional<LoraConfig> lora_cfg;
  TrainScope scope = TrainScope::Full;

  int head_dim() const { return cfg.hidden_dim / cfg.heads; }

  // fn(name, vector<T>&, is_lora); lora tensors come after base, in site order.
  template <typename Fn>
  void visit_tensors(Fn&& fn) {
    detail::visit_base_params(params,
                              [&](const std::string& n, std::vector<T>& v) { fn(n, v, false); });
    for (auto& s : lora) {
      std::string pre = "blk" + std::to_string(s.layer) + "." + s.site;
      fn(pre + ".lora_a", s.a, true);
      fn(pre + ".lora_b", s.b, true);
    }
  }
  template <typename Fn>
  void visit_tensors(Fn&& fn) const {
    detail::visit_base_params(params, [&](const std::string& n, const std::vector<T>& v) {
      fn(n, v, false);
    });
    for (const auto& s : lora) {
      std::string pre = "blk" + std::to_string(s.layer) + "." + s.site;
      fn(pre + ".lora_a", s.a, true);
      fn(pre + ".lora_b", s.b, true);
    }
  }
};

template <typename T>
struct GradBuffers {
  Params<T> base;
  std::vector<std::vector<T>> lora_a, lora_b;  // aligned with Backbone::lora
  void zero() {
    detail::visit_base_params(base, [](const std::string&, std::vector<T>& v) {
      std::fill(v.begin(), v.end(), T(0));
    });
    for (auto& v : lora_a) std::fill(v.begin(), v.end(), T(0));
    for (auto& v : lora_b) std::fill(v.begin(), v.end(), T(0));
  }
};

// fn(name, const grad vector&) in the same order visit_tensors uses.
template <typename T, typename Fn>
void visit_grad_buffers(const Backbone<T>& bb, const GradBuffers<T>& grads, Fn&& fn) {
  detail::visit_base_params(const_cast<Params<T>&>(grads.base),
                            [&](const std::string& n, std::vector<T>& v) {
                              fn(n, static_cast<const std::vector<T>&>(v));
                            });
  for (size_t s = 0; s < bb.lora.size(); ++s) {
    std::string pre = "blk" + std::to_string(bb.lora[s].layer) + "." + bb.lora[s].site;
    fn(pre + ".lora_a", grads.lora_a[s]);
    fn(pre + ".lora_b", grads.lora_b[s]);
  }
}

// Activation record of the last full forward pass, reused across calls.
template <typename T>
struct LayerActs {
  std::vector<T> ln1_out, ln1_mean, ln1_rstd;
  std::vector<T> q, k, v;  // [n, C], post-rotary
  std::vector<T> att;      // [H, n, n], zero above the diagonal
  std::vector<T> atty;     // [n, C]
  std::vector<T> res1;     // [n, C]
  std::vector<T> ln2_out, ln2_mean, ln2_rstd;
  std::vector<T> fc_pre, fc_gelu;  // [n, 4C]
  std::vector<T> res2;             // [n, C]
};

template <typename T>
struct Workspace {
  int n = 0;
  std::vector<int> ids;
  std::vector<T> emb;
  std::vector<LayerActs<T>> layers;
  std::vector<T> lnf_out, lnf_mean, lnf_rstd;
  std::vector<T> logits;                 // [n, V]
  std::vector<std::vector<T>> lora_mid;  // per site, [n, rank]

  // scratch
  std::vector<T> buf_tc1, buf_tc2, buf_tc3;
  std::vector<T> dq, dk, dv;
  std::vector<T> qh, kh, vh, yh, dyh, dqh, dkh, dvh;
  std::vector<T> scores, datt;
  std::vector<T> buf_tf1, buf_tf2;
  std::vector<T> lora_buf, lora_dmid;
  std::vector<T> dlogits;
};

struct GenerateResult {
  std::vector<int> completion;  // includes the stop token when one fired
  bool truncated = false;       // max_new_tokens or context exhausted before a stop id
};

// Randomly initialized backbone (embeddings N(0, 0.02), residual output
// projections scaled by 1/sqrt(2*layers)); deterministic for a fixed seed.
template <typename T>
Backbone<T> make_backbone(const BackboneConfig& cfg, const TokenSpace& space, uint64_t seed);

// Re-initializes every extended token embedding (API tokens and delimiters)
// with the mean of the base-token embeddings of its surface name.
template <typename T>
void mean_init_extended_embeddings(Backbone<T>& bb, const Codec& codec);

// Full-sequence forward; returns the [n, V] logits buffer held by ws (row t
// scores the token at position t+1). Throws on overlong input.
template <typename T>
const T* forward_logits(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws);

// Backward from d(objective)/d(logits), accumulating into grads. Requires the
// activations of a forward_logits call on the same ids. Base-weight gradients
// are skipped under lora_only scope.
template <typename T>
void backward_from_dlogits(const Backbone<T>& bb, std::span<const int> ids,
                           const std::vector<T>& dlogits, Workspace<T>& ws,
                           GradBuffers<T>& grads);

// Mean negative log-likelihood over the ids[1..] transitions.
template <typename T>
double ce_loss(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws);

// Forward + backward in one call; dlogits scaled by loss_scale / (n-1).
template <typename T>
double ce_loss_and_grad(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws,
                        GradBuffers<T>& grads, double loss_scale = 1.0);

// Log-probability of each completion token given prompt ++ completion[:t].
template <typename T>
std::vector<double> sequence_logprobs(const Backbone<T>& bb, std::span<const int> prompt,
                                      std::span<const int> completion, Workspace<T>& ws);

// Incremental decoding with a KV cache. Greedy mode is deterministic; sampling
// draws from the temperature-scaled distribution using the caller's stream.
template <typename T>
GenerateResult generate(const Backbone<T>& bb, std::span<const int> prompt,
                        const DecodeConfig& cfg, std::mt19937_64& rng);

// Adds zero-initialized low-rank adapters at the configured sites; the adapted
// forward equals the base forward exactly until the first update.
template <typename T>
void inject_lora(Backbone<T>& bb, const LoraConfig& cfg, uint64_t seed);

template <typename T>
void set_trainable_scope(Backbone<T>& bb, TrainScope scope);

template <typename T>
size_t trainable_parameter_count(const Backbone<T>& bb);

template <typename T>
std::string param_digest(const Backbone<T>& bb);

template <typename T>
GradBuffers<T> make_grad_buffers(const Backbone<T>& bb);

using Policy = Backbone<float>;
using PolicySnapshot = std::shared_ptr<const Policy>;

PolicySnapshot snapshot(const Policy& policy);

template <typename T>
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
  int64_t step_count = 0;
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;

  // One update at learning rate lr to every tensor trainable under the
  // policy's current scope; all other tensors are untouched.
  void step(Backbone<T>& bb, const GradBuffers<T>& grads, double lr);
};

// Checkpoints: JSON header (config, vocab digest, tensor table, LoRA state)
// followed by raw float32 data. Loading refuses a vocabulary digest mismatch.
void save_checkpoint(const Policy& policy, const std::string& path);
Policy load_checkpoint(const std::string& path, const TokenSpace& space);

extern template struct Backbone<float>;
extern template struct Backbone<double>;

}  // namespace apirec
