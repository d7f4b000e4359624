#include "apirec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "apirec/kernels.hpp"
#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

void BackboneConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("backbone: layers must be >= 1");
  if (heads < 1) throw std::invalid_argument("backbone: heads must be >= 1");
  if (hidden_dim % heads != 0)
    throw std::invalid_argument("backbone: hidden_dim must be divisible by heads");
  if (context_length < 2) throw std::invalid_argument("backbone: context_length must be >= 2");
  if (vocab_size < 2) throw std::invalid_argument("backbone: vocab_size must be >= 2");
}

std::string BackboneConfig::to_json() const {
  json j;
  j["layers"] = layers;
  j["heads"] = heads;
  j["hidden_dim"] = hidden_dim;
  j["context_length"] = context_length;
  j["positional"] = positional == Positional::Learned ? "learned" : "rotary";
  j["tie_embeddings"] = tie_embeddings;
  j["vocab_size"] = vocab_size;
  j["vocab_digest"] = vocab_digest;
  return j.dump();
}

BackboneConfig BackboneConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  BackboneConfig cfg;
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.context_length = j.at("context_length").get<int>();
  std::string pos = j.value("positional", "learned");
  cfg.positional = pos == "rotary" ? Positional::Rotary : Positional::Learned;
  cfg.tie_embeddings = j.value("tie_embeddings", true);
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.vocab_digest = j.value("vocab_digest", "");
  return cfg;
}

void DecodeConfig::ensure_stops(const TokenSpace& space) {
  stop_ids.insert(space.delimiter(Delimiter::ReasonStop));
  stop_ids.insert(space.eos_id);
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; engine-exact given mt19937_64, unlike std::normal_distribution.
double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  while (u1 <= 1e-300) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void fill_gaussian(std::vector<T>& v, std::mt19937_64& rng, double sigma) {
  for (auto& x : v) x = static_cast<T>(gaussian(rng) * sigma);
}

template <typename T>
void resize_workspace(const Backbone<T>& bb, Workspace<T>& ws, int n) {
  const int C = bb.cfg.hidden_dim, H = bb.cfg.heads, hs = C / H, F = 4 * C, V = bb.cfg.vocab_size;
  auto rs = [](std::vector<T>& v, size_t sz) {
    if (v.size() < sz) v.resize(sz);
  };
  rs(ws.emb, size_t(n) * C);
  ws.layers.resize(bb.cfg.layers);
  for (auto& a : ws.layers) {
    rs(a.ln1_out, size_t(n) * C);
    rs(a.ln1_mean, n);
    rs(a.ln1_rstd, n);
    rs(a.q, size_t(n) * C);
    rs(a.k, size_t(n) * C);
    rs(a.v, size_t(n) * C);
    rs(a.att, size_t(H) * n * n);
    rs(a.atty, size_t(n) * C);
    rs(a.res1, size_t(n) * C);
    rs(a.ln2_out, size_t(n) * C);
    rs(a.ln2_mean, n);
    rs(a.ln2_rstd, n);
    rs(a.fc_pre, size_t(n) * F);
    rs(a.fc_gelu, size_t(n) * F);
    rs(a.res2, size_t(n) * C);
  }
  rs(ws.lnf_out, size_t(n) * C);
  rs(ws.lnf_mean, n);
  rs(ws.lnf_rstd, n);
  rs(ws.logits, size_t(n) * V);
  ws.lora_mid.resize(bb.lora.size());
  for (size_t s = 0; s < bb.lora.size(); ++s) rs(ws.lora_mid[s], size_t(n) * bb.lora[s].rank);
  rs(ws.buf_tc1, size_t(n) * C);
  rs(ws.buf_tc2, size_t(n) * C);
  rs(ws.buf_tc3, size_t(n) * C);
  rs(ws.dq, size_t(n) * C);
  rs(ws.dk, size_t(n) * C);
  rs(ws.dv, size_t(n) * C);
  rs(ws.qh, size_t(n) * hs);
  rs(ws.kh, size_t(n) * hs);
  rs(ws.vh, size_t(n) * hs);
  rs(ws.yh, size_t(n) * hs);
  rs(ws.dyh, size_t(n) * hs);
  rs(ws.dqh, size_t(n) * hs);
  rs(ws.dkh, size_t(n) * hs);
  rs(ws.dvh, size_t(n) * hs);
  rs(ws.scores, size_t(n) * n);
  rs(ws.datt, size_t(n) * n);
  rs(ws.buf_tf1, size_t(n) * F);
  rs(ws.buf_tf2, size_t(n) * F);
  int max_rank = 1;
  for (const auto& s : bb.lora) max_rank = std::max(max_rank, s.rank);
  rs(ws.lora_buf, size_t(n) * F);
  rs(ws.lora_dmid, size_t(n) * max_rank);
}

template <typename T>
const LoraSite<T>* find_site(const Backbone<T>& bb, int layer, const char* name) {
  for (const auto& s : bb.lora)
    if (s.layer == layer && s.site == name) return &s;
  return nullptr;
}

template <typename T>
size_t site_index(const Backbone<T>& bb, const LoraSite<T>* site) {
  return static_cast<size_t>(site - bb.lora.data());
}

// out[n, rows] += scale * (x * A^T) * B^T; keeps the mid activation for
// backward.
template <typename T>
void lora_forward(const Backbone<T>& bb, const LoraSite<T>* site, Workspace<T>& ws, const T* x,
                  T* out, int n) {
  if (!site) return;
  std::vector<T>& mid = ws.lora_mid[site_index(bb, site)];
  kern::matmul_nt(mid.data(), x, site->a.data(), static_cast<const T*>(nullptr), n, site->rank,
                  site->cols);
  kern::matmul_nt(ws.lora_buf.data(), mid.data(), site->b.data(), static_cast<const T*>(nullptr),
                  n, site->rows, site->rank);
  kern::axpy(out, site->scale, ws.lora_buf.data(), n * site->rows);
}

// Backward through one adapted projection: dout [n, rows], x [n, cols];
// accumulates dA/dB and adds the adapter's input gradient into dx [n, cols].
template <typename T>
void lora_backward(const Backbone<T>& bb, const LoraSite<T>* site, Workspace<T>& ws,
                   GradBuffers<T>& g, const T* dout, const T* x, T* dx, int n) {
  if (!site) return;
  size_t idx = site_index(bb, site);
  const std::vector<T>& mid = ws.lora_mid[idx];
  T* dmid = ws.lora_dmid.data();
  kern::matmul_nn(dmid, dout, site->b.data(), n, site->rank, site->rows, false);
  for (int i = 0; i < n * site->rank; ++i) dmid[i] *= site->scale;
  T* smid = ws.lora_buf.data();
  for (int i = 0; i < n * site->rank; ++i) smid[i] = mid[i] * site->scale;
  kern::matmul_tn_acc(g.lora_b[idx].data(), dout, smid, n, site->rows, site->rank);
  kern::matmul_tn_acc(g.lora_a[idx].data(), dmid, x, n, site->rank, site->cols);
  kern::matmul_nn(dx, dmid, site->a.data(), n, site->cols, site->rank, true);
}

template <typename T>
void rope_rotate(T* qk, int n, int heads, int hs, int pos0, bool inverse) {
  const int C = heads * hs;
  for (int t = 0; t < n; ++t) {
    double pos = pos0 + t;
    for (int h = 0; h < heads; ++h) {
      T* row = qk + size_t(t) * C + size_t(h) * hs;
      for (int i = 0; i + 1 < hs; i += 2) {
        double theta = pos * std::pow(10000.0, -double(i) / hs);
        T c = static_cast<T>(std::cos(theta));
        T s = static_cast<T>(std::sin(theta));
        if (inverse) s = -s;
        T x0 = row[i], x1 = row[i + 1];
        row[i] = x0 * c - x1 * s;
        row[i + 1] = x0 * s + x1 * c;
      }
    }
  }
}

template <typename T>
void gather_head(T* dst, const T* src, int n, int C, int h, int hs) {
  for (int t = 0; t < n; ++t)
    std::memcpy(dst + size_t(t) * hs, src + size_t(t) * C + size_t(h) * hs, sizeof(T) * hs);
}

template <typename T>
void scatter_head(T* dst, const T* src, int n, int C, int h, int hs) {
  for (int t = 0; t < n; ++t)
    std::memcpy(dst + size_t(t) * C + size_t(h) * hs, src + size_t(t) * hs, sizeof(T) * hs);
}

}  // namespace

template <typename T>
Backbone<T> make_backbone(const BackboneConfig& cfg_in, const TokenSpace& space, uint64_t seed) {
  BackboneConfig cfg = cfg_in;
  cfg.vocab_size = space.total_size();
  cfg.vocab_digest = space.digest();
  cfg.validate();

  Backbone<T> bb;
  bb.cfg = cfg;
  const int C = cfg.hidden_dim, V = cfg.vocab_size, F = 4 * C;
  std::mt19937_64 rng(seed);
  const double sigma = 0.02;
  const double proj_sigma = sigma / std::sqrt(2.0 * cfg.layers);

  auto& p = bb.params;
  p.wte.resize(size_t(V) * C);
  fill_gaussian(p.wte, rng, sigma);
  if (cfg.positional == Positional::Learned) {
    p.wpe.resize(size_t(cfg.context_length) * C);
    fill_gaussian(p.wpe, rng, sigma);
  }
  p.layers.resize(cfg.layers);
  for (auto& lp : p.layers) {
    lp.ln1_w.assign(C, T(1));
    lp.ln1_b.assign(C, T(0));
    lp.wq.resize(size_t(C) * C);
    fill_gaussian(lp.wq, rng, sigma);
    lp.bq.assign(C, T(0));
    lp.wk.resize(size_t(C) * C);
    fill_gaussian(lp.wk, rng, sigma);
    lp.bk.assign(C, T(0));
    lp.wv.resize(size_t(C) * C);
    fill_gaussian(lp.wv, rng, sigma);
    lp.bv.assign(C, T(0));
    lp.wo.resize(size_t(C) * C);
    fill_gaussian(lp.wo, rng, proj_sigma);
    lp.bo.assign(C, T(0));
    lp.ln2_w.assign(C, T(1));
    lp.ln2_b.assign(C, T(0));
    lp.w_fc.resize(size_t(F) * C);
    fill_gaussian(lp.w_fc, rng, sigma);
    lp.b_fc.assign(F, T(0));
    lp.w_proj.resize(size_t(C) * F);
    fill_gaussian(lp.w_proj, rng, proj_sigma);
    lp.b_proj.assign(C, T(0));
  }
  p.lnf_w.assign(C, T(1));
  p.lnf_b.assign(C, T(0));
  if (!cfg.tie_embeddings) {
    p.w_head.resize(size_t(V) * C);
    fill_gaussian(p.w_head, rng, sigma);
  }
  return bb;
}

template <typename T>
void mean_init_extended_embeddings(Backbone<T>& bb, const Codec& codec) {
  const TokenSpace& space = codec.space();
  const int C = bb.cfg.hidden_dim;
  // A new token starts as the mean of its surface name's base-token rows, on
  // the input side and (untied) output side alike, so an extended token's
  // initial logit is the mean of its constituent byte logits.
  auto assign_mean = [&](std::vector<T>& table, int token_id, const std::string& name) {
    std::vector<int> parts = codec.base().encode(name);
    if (parts.empty() || table.empty()) return;
    std::vector<double> acc(C, 0.0);
    for (int id : parts)
      for (int j = 0; j < C; ++j) acc[j] += static_cast<double>(table[size_t(id) * C + j]);
    for (int j = 0; j < C; ++j)
      table[size_t(token_id) * C + j] = static_cast<T>(acc[j] / parts.size());
  };
  auto assign_both = [&](int token_id, const std::string& name) {
    assign_mean(bb.params.wte, token_id, name);
    if (!bb.cfg.tie_embeddings) assign_mean(bb.params.w_head, token_id, name);
  };
  for (int d = 0; d < 4; ++d) {
    std::string surface = delimiter_surface(static_cast<Delimiter>(d));
    assign_both(space.delimiter_ids[d], surface.substr(1, surface.size() - 2));
  }
  for (const auto& [api_id, tok] : space.api_token) assign_both(tok, api_id);
}

template <typename T>
const T* forward_logits(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws) {
  const auto& cfg = bb.cfg;
  const int n = static_cast<int>(ids.size());
  if (n < 1) throw std::invalid_argument("forward: empty input");
  if (n > cfg.context_length)
    throw std::invalid_argument("forward: sequence length " + std::to_string(n) +
                                " exceeds context_length " + std::to_string(cfg.context_length));
  const int C = cfg.hidden_dim, H = cfg.heads, hs = C / H, F = 4 * C, V = cfg.vocab_size;
  const T inv_sqrt_hs = static_cast<T>(1.0 / std::sqrt(double(hs)));
  resize_workspace(bb, ws, n);
  ws.n = n;
  ws.ids.assign(ids.begin(), ids.end());

  for (int t = 0; t < n; ++t) {
    int id = ids[t];
    if (id < 0 || id >= V)
      throw std::invalid_argument("forward: token id out of range: " + std::to_string(id));
    const T* row = bb.params.wte.data() + size_t(id) * C;
    T* x = ws.emb.data() + size_t(t) * C;
    if (cfg.positional == Positional::Learned) {
      const T* pe = bb.params.wpe.data() + size_t(t) * C;
      for (int j = 0; j < C; ++j) x[j] = row[j] + pe[j];
    } else {
      std::memcpy(x, row, sizeof(T) * C);
    }
  }

  const T* xprev = ws.emb.data();
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& lp = bb.params.layers[l];
    auto& acts = ws.layers[l];
    kern::layernorm_fwd(acts.ln1_out.data(), acts.ln1_mean.data(), acts.ln1_rstd.data(), xprev,
                        lp.ln1_w.data(), lp.ln1_b.data(), n, C);
    kern::matmul_nt(acts.q.data(), acts.ln1_out.data(), lp.wq.data(), lp.bq.data(), n, C, C);
    lora_forward(bb, find_site(bb, l, "attn.q"), ws, acts.ln1_out.data(), acts.q.data(), n);
    kern::matmul_nt(acts.k.data(), acts.ln1_out.data(), lp.wk.data(), lp.bk.data(), n, C, C);
    lora_forward(bb, find_site(bb, l, "attn.k"), ws, acts.ln1_out.data(), acts.k.data(), n);
    kern::matmul_nt(acts.v.data(), acts.ln1_out.data(), lp.wv.data(), lp.bv.data(), n, C, C);
    lora_forward(bb, find_site(bb, l, "attn.v"), ws, acts.ln1_out.data(), acts.v.data(), n);
    if (cfg.positional == Positional::Rotary) {
      rope_rotate(acts.q.data(), n, H, hs, 0, false);
      rope_rotate(acts.k.data(), n, H, hs, 0, false);
    }

    for (int h = 0; h < H; ++h) {
      gather_head(ws.qh.data(), acts.q.data(), n, C, h, hs);
      gather_head(ws.kh.data(), acts.k.data(), n, C, h, hs);
      gather_head(ws.vh.data(), acts.v.data(), n, C, h, hs);
      kern::matmul_nt(ws.scores.data(), ws.qh.data(), ws.kh.data(),
                      static_cast<const T*>(nullptr), n, n, hs);
      T* att = acts.att.data() + size_t(h) * n * n;
      for (int t = 0; t < n; ++t) {
        T* srow = ws.scores.data() + size_t(t) * n;
        for (int j = 0; j <= t; ++j) srow[j] *= inv_sqrt_hs;
        T* arow = att + size_t(t) * n;
        kern::softmax_fwd(arow, srow, t + 1);
        std::fill(arow + t + 1, arow + n, T(0));
      }
      kern::matmul_nn(ws.yh.data(), att, ws.vh.data(), n, hs, n, false);
      scatter_head(acts.atty.data(), ws.yh.data(), n, C, h, hs);
    }

    T* attnout = ws.buf_tc1.data();
    kern::matmul_nt(attnout, acts.atty.data(), lp.wo.data(), lp.bo.data(), n, C, C);
    lora_forward(bb, find_site(bb, l, "attn.out"), ws, acts.atty.data(), attnout, n);
    for (int i = 0; i < n * C; ++i) acts.res1[i] = xprev[i] + attnout[i];

    kern::layernorm_fwd(acts.ln2_out.data(), acts.ln2_mean.data(), acts.ln2_rstd.data(),
                        acts.res1.data(), lp.ln2_w.data(), lp.ln2_b.data(), n, C);
    kern::matmul_nt(acts.fc_pre.data(), acts.ln2_out.data(), lp.w_fc.data(), lp.b_fc.data(), n, F,
                    C);
    lora_forward(bb, find_site(bb, l, "mlp.fc"), ws, acts.ln2_out.data(), acts.fc_pre.data(), n);
    kern::gelu_fwd(acts.fc_gelu.data(), acts.fc_pre.data(), n * F);
    T* mlpout = ws.buf_tc1.data();
    kern::matmul_nt(mlpout, acts.fc_gelu.data(), lp.w_proj.data(), lp.b_proj.data(), n, C, F);
    lora_forward(bb, find_site(bb, l, "mlp.proj"), ws, acts.fc_gelu.data(), mlpout, n);
    for (int i = 0; i < n * C; ++i) acts.res2[i] = acts.res1[i] + mlpout[i];
    xprev = acts.res2.data();
  }

  kern::layernorm_fwd(ws.lnf_out.data(), ws.lnf_mean.data(), ws.lnf_rstd.data(), xprev,
                      bb.params.lnf_w.data(), bb.params.lnf_b.data(), n, C);
  const T* head = cfg.tie_embeddings ? bb.params.wte.data() : bb.params.w_head.data();
  kern::matmul_nt(ws.logits.data(), ws.lnf_out.data(), head, static_cast<const T*>(nullptr), n,
                  V, C);
  return ws.logits.data();
}

template <typename T>
void backward_from_dlogits(const Backbone<T>& bb, std::span<const int> ids,
                           const std::vector<T>& dlogits, Workspace<T>& ws,
                           GradBuffers<T>& grads) {
  const auto& cfg = bb.cfg;
  const int n = static_cast<int>(ids.size());
  if (ws.n != n || !std::equal(ids.begin(), ids.end(), ws.ids.begin()))
    throw std::logic_error("backward: workspace does not hold a forward pass for these ids");
  const int C = cfg.hidden_dim, H = cfg.heads, hs = C / H, F = 4 * C, V = cfg.vocab_size;
  const T inv_sqrt_hs = static_cast<T>(1.0 / std::sqrt(double(hs)));
  const bool acc_base = bb.scope == TrainScope::Full;

  T* dx = ws.buf_tc2.data();    // gradient flowing down the residual stream
  T* dtmp = ws.buf_tc3.data();

  const T* head = cfg.tie_embeddings ? bb.params.wte.data() : bb.params.w_head.data();
  T* dhead = cfg.tie_embeddings ? grads.base.wte.data() : grads.base.w_head.data();
  kern::matmul_nn(dx, dlogits.data(), head, n, C, V, false);
  if (acc_base) kern::matmul_tn_acc(dhead, dlogits.data(), ws.lnf_out.data(), n, V, C);

  const T* x_last = cfg.layers ? ws.layers[cfg.layers - 1].res2.data() : ws.emb.data();
  kern::layernorm_bwd(dtmp, grads.base.lnf_w.data(), grads.base.lnf_b.data(), dx, x_last,
                      ws.lnf_mean.data(), ws.lnf_rstd.data(), bb.params.lnf_w.data(), n, C);
  std::memcpy(dx, dtmp, sizeof(T) * size_t(n) * C);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& lp = bb.params.layers[l];
    auto& acts = ws.layers[l];
    auto& glp = grads.base.layers[l];
    const T* xin = (l == 0) ? ws.emb.data() : ws.layers[l - 1].res2.data();

    // mlp branch; dx holds the gradient at res2
    T* dg = ws.buf_tf1.data();
    kern::matmul_nn(dg, dx, lp.w_proj.data(), n, F, C, false);
    lora_backward(bb, find_site(bb, l, "mlp.proj"), ws, grads, dx, acts.fc_gelu.data(), dg, n);
    if (acc_base) {
      kern::matmul_tn_acc(glp.w_proj.data(), dx, acts.fc_gelu.data(), n, C, F);
      kern::bias_grad_acc(glp.b_proj.data(), dx, n, C);
    }
    T* df = ws.buf_tf2.data();
    std::fill(df, df + size_t(n) * F, T(0));
    kern::gelu_bwd(df, acts.fc_pre.data(), dg, n * F);
    T* da2 = ws.buf_tc1.data();
    kern::matmul_nn(da2, df, lp.w_fc.data(), n, C, F, false);
    lora_backward(bb, find_site(bb, l, "mlp.fc"), ws, grads, df, acts.ln2_out.data(), da2, n);
    if (acc_base) {
      kern::matmul_tn_acc(glp.w_fc.data(), df, acts.ln2_out.data(), n, F, C);
      kern::bias_grad_acc(glp.b_fc.data(), df, n, F);
    }
    kern::layernorm_bwd(dtmp, glp.ln2_w.data(), glp.ln2_b.data(), da2, acts.res1.data(),
                        acts.ln2_mean.data(), acts.ln2_rstd.data(), lp.ln2_w.data(), n, C);
    kern::add_inplace(dx, dtmp, n * C);  // dx now holds the gradient at res1

    // attention branch
    T* dy = ws.buf_tc1.data();
    kern::matmul_nn(dy, dx, lp.wo.data(), n, C, C, false);
    lora_backward(bb, find_site(bb, l, "attn.out"), ws, grads, dx, acts.atty.data(), dy, n);
    if (acc_base) {
      kern::matmul_tn_acc(glp.wo.data(), dx, acts.atty.data(), n, C, C);
      kern::bias_grad_acc(glp.bo.data(), dx, n, C);
    }

    for (int h = 0; h < H; ++h) {
      gather_head(ws.dyh.data(), dy, n, C, h, hs);
      gather_head(ws.qh.data(), acts.q.data(), n, C, h, hs);
      gather_head(ws.kh.data(), acts.k.data(), n, C, h, hs);
      gather_head(ws.vh.data(), acts.v.data(), n, C, h, hs);
      const T* att = acts.att.data() + size_t(h) * n * n;

      std::fill(ws.dvh.begin(), ws.dvh.begin() + size_t(n) * hs, T(0));
      kern::matmul_tn_acc(ws.dvh.data(), att, ws.dyh.data(), n, n, hs);
      kern::matmul_nt(ws.datt.data(), ws.dyh.data(), ws.vh.data(), static_cast<const T*>(nullptr),
                      n, n, hs);
      for (int t = 0; t < n; ++t) {
        const T* arow = att + size_t(t) * n;
        T* drow = ws.datt.data() + size_t(t) * n;
        kern::softmax_bwd(drow, arow, drow, t + 1);
        for (int j = 0; j <= t; ++j) drow[j] *= inv_sqrt_hs;
        std::fill(drow + t + 1, drow + n, T(0));
      }
      kern::matmul_nn(ws.dqh.data(), ws.datt.data(), ws.kh.data(), n, hs, n, false);
      std::fill(ws.dkh.begin(), ws.dkh.begin() + size_t(n) * hs, T(0));
      kern::matmul_tn_acc(ws.dkh.data(), ws.datt.data(), ws.qh.data(), n, n, hs);
      scatter_head(ws.dq.data(), ws.dqh.data(), n, C, h, hs);
      scatter_head(ws.dk.data(), ws.dkh.data(), n, C, h, hs);
      scatter_head(ws.dv.data(), ws.dvh.data(), n, C, h, hs);
    }
    if (cfg.positional == Positional::Rotary) {
      rope_rotate(ws.dq.data(), n, H, hs, 0, true);
      rope_rotate(ws.dk.data(), n, H, hs, 0, true);
    }

    T* da = ws.buf_tc1.data();
    kern::matmul_nn(da, ws.dq.data(), lp.wq.data(), n, C, C, false);
    kern::matmul_nn(da, ws.dk.data(), lp.wk.data(), n, C, C, true);
    kern::matmul_nn(da, ws.dv.data(), lp.wv.data(), n, C, C, true);
    lora_backward(bb, find_site(bb, l, "attn.q"), ws, grads, ws.dq.data(), acts.ln1_out.data(),
                  da, n);
    lora_backward(bb, find_site(bb, l, "attn.k"), ws, grads, ws.dk.data(), acts.ln1_out.data(),
                  da, n);
    lora_backward(bb, find_site(bb, l, "attn.v"), ws, grads, ws.dv.data(), acts.ln1_out.data(),
                  da, n);
    if (acc_base) {
      kern::matmul_tn_acc(glp.wq.data(), ws.dq.data(), acts.ln1_out.data(), n, C, C);
      kern::bias_grad_acc(glp.bq.data(), ws.dq.data(), n, C);
      kern::matmul_tn_acc(glp.wk.data(), ws.dk.data(), acts.ln1_out.data(), n, C, C);
      kern::bias_grad_acc(glp.bk.data(), ws.dk.data(), n, C);
      kern::matmul_tn_acc(glp.wv.data(), ws.dv.data(), acts.ln1_out.data(), n, C, C);
      kern::bias_grad_acc(glp.bv.data(), ws.dv.data(), n, C);
    }
    kern::layernorm_bwd(dtmp, glp.ln1_w.data(), glp.ln1_b.data(), da, xin, acts.ln1_mean.data(),
                        acts.ln1_rstd.data(), lp.ln1_w.data(), n, C);
    kern::add_inplace(dx, dtmp, n * C);  // gradient at the layer input
  }

  if (acc_base) {
    for (int t = 0; t < n; ++t) {
      const T* dxt = dx + size_t(t) * C;
      kern::axpy(grads.base.wte.data() + size_t(ids[t]) * C, T(1), dxt, C);
      if (cfg.positional == Positional::Learned)
        kern::axpy(grads.base.wpe.data() + size_t(t) * C, T(1), dxt, C);
    }
  }
}

template <typename T>
double ce_loss(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws) {
  const int n = static_cast<int>(ids.size());
  if (n < 2) throw std::invalid_argument("ce_loss: need at least 2 tokens");
  const int V = bb.cfg.vocab_size;
  const T* logits = forward_logits(bb, ids, ws);
  double total = 0.0;
  for (int t = 0; t < n - 1; ++t) {
    const T* row = logits + size_t(t) * V;
    double lse = kern::logsumexp(row, V);
    total += lse - static_cast<double>(row[ids[t + 1]]);
  }
  return total / (n - 1);
}

template <typename T>
double ce_loss_and_grad(const Backbone<T>& bb, std::span<const int> ids, Workspace<T>& ws,
                        GradBuffers<T>& grads, double loss_scale) {
  const int n = static_cast<int>(ids.size());
  if (n < 2) throw std::invalid_argument("ce_loss_and_grad: need at least 2 tokens");
  const int V = bb.cfg.vocab_size;
  const T* logits = forward_logits(bb, ids, ws);
  if (ws.dlogits.size() < size_t(n) * V) ws.dlogits.resize(size_t(n) * V);
  std::fill(ws.dlogits.begin(), ws.dlogits.begin() + size_t(n) * V, T(0));

  double total = 0.0;
  const T w = static_cast<T>(loss_scale / (n - 1));
  for (int t = 0; t < n - 1; ++t) {
    const T* row = logits + size_t(t) * V;
    T* drow = ws.dlogits.data() + size_t(t) * V;
    kern::softmax_fwd(drow, row, V);
    double lse = kern::logsumexp(row, V);
    total += lse - static_cast<double>(row[ids[t + 1]]);
    for (int j = 0; j < V; ++j) drow[j] *= w;
    drow[ids[t + 1]] -= w;
  }
  backward_from_dlogits(bb, ids, ws.dlogits, ws, grads);
  return total / (n - 1);
}

template <typename T>
std::vector<double> sequence_logprobs(const Backbone<T>& bb, std::span<const int> prompt,
                                      std::span<const int> completion, Workspace<T>& ws) {
  if (prompt.empty()) throw std::invalid_argument("sequence_logprobs: empty prompt");
  if (completion.empty()) return {};
  std::vector<int> ids(prompt.begin(), prompt.end());
  ids.insert(ids.end(), completion.begin(), completion.end());
  const int V = bb.cfg.vocab_size;
  const T* logits = forward_logits(bb, std::span<const int>(ids), ws);
  std::vector<double> lps;
  lps.reserve(completion.size());
  for (size_t t = 0; t < completion.size(); ++t) {
    size_t pos = prompt.size() + t - 1;  // row predicting ids[pos + 1]
    const T* row = logits + pos * V;
    double lse = kern::logsumexp(row, V);
    lps.push_back(static_cast<double>(row[ids[pos + 1]]) - lse);
  }
  return lps;
}

// ---- incremental decoding ----

namespace {

template <typename T>
struct DecodeState {
  int t = 0;
  std::vector<std::vector<T>> k_cache, v_cache;  // per layer [Tmax, C]
  std::vector<T> x, a, q, k, v, att, y, f, g, logits, lora_mid, lora_out;
};

template <typename T>
void decode_state_init(const Backbone<T>& bb, DecodeState<T>& st) {
  const int C = bb.cfg.hidden_dim, F = 4 * C, V = bb.cfg.vocab_size;
  st.k_cache.assign(bb.cfg.layers, std::vector<T>(size_t(bb.cfg.context_length) * C));
  st.v_cache.assign(bb.cfg.layers, std::vector<T>(size_t(bb.cfg.context_length) * C));
  st.x.resize(C);
  st.a.resize(C);
  st.q.resize(C);
  st.k.resize(C);
  st.v.resize(C);
  st.att.resize(bb.cfg.context_length);
  st.y.resize(C);
  st.f.resize(F);
  st.g.resize(F);
  st.logits.resize(V);
  int max_rank = 1;
  for (const auto& s : bb.lora) max_rank = std::max(max_rank, s.rank);
  st.lora_mid.resize(max_rank);
  st.lora_out.resize(F);
}

template <typename T>
void lora_apply_row(const Backbone<T>& bb, int layer, const char* name, DecodeState<T>& st,
                    const T* x, T* out) {
  const LoraSite<T>* site = find_site(bb, layer, name);
  if (!site) return;
  kern::matmul_nt(st.lora_mid.data(), x, site->a.data(), static_cast<const T*>(nullptr), 1,
                  site->rank, site->cols);
  kern::matmul_nt(st.lora_out.data(), st.lora_mid.data(), site->b.data(),
                  static_cast<const T*>(nullptr), 1, site->rows, site->rank);
  kern::axpy(out, site->scale, st.lora_out.data(), site->rows);
}

// Feeds one token; returns the next-token logits row.
template <typename T>
const T* decode_step(const Backbone<T>& bb, DecodeState<T>& st, int token) {
  const auto& cfg = bb.cfg;
  const int C = cfg.hidden_dim, H = cfg.heads, hs = C / H, F = 4 * C, V = cfg.vocab_size;
  const T inv_sqrt_hs = static_cast<T>(1.0 / std::sqrt(double(hs)));
  const int pos = st.t;
  if (pos >= cfg.context_length) throw std::invalid_argument("decode: context window exhausted");
  if (token < 0 || token >= V)
    throw std::invalid_argument("decode: token id out of range: " + std::to_string(token));

  const T* row = bb.params.wte.data() + size_t(token) * C;
  if (cfg.positional == Positional::Learned) {
    const T* pe = bb.params.wpe.data() + size_t(pos) * C;
    for (int j = 0; j < C; ++j) st.x[j] = row[j] + pe[j];
  } else {
    std::memcpy(st.x.data(), row, sizeof(T) * C);
  }

  T mean_s, rstd_s;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& lp = bb.params.layers[l];
    kern::layernorm_fwd(st.a.data(), &mean_s, &rstd_s, st.x.data(), lp.ln1_w.data(),
                        lp.ln1_b.data(), 1, C);
    kern::matmul_nt(st.q.data(), st.a.data(), lp.wq.data(), lp.bq.data(), 1, C, C);
    lora_apply_row(bb, l, "attn.q", st, st.a.data(), st.q.data());
    kern::matmul_nt(st.k.data(), st.a.data(), lp.wk.data(), lp.bk.data(), 1, C, C);
    lora_apply_row(bb, l, "attn.k", st, st.a.data(), st.k.data());
    kern::matmul_nt(st.v.data(), st.a.data(), lp.wv.data(), lp.bv.data(), 1, C, C);
    lora_apply_row(bb, l, "attn.v", st, st.a.data(), st.v.data());
    if (cfg.positional == Positional::Rotary) {
      rope_rotate(st.q.data(), 1, H, hs, pos, false);
      rope_rotate(st.k.data(), 1, H, hs, pos, false);
    }
    std::memcpy(st.k_cache[l].data() + size_t(pos) * C, st.k.data(), sizeof(T) * C);
    std::memcpy(st.v_cache[l].data() + size_t(pos) * C, st.v.data(), sizeof(T) * C);

    for (int h = 0; h < H; ++h) {
      const T* qh = st.q.data() + size_t(h) * hs;
      for (int tp = 0; tp <= pos; ++tp) {
        const T* kh = st.k_cache[l].data() + size_t(tp) * C + size_t(h) * hs;
        st.att[tp] = kern::dot(qh, kh, hs) * inv_sqrt_hs;
      }
      kern::softmax_fwd(st.att.data(), st.att.data(), pos + 1);
      T* yh = st.y.data() + size_t(h) * hs;
      std::fill(yh, yh + hs, T(0));
      for (int tp = 0; tp <= pos; ++tp) {
        const T* vh = st.v_cache[l].data() + size_t(tp) * C + size_t(h) * hs;
        kern::axpy(yh, st.att[tp], vh, hs);
      }
    }
    kern::matmul_nt(st.a.data(), st.y.data(), lp.wo.data(), lp.bo.data(), 1, C, C);
    lora_apply_row(bb, l, "attn.out", st, st.y.data(), st.a.data());
    kern::add_inplace(st.x.data(), st.a.data(), C);

    kern::layernorm_fwd(st.a.data(), &mean_s, &rstd_s, st.x.data(), lp.ln2_w.data(),
                        lp.ln2_b.data(), 1, C);
    kern::matmul_nt(st.f.data(), st.a.data(), lp.w_fc.data(), lp.b_fc.data(), 1, F, C);
    lora_apply_row(bb, l, "mlp.fc", st, st.a.data(), st.f.data());
    kern::gelu_fwd(st.g.data(), st.f.data(), F);
    kern::matmul_nt(st.a.data(), st.g.data(), lp.w_proj.data(), lp.b_proj.data(), 1, C, F);
    lora_apply_row(bb, l, "mlp.proj", st, st.g.data(), st.a.data());
    kern::add_inplace(st.x.data(), st.a.data(), C);
  }

  kern::layernorm_fwd(st.a.data(), &mean_s, &rstd_s, st.x.data(), bb.params.lnf_w.data(),
                      bb.params.lnf_b.data(), 1, C);
  const T* head = cfg.tie_embeddings ? bb.params.wte.data() : bb.params.w_head.data();
  kern::matmul_nt(st.logits.data(), st.a.data(), head, static_cast<const T*>(nullptr), 1, V, C);
  ++st.t;
  return st.logits.data();
}

template <typename T>
int pick_token(const T* logits, int v, const DecodeConfig& cfg, std::mt19937_64& rng,
               std::vector<T>& probs) {
  if (cfg.mode == DecodeMode::Greedy) {
    int best = 0;
    for (int j = 1; j < v; ++j)
      if (logits[j] > logits[best]) best = j;
    return best;
  }
  if (cfg.temperature <= 0) throw std::invalid_argument("sampling requires temperature > 0");
  probs.resize(v);
  const T inv_temp = static_cast<T>(1.0 / cfg.temperature);
  for (int j = 0; j < v; ++j) probs[j] = logits[j] * inv_temp;
  kern::softmax_fwd(probs.data(), probs.data(), v);
  double u = uniform01(rng);
  double cum = 0.0;
  for (int j = 0; j < v; ++j) {
    cum += static_cast<double>(probs[j]);
    if (u < cum) return j;
  }
  return v - 1;
}

}  // namespace

template <typename T>
GenerateResult generate(const Backbone<T>& bb, std::span<const int> prompt,
                        const DecodeConfig& cfg, std::mt19937_64& rng) {
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (static_cast<int>(prompt.size()) >= bb.cfg.context_length)
    throw std::invalid_argument("generate: prompt length " + std::to_string(prompt.size()) +
                                " must be below context_length " +
                                std::to_string(bb.cfg.context_length));
  DecodeState<T> st;
  decode_state_init(bb, st);
  const T* logits = nullptr;
  for (int id : prompt) logits = decode_step(bb, st, id);

  GenerateResult out;
  std::vector<T> probs;
  for (int produced = 0; produced < cfg.max_new_tokens; ++produced) {
    int next = pick_token(logits, bb.cfg.vocab_size, cfg, rng, probs);
    out.completion.push_back(next);
    if (cfg.stop_ids.count(next)) return out;
    if (st.t >= bb.cfg.context_length) break;  // cannot condition on more tokens
    logits = decode_step(bb, st, next);
  }
  out.truncated = true;
  return out;
}

template <typename T>
void inject_lora(Backbone<T>& bb, const LoraConfig& cfg, uint64_t seed) {
  static const std::set<std::string> kKnown = {"attn.q",   "attn.k", "attn.v",
                                               "attn.out", "mlp.fc", "mlp.proj"};
  if (!bb.lora.empty()) throw std::invalid_argument("inject_lora: adapters already present");
  if (cfg.rank < 1) throw std::invalid_argument("lora: rank must be >= 1");
  const int C = bb.cfg.hidden_dim, F = 4 * C;
  std::mt19937_64 rng(seed);
  for (const auto& name : cfg.target_sites)
    if (!kKnown.count(name)) throw std::invalid_argument("lora: unknown target site: " + name);

  for (int l = 0; l < bb.cfg.layers; ++l) {
    for (const auto& name : cfg.target_sites) {
      LoraSite<T> site;
      site.layer = l;
      site.site = name;
      if (name == "mlp.fc") {
        site.rows = F;
        site.cols = C;
      } else if (name == "mlp.proj") {
        site.rows = C;
        site.cols = F;
      } else {
        site.rows = C;
        site.cols = C;
      }
      if (cfg.rank >= std::min(site.rows, site.cols))
        throw std::invalid_argument(
            "lora: rank " + std::to_string(cfg.rank) + " must be below min(d,k)=" +
            std::to_string(std::min(site.rows, site.cols)) + " at " + name);
      site.rank = cfg.rank;
      site.scale = static_cast<T>(cfg.effective_scale());
      site.a.resize(size_t(site.rank) * site.cols);
      fill_gaussian(site.a, rng, 0.02);
      site.b.assign(size_t(site.rows) * site.rank, T(0));
      bb.lora.push_back(std::move(site));
    }
  }
  bb.lora_cfg = cfg;
}

template <typename T>
void set_trainable_scope(Backbone<T>& bb, TrainScope scope) {
  if (scope == TrainScope::LoraOnly && bb.lora.empty())
    throw std::invalid_argument("set_trainable_scope: lora_only requires injected adapters");
  bb.scope = scope;
}

template <typename T>
size_t trainable_parameter_count(const Backbone<T>& bb) {
  size_t n = 0;
  bb.visit_tensors([&](const std::string&, const std::vector<T>& v, bool is_lora) {
    if (bb.scope == TrainScope::Full || is_lora) n += v.size();
  });
  return n;
}

template <typename T>
std::string param_digest(const Backbone<T>& bb) {
  std::string blob = bb.cfg.to_json();
  bb.visit_tensors([&](const std::string& name, const std::vector<T>& v, bool) {
    blob += name;
    blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  });
  return util::sha256_hex(blob);
}

PolicySnapshot snapshot(const Policy& policy) { return std::make_shared<const Policy>(policy); }

template <typename T>
void AdamW<T>::step(Backbone<T>& bb, const GradBuffers<T>& grads, double lr) {
  ++step_count;
  const T bc1 = static_cast<T>(1.0 - std::pow(beta1, static_cast<double>(step_count)));
  const T bc2 = static_cast<T>(1.0 - std::pow(beta2, static_cast<double>(step_count)));

  std::map<std::string, const std::vector<T>*> gmap;
  visit_grad_buffers(bb, grads, [&](const std::string& name, const std::vector<T>& g) {
    gmap[name] = &g;
  });
  bb.visit_tensors([&](const std::string& name, std::vector<T>& p, bool is_lora) {
    if (!(bb.scope == TrainScope::Full || is_lora) || p.empty()) return;
    auto it = gmap.find(name);
    if (it == gmap.end() || it->second->size() != p.size())
      throw std::logic_error("optimizer: gradient buffer mismatch for " + name);
    auto& [m, v] = moments[name];
    if (m.size() != p.size()) {
      m.assign(p.size(), T(0));
      v.assign(p.size(), T(0));
    }
    kern::adamw_step(p.data(), it->second->data(), m.data(), v.data(),
                     static_cast<int>(p.size()), static_cast<T>(lr), static_cast<T>(beta1),
                     static_cast<T>(beta2), static_cast<T>(eps), static_cast<T>(weight_decay),
                     bc1, bc2);
  });
}

template <typename T>
GradBuffers<T> make_grad_buffers(const Backbone<T>& bb) {
  GradBuffers<T> g;
  auto mirror = [](const std::vector<T>& src) { return std::vector<T>(src.size(), T(0)); };
  g.base.wte = mirror(bb.params.wte);
  g.base.wpe = mirror(bb.params.wpe);
  g.base.layers.resize(bb.params.layers.size());
  for (size_t l = 0; l < bb.params.layers.size(); ++l) {
    const auto& src = bb.params.layers[l];
    auto& dst = g.base.layers[l];
    dst.ln1_w = mirror(src.ln1_w);
    dst.ln1_b = mirror(src.ln1_b);
    dst.wq = mirror(src.wq);
    dst.bq = mirror(src.bq);
    dst.wk = mirror(src.wk);
    dst.bk = mirror(src.bk);
    dst.wv = mirror(src.wv);
    dst.bv = mirror(src.bv);
    dst.wo = mirror(src.wo);
    dst.bo = mirror(src.bo);
    dst.ln2_w = mirror(src.ln2_w);
    dst.ln2_b = mirror(src.ln2_b);
    dst.w_fc = mirror(src.w_fc);
    dst.b_fc = mirror(src.b_fc);
    dst.w_proj = mirror(src.w_proj);
    dst.b_proj = mirror(src.b_proj);
  }
  g.base.lnf_w = mirror(bb.params.lnf_w);
  g.base.lnf_b = mirror(bb.params.lnf_b);
  g.base.w_head = mirror(bb.params.w_head);
  for (const auto& s : bb.lora) {
    g.lora_a.emplace_back(s.a.size(), T(0));
    g.lora_b.emplace_back(s.b.size(), T(0));
  }
  return g;
}

// ---- checkpoints ----

void save_checkpoint(const Policy& policy, const std::string& path) {
  json header;
  header["format"] = "apirec-checkpoint";
  header["version"] = 1;
  header["config"] = json::parse(policy.cfg.to_json());
  header["scope"] = policy.scope == TrainScope::LoraOnly ? "lora_only" : "full";
  if (policy.lora_cfg) {
    json l;
    l["rank"] = policy.lora_cfg->rank;
    l["scale"] = policy.lora_cfg->scale;
    l["target_sites"] = std::vector<std::string>(policy.lora_cfg->target_sites.begin(),
                                                 policy.lora_cfg->target_sites.end());
    header["lora"] = l;
  }
  json tensors = json::array();
  std::string blob;
  policy.visit_tensors([&](const std::string& name, const std::vector<float>& v, bool) {
    tensors.push_back({{"name", name}, {"count", v.size()}});
    blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  });
  header["tensors"] = tensors;

  std::string head = header.dump();
  std::string out = "APIRECK1";
  uint64_t len = head.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += head;
  out += blob;
  util::write_text_file_atomic(path, out);
}

Policy load_checkpoint(const std::string& path, const TokenSpace& space) {
  std::string data = util::read_text_file(path);
  if (data.size() < 16 || data.compare(0, 8, "APIRECK1") != 0)
    throw DataError("not a checkpoint file: " + path);
  uint64_t len = 0;
  std::memcpy(&len, data.data() + 8, sizeof(len));
  if (16 + len > data.size()) throw DataError("truncated checkpoint header: " + path);
  json header = json::parse(data.substr(16, len));
  BackboneConfig cfg = BackboneConfig::from_json(header.at("config").dump());
  if (cfg.vocab_digest != space.digest())
    throw DataError("checkpoint vocabulary digest mismatch: wrong or stale vocabulary for " +
                    path);

  Policy policy = make_backbone<float>(cfg, space, 0);
  if (header.contains("lora")) {
    LoraConfig lc;
    lc.rank = header["lora"].at("rank").get<int>();
    lc.scale = header["lora"].at("scale").get<double>();
    auto sites = header["lora"].at("target_sites").get<std::vector<std::string>>();
    lc.target_sites = std::set<std::string>(sites.begin(), sites.end());
    inject_lora(policy, lc, 0);
  }

  size_t offset = 16 + len;
  size_t ti = 0;
  const auto& tensors = header.at("tensors");
  policy.visit_tensors([&](const std::string& name, std::vector<float>& v, bool) {
    if (ti >= tensors.size()) throw DataError("checkpoint tensor table too short at " + name);
    const auto& entry = tensors[ti++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("count").get<size_t>() != v.size())
      throw DataError("checkpoint tensor mismatch at " + name);
    size_t bytes = v.size() * sizeof(float);
    if (offset + bytes > data.size()) throw DataError("checkpoint data truncated at " + name);
    std::memcpy(v.data(), data.data() + offset, bytes);
    offset += bytes;
  });
  if (header.value("scope", "full") == std::string("lora_only"))
    set_trainable_scope(policy, TrainScope::LoraOnly);
  return policy;
}

// ---- explicit instantiations ----

template struct Backbone<float>;
template struct Backbone<double>;
template struct AdamW<float>;
template struct AdamW<double>;

template Backbone<float> make_backbone<float>(const BackboneConfig&, const TokenSpace&, uint64_t);
template Backbone<double> make_backbone<double>(const BackboneConfig&, const TokenSpace&,
                                                uint64_t);
template void mean_init_extended_embeddings<float>(Backbone<float>&, const Codec&);
template void mean_init_extended_embeddings<double>(Backbone<double>&, const Codec&);
template const float* forward_logits<float>(const Backbone<float>&, std::span<const int>,
                                            Workspace<float>&);
template const double* forward_logits<double>(const Backbone<double>&, std::span<const int>,
                                              Workspace<double>&);
template void backward_from_dlogits<float>(const Backbone<float>&, std::span<const int>,
                                           const std::vector<float>&, Workspace<float>&,
                                           GradBuffers<float>&);
template void backward_from_dlogits<double>(const Backbone<double>&, std::span<const int>,
                                            const std::vector<double>&, Workspace<double>&,
                                            GradBuffers<double>&);
template double ce_loss<float>(const Backbone<float>&, std::span<const int>, Workspace<float>&);
template double ce_loss<double>(const Backbone<double>&, std::span<const int>,
                                Workspace<double>&);
template double ce_loss_and_grad<float>(const Backbone<float>&, std::span<const int>,
                                        Workspace<float>&, GradBuffers<float>&, double);
template double ce_loss_and_grad<double>(const Backbone<double>&, std::span<const int>,
                                         Workspace<double>&, GradBuffers<double>&, double);
template std::vector<double> sequence_logprobs<float>(const Backbone<float>&,
                                                      std::span<const int>, std::span<const int>,
                                                      Workspace<float>&);
template std::vector<double> sequence_logprobs<double>(const Backbone<double>&,
                                                       std::span<const int>, std::span<const int>,
                                                       Workspace<double>&);
template GenerateResult generate<float>(const Backbone<float>&, std::span<const int>,
                                        const DecodeConfig&, std::mt19937_64&);
template GenerateResult generate<double>(const Backbone<double>&, std::span<const int>,
                                         const DecodeConfig&, std::mt19937_64&);
template void inject_lora<float>(Backbone<float>&, const LoraConfig&, uint64_t);
template void inject_lora<double>(Backbone<double>&, const LoraConfig&, uint64_t);
template void set_trainable_scope<float>(Backbone<float>&, TrainScope);
template void set_trainable_scope<double>(Backbone<double>&, TrainScope);
template size_t trainable_parameter_count<float>(const Backbone<float>&);
template size_t trainable_parameter_count<double>(const Backbone<double>&);
template std::string param_digest<float>(const Backbone<float>&);
template std::string param_digest<double>(const Backbone<double>&);
template GradBuffers<float> make_grad_buffers<float>(const Backbone<float>&);
template GradBuffers<double> make_grad_buffers<double>(const Backbone<double>&);

}  // namespace apirec
