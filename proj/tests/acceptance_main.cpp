// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and pinned to its stated
// tolerance. Run a single criterion with `acceptance <n>`.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <vector>

#include "apirec/config.hpp"
#include "apirec/corpus.hpp"
#include "apirec/eval.hpp"
#include "apirec/generation.hpp"
#include "apirec/grpo.hpp"
#include "apirec/llm.hpp"
#include "apirec/metrics.hpp"
#include "apirec/model.hpp"
#include "apirec/sft.hpp"
#include "apirec/synth.hpp"
#include "apirec/vocab.hpp"
#include "toy_policy.hpp"

using namespace apirec;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw CheckFailure(what);
}

void expect_near(double actual, double want, double tol, const std::string& what) {
  if (!(std::abs(actual - want) <= tol)) {
    std::ostringstream ss;
    ss << what << ": got " << actual << ", want " << want << " +- " << tol;
    throw CheckFailure(ss.str());
  }
}

double frand(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// ---- criterion 1: exhaustive metric oracle ----

namespace oracle {

using Rec = std::vector<int>;

double precision(const Rec& rec, uint32_t truth, size_t cutoff) {
  if (rec.empty()) return 0.0;
  size_t denom = std::min(cutoff, rec.size());
  size_t hits = 0;
  for (size_t i = 0; i < denom; ++i)
    if (truth & (1u << rec[i])) ++hits;
  return double(hits) / double(denom);
}

double recall(const Rec& rec, uint32_t truth, size_t cutoff) {
  size_t hits = 0;
  for (size_t i = 0; i < rec.size() && i < cutoff; ++i)
    if (truth & (1u << rec[i])) ++hits;
  return double(hits) / double(__builtin_popcount(truth));
}

double f1(const Rec& rec, uint32_t truth, size_t cutoff) {
  double p = precision(rec, truth, cutoff);
  double r = recall(rec, truth, cutoff);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

double ndcg(const Rec& rec, uint32_t truth, size_t cutoff) {
  double dcg = 0;
  for (size_t i = 0; i < rec.size() && i < cutoff; ++i)
    if (truth & (1u << rec[i])) dcg += 1.0 / std::log2(double(i) + 2.0);
  double idcg = 0;
  size_t ideal = std::min<size_t>(cutoff, __builtin_popcount(truth));
  for (size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(double(i) + 2.0);
  return dcg / idcg;
}

double ap(const Rec& rec, uint32_t truth) {
  double sum = 0;
  size_t hits = 0;
  for (size_t i = 0; i < rec.size(); ++i) {
    if (!(truth & (1u << rec[i]))) continue;
    size_t prefix = 0;
    for (size_t j = 0; j <= i; ++j)
      if (truth & (1u << rec[j])) ++prefix;
    ++hits;
    sum += double(prefix) / double(i + 1);
  }
  return hits ? sum / double(hits) : 0.0;
}

}  // namespace oracle

void criterion_1_metric_oracle() {
  const int universe = 8;
  std::vector<std::string> names;
  for (int i = 0; i < universe; ++i) names.push_back("api" + std::to_string(i));

  // every ordered, repetition-free recommendation of length <= 6
  std::vector<std::vector<int>> recs = {{}};
  std::vector<std::vector<int>> frontier = {{}};
  for (int len = 1; len <= 6; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& r : frontier) {
      uint32_t used = 0;
      for (int x : r) used |= 1u << x;
      for (int x = 0; x < universe; ++x) {
        if (used & (1u << x)) continue;
        auto ext = r;
        ext.push_back(x);
        next.push_back(ext);
        recs.push_back(std::move(ext));
      }
    }
    frontier = std::move(next);
  }
  expect(recs.size() == 28961, "enumeration should yield 28961 ordered recommendations");

  std::vector<std::vector<std::string>> rec_strings;
  rec_strings.reserve(recs.size());
  for (const auto& r : recs) {
    std::vector<std::string> s;
    for (int x : r) s.push_back(names[x]);
    rec_strings.push_back(std::move(s));
  }
  std::vector<uint32_t> truths;
  std::vector<std::set<std::string>> truth_sets;
  for (uint32_t mask = 1; mask < (1u << universe); ++mask) {
    if (__builtin_popcount(mask) > 4) continue;
    truths.push_back(mask);
    std::set<std::string> t;
    for (int i = 0; i < universe; ++i)
      if (mask & (1u << i)) t.insert(names[i]);
    truth_sets.push_back(std::move(t));
  }

  const double tol = 1e-9;
  size_t combos = 0;
  for (size_t ri = 0; ri < recs.size(); ++ri) {
    const auto& rec = recs[ri];
    const auto& rec_s = rec_strings[ri];
    size_t s = rec.empty() ? 1 : rec.size();
    for (size_t ti = 0; ti < truths.size(); ++ti) {
      uint32_t mask = truths[ti];
      const auto& truth = truth_sets[ti];
      expect(std::abs(precision_at(rec_s, truth, s) - oracle::precision(rec, mask, s)) <= tol,
             "precision oracle mismatch");
      expect(std::abs(recall_at(rec_s, truth, s) - oracle::recall(rec, mask, s)) <= tol,
             "recall oracle mismatch");
      double p = precision_at(rec_s, truth, s), r = recall_at(rec_s, truth, s);
      expect(std::abs(f1_score(p, r) - oracle::f1(rec, mask, s)) <= tol, "f1 oracle mismatch");
      expect(std::abs(ndcg_at(rec_s, truth, s) - oracle::ndcg(rec, mask, s)) <= tol,
             "ndcg oracle mismatch");
      expect(std::abs(average_precision(rec_s, truth) - oracle::ap(rec, mask)) <= tol,
             "ap oracle mismatch");
      ++combos;
    }
  }
  std::cout << "    " << combos << " recommendation x truth combinations, 5 metrics each\n";
}

// ---- criterion 2: reward composition ----

void criterion_2_reward_composition() {
  RewardWeights w;
  expect(w.sums_valid(1e-12), "default weights must sum to 1 within 1e-12");

  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back("api" + std::to_string(i));
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::string> pool = names;
    for (size_t i = pool.size() - 1; i > 0; --i) std::swap(pool[i], pool[rng() % (i + 1)]);
    size_t rec_n = rng() % 7;  // may be empty
    std::vector<std::string> rec(pool.begin(), pool.begin() + rec_n);
    std::set<std::string> truth;
    size_t truth_n = 1 + rng() % 4;
    for (size_t i = 0; i < truth_n; ++i) truth.insert(names[rng() % names.size()]);
    std::set<std::string> reasoned;
    for (const auto& api : names)
      if (rng() % 2) reasoned.insert(api);

    RewardBreakdown b = score_instance(rec, reasoned, truth, w);
    double rec_reward = w.f1 * b.f1 + w.precision * b.precision + w.recall * b.recall +
                        w.ndcg * b.ndcg + w.ap * b.ap;
    double reason_reward = w.rp * b.rp + w.rr * b.rr;
    if (rec.empty()) {
      expect(b.total == 0.0, "empty recommendation must score zero");
      continue;
    }
    expect(std::abs(b.recommendation_reward - rec_reward) <= 1e-12,
           "recommendation reward recomputation");
    expect(std::abs(b.reasoning_reward - reason_reward) <= 1e-12,
           "reasoning reward recomputation");
    expect(std::abs(b.total - (b.recommendation_reward + b.reasoning_reward)) <= 1e-12,
           "total must equal the sum of its parts");
    expect(b.recommendation_reward >= 0 && b.recommendation_reward <= 1, "rec reward in [0,1]");
    expect(b.reasoning_reward >= 0 && b.reasoning_reward <= 1, "reason reward in [0,1]");
    expect(b.total >= 0 && b.total <= 2, "total in [0,2]");
  }
}

// ---- criterion 3: advantage law ----

void criterion_3_advantages() {
  std::mt19937_64 rng(23);
  for (int g = 2; g <= 16; ++g) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> rewards(g);
      for (auto& r : rewards) r = 2.0 * frand(rng);
      auto adv = compute_advantages(rewards);
      double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / g;
      bool constant = true;
      for (double r : rewards) constant = constant && std::abs(r - rewards[0]) < 1e-12;
      if (constant) continue;
      double var = 0;
      for (double a : adv) var += (a - mean) * (a - mean);
      double stdev = std::sqrt(var / g);
      expect(std::abs(mean) <= 1e-9, "advantage mean must vanish");
      expect(std::abs(stdev - 1.0) <= 1e-9, "advantage population std must be one");
    }
    std::vector<double> constant(g, 0.25 * g);
    for (double a : compute_advantages(constant))
      expect(a == 0.0, "constant group must give exact zeros");
  }
}

// ---- criterion 4: gradient check on the toy softmax policy ----

void criterion_4_gradient_check() {
  using namespace apirec::toy;
  std::mt19937_64 rng(31);
  ToyPolicy old_policy{{0.3, -0.2, 0.1, 0.0, -0.5}};
  ToyGroup group = sample_toy_group(old_policy, 8, 2, rng);
  ToyPolicy policy{{0.8, -0.6, 0.3, -0.2, 0.1}};  // off-policy so clipping engages

  for (KlEstimator est : {KlEstimator::Unbiased, KlEstimator::Exact}) {
    for (double beta : {0.0, 0.04}) {
      auto grad = toy_objective_grad(policy, old_policy, group, 0.2, beta, est);
      for (size_t j = 0; j < policy.logits.size(); ++j) {
        double h = 1e-6;
        ToyPolicy up = policy, dn = policy;
        up.logits[j] += h;
        dn.logits[j] -= h;
        double fd = (toy_objective(up, old_policy, group, 0.2, beta, est) -
                     toy_objective(dn, old_policy, group, 0.2, beta, est)) /
                    (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[j]), 1e-10});
        expect(std::abs(fd - grad[j]) / denom <= 1e-4,
               "objective gradient must match central differences within 1e-4 relative");
      }
    }
  }
  double j_id = toy_objective(old_policy, old_policy, group, 0.2, 0.04, KlEstimator::Exact);
  expect(std::abs(j_id) <= 1e-12,
         "identical-policy objective must be zero for standardized advantages");
}

// ---- criterion 5: bandit convergence ----

void criterion_5_bandit() {
  using namespace apirec::toy;
  ToyPolicy policy{{0, 0, 0, 0, 0}};
  std::mt19937_64 rng(41);
  const int target = 0;
  const int group_size = 8;
  const double eps = 0.2, beta = 0.04, lr = 0.15;
  int reached_at = -1;
  for (int step = 1; step <= 500; ++step) {
    ToyPolicy old_policy = policy;
    ToyGroup group = sample_toy_group(old_policy, group_size, target, rng);
    bool degenerate = true;
    for (double a : group.advantages) degenerate = degenerate && a == 0.0;
    if (!degenerate) {
      auto grad = toy_objective_grad(policy, old_policy, group, eps, beta, KlEstimator::Exact);
      for (size_t j = 0; j < policy.logits.size(); ++j) policy.logits[j] += lr * grad[j];
    }
    if (policy.prob(target) >= 0.9) {
      reached_at = step;
      break;
    }
  }
  expect(reached_at > 0, "target-action probability must reach 0.9 within 500 steps");
  std::cout << "    target probability 0.9 reached at step " << reached_at << "\n";
}

// ---- shared small-training helpers ----

struct TrainedSft {
  SynthCorpus corpus;
  TokenSpace space;
  Policy policy;
  std::vector<TrainingSequence> train_seqs;
  SftResult result;
};

std::vector<AnnotationLookup> scripted_annotations(const SynthCorpus& corpus,
                                                   const std::vector<Mashup>& mashups,
                                                   const TokenSpace& space) {
  auto provider = make_scripted_annotator();
  ChatClient client(provider, nullptr);
  std::vector<AnnotationLookup> lookups;
  for (const auto& m : mashups) {
    std::vector<WebApi> targets;
    for (const auto& id : m.invoked_apis) targets.push_back(corpus.repo.at(id));
    AnnotationRecord rec = annotate(m, targets, client, "scripted-annotator", space);
    expect(rec.valid, "scripted annotator must cover every target");
    lookups.push_back({rec.mashup_id, rec.rationale, rec.valid});
  }
  return lookups;
}

// ---- criterion 6: SFT overfit ----

void criterion_6_sft_overfit() {
  SynthSpec spec;
  spec.n_apis = 12;
  spec.n_mashups = 32;
  spec.seed = 13;
  SynthCorpus corpus = make_synthetic_corpus(spec);
  ByteTokenizer base;
  TokenSpace space = extend_vocabulary(base, corpus.repo.apis);
  Codec codec(base, space);

  auto lookups = scripted_annotations(corpus, corpus.mashups, space);

  BackboneConfig bc;
  bc.layers = 2;
  bc.heads = 4;
  bc.hidden_dim = 128;
  bc.context_length = 384;
  Policy policy = make_backbone<float>(bc, space, 101);
  mean_init_extended_embeddings(policy, codec);

  RenderedCorpus rendered = render_corpus(corpus.mashups, lookups, codec, {}, 384);
  expect(rendered.sequences.size() == 32, "all 32 synthetic examples must render");

  SftConfig sc;
  sc.learning_rate = 3e-3;
  sc.epochs = 20;
  sc.batch_size = 2;
  sc.seed = 7;
  sc.max_sequence_length = 384;
  SftResult result = train_sft(policy, rendered.sequences, {}, sc);
  std::cout << "    final train loss " << result.final_train_loss << " after " << sc.epochs
            << " epochs\n";
  expect(result.final_train_loss < 0.1,
         "Eq-1 loss must fall below 0.1 within 20 epochs (got " +
             std::to_string(result.final_train_loss) + ")");

  EvalOptions opts;
  opts.decode.mode = DecodeMode::Greedy;
  opts.decode.max_new_tokens = 96;
  opts.decode.ensure_stops(space);
  EvalOutput eval = evaluate_model(policy, corpus.mashups, corpus.repo, codec, RewardWeights{},
                                   opts, nullptr);
  std::cout << "    full_match_rate " << eval.report.full_match_rate << ", well_formed_rate "
            << eval.report.well_formed_rate << "\n";
  expect(eval.report.full_match_rate >= 0.9, "greedy decoding must reproduce >= 90% of the "
                                             "memorized API bundles");
  expect(eval.report.well_formed_rate >= 0.95, "well-formed output rate must reach 0.95");
}

// ---- criterion 7: end-to-end mini pipeline ----

void criterion_7_end_to_end() {
  SynthSpec spec;
  spec.n_apis = 20;
  spec.n_mashups = 200;
  spec.seed = 29;
  SynthCorpus corpus = make_synthetic_corpus(spec);
  ByteTokenizer base;
  TokenSpace space = extend_vocabulary(base, corpus.repo.apis);
  Codec codec(base, space);

  CorpusSplit split = split_corpus(corpus.mashups, 17);
  expect(split.validation.size() == 40 && split.test.size() == 40 && split.train.size() == 120,
         "3:1:1 split of 200 mashups");
  auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<Mashup> out;
    for (const auto& id : ids)
      for (const auto& m : corpus.mashups)
        if (m.mashup_id == id) out.push_back(m);
    return out;
  };
  std::vector<Mashup> train = pick(split.train);
  std::vector<Mashup> val = pick(split.validation);
  std::vector<Mashup> test = pick(split.test);

  auto lookups = scripted_annotations(corpus, corpus.mashups, space);

  BackboneConfig bc;
  bc.layers = 2;
  bc.heads = 4;
  bc.hidden_dim = 96;
  bc.context_length = 384;
  Policy policy = make_backbone<float>(bc, space, 211);
  mean_init_extended_embeddings(policy, codec);

  RenderedCorpus rt = render_corpus(train, lookups, codec, {}, 384);
  RenderedCorpus rv = render_corpus(val, lookups, codec, {}, 384);

  SftConfig sc;
  sc.learning_rate = 2e-3;
  sc.epochs = 10;
  sc.batch_size = 8;
  sc.seed = 3;
  sc.max_sequence_length = 384;
  SftResult sft_result = train_sft(policy, rt.sequences, rv.sequences, sc);
  std::cout << "    sft best epoch " << sft_result.best_epoch << " val loss "
            << sft_result.best_val_loss << "\n";

  RewardWeights weights;
  double sft_reward = mean_total_reward(policy, test, codec, weights);
  std::cout << "    held-out mean total reward after sft: " << sft_reward << "\n";

  Policy grpo_policy = policy;  // stage input
  LoraConfig lc;
  lc.rank = 8;
  inject_lora(grpo_policy, lc, 5);
  GrpoConfig gc;
  gc.group_size = 8;
  gc.epochs = 2;
  gc.learning_rate = 1e-3;
  gc.rollout_temperature = 0.9;
  gc.max_new_tokens = 80;
  gc.seed = 19;
  GrpoResult grpo_result = train_grpo(grpo_policy, train, val, codec, gc, weights);
  std::cout << "    grpo best epoch " << grpo_result.best_epoch << " val reward "
            << grpo_result.best_val_reward << "\n";

  // evaluate the best checkpoint by validation reward (epoch 0 = sft state)
  Policy best = grpo_policy;
  if (grpo_result.best_epoch == 0) {
    best = policy;
    inject_lora(best, lc, 5);
  }
  double grpo_reward = mean_total_reward(best, test, codec, weights);
  std::cout << "    held-out mean total reward after grpo: " << grpo_reward << "\n";
  expect(grpo_reward >= sft_reward,
         "grpo checkpoint must not regress below the sft-only checkpoint (sft " +
             std::to_string(sft_reward) + ", grpo " + std::to_string(grpo_reward) + ")");

  EvalOptions opts;
  opts.decode.mode = DecodeMode::Greedy;
  opts.decode.max_new_tokens = 96;
  opts.decode.ensure_stops(space);
  EvalOutput eval = evaluate_model(best, test, corpus.repo, codec, weights, opts, nullptr);
  double rr_sum = 0;
  size_t rr_n = 0;
  for (const auto& inst : eval.instances) {
    if (!inst.parse.well_formed()) continue;
    rr_sum += inst.score.rr;
    ++rr_n;
  }
  expect(rr_n > 0, "at least one well-formed output expected");
  double rr = rr_sum / double(rr_n);
  std::cout << "    reasoning recall on well-formed outputs: " << rr << " over " << rr_n
            << " instances\n";
  expect(rr >= 0.9, "RR on well-formed outputs must reach 0.9 (got " + std::to_string(rr) + ")");
}

// ---- criterion 8: structural invariants ----

void criterion_8_structural() {
  SynthSpec spec;
  spec.n_apis = 10;
  spec.n_mashups = 24;
  spec.seed = 3;
  SynthCorpus corpus = make_synthetic_corpus(spec);
  ByteTokenizer base;
  TokenSpace space = extend_vocabulary(base, corpus.repo.apis);
  Codec codec(base, space);

  // tokenizer atomicity and round trip for every registered API token
  for (const auto& [api_id, tok] : space.api_token) {
    std::string surface = "<API_" + api_id + ">";
    auto ids = codec.encode(surface);
    expect(ids.size() == 1 && ids[0] == tok, "API surface must encode to one token");
    expect(codec.decode(ids) == surface, "decode(encode(surface)) must round trip");
  }
  for (int d = 0; d < 4; ++d) {
    auto ids = codec.encode(delimiter_surface(static_cast<Delimiter>(d)));
    expect(ids.size() == 1, "delimiter surfaces must be atomic");
  }

  // parse round trip over every rendered training sequence
  auto lookups = scripted_annotations(corpus, corpus.mashups, space);
  RenderedCorpus rendered = render_corpus(corpus.mashups, lookups, codec, {}, 512);
  expect(rendered.sequences.size() == corpus.mashups.size(), "all examples must render");
  for (size_t i = 0; i < rendered.sequences.size(); ++i) {
    const Mashup& m = corpus.mashups[i];
    const TrainingSequence& seq = rendered.sequences[i];
    std::vector<int> question = render_question(m, codec);
    std::vector<int> completion(seq.ids.begin() + question.size(), seq.ids.end());
    auto [rec, report] = parse_generation(completion, codec);
    expect(rec.api_list == m.invoked_apis, "parse must recover the exact API list");
    std::set<std::string> truth(m.invoked_apis.begin(), m.invoked_apis.end());
    std::set<std::string> keys;
    for (const auto& [k, v] : rec.reasons) keys.insert(k);
    expect(keys == truth, "reason keys must equal the target APIs");
    expect(report.well_formed(), "rendered sequences must parse without salvage");
  }

  // LoRA identity at injection: exact logit equality
  BackboneConfig bc;
  bc.layers = 1;
  bc.heads = 2;
  bc.hidden_dim = 32;
  bc.context_length = 256;
  Policy policy = make_backbone<float>(bc, space, 67);
  Policy adapted = policy;
  LoraConfig lc;
  lc.rank = 4;
  inject_lora(adapted, lc, 2);
  Workspace<float> wsa, wsb;
  std::vector<int> probe = codec.encode("probe <API_" + corpus.repo.apis[0].api_id + "> text",
                                        true, true);
  const float* la = forward_logits(policy, std::span<const int>(probe), wsa);
  const float* lb = forward_logits(adapted, std::span<const int>(probe), wsb);
  for (size_t i = 0; i < probe.size() * size_t(policy.cfg.vocab_size); ++i)
    expect(la[i] == lb[i], "adapted logits must equal base logits exactly at injection");

  // base parameters bit-identical after 100 GRPO steps
  std::vector<float> before;
  adapted.visit_tensors([&](const std::string&, const std::vector<float>& v, bool is_lora) {
    if (!is_lora) before.insert(before.end(), v.begin(), v.end());
  });
  GrpoConfig gc;
  gc.group_size = 2;
  gc.epochs = 5;  // 5 epochs x 20 mashups = 100 steps
  gc.learning_rate = 1e-3;
  gc.max_new_tokens = 10;
  gc.seed = 77;
  std::vector<Mashup> train(corpus.mashups.begin(), corpus.mashups.begin() + 20);
  set_trainable_scope(adapted, TrainScope::LoraOnly);
  GrpoResult result = train_grpo(adapted, train, {}, codec, gc, RewardWeights{});
  size_t steps = 0;
  for (const auto& line : result.log_lines) steps += line.find("step ") != std::string::npos;
  expect(steps >= 100, "expected 100 logged GRPO steps");
  std::vector<float> after;
  adapted.visit_tensors([&](const std::string&, const std::vector<float>& v, bool is_lora) {
    if (!is_lora) after.insert(after.end(), v.begin(), v.end());
  });
  expect(before.size() == after.size() &&
             std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0,
         "base parameters must stay bit-identical through 100 GRPO steps");
}

// ---- criterion 9: paper-anchored constants ----

void criterion_9_constants() {
  std::vector<std::string> ids;
  for (int i = 0; i < 8217; ++i) ids.push_back("m" + std::to_string(i));
  CorpusSplit split = split_ids(ids, 1);
  expect(split.train.size() == 4931, "train size of the 8217-mashup split must be 4931");
  expect(split.validation.size() == 1643, "validation size must be 1643");
  expect(split.test.size() == 1643, "test size must be 1643");

  ExperimentConfig cfg;
  std::string resolved = cfg.to_json();
  expect(resolved.find("\"learning_rate\": 1e-05") != std::string::npos,
         "resolved config must carry the sft learning rate 1e-5");
  expect(resolved.find("\"learning_rate\": 5e-06") != std::string::npos,
         "resolved config must carry the grpo learning rate 5e-6");
  expect(cfg.sft.epochs == 20 && cfg.grpo.epochs == 20,
         "both stages must default to 20 epochs");
  ExperimentConfig reparsed = ExperimentConfig::from_json(resolved);
  expect(reparsed.sft.learning_rate == 1e-5 && reparsed.grpo.learning_rate == 5e-6,
         "reparsed config must preserve the exact learning rates");
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<void()> run;
  };
  std::vector<Criterion> criteria = {
      {1, "metric oracle suite (exhaustive, <=1e-9)", criterion_1_metric_oracle},
      {2, "reward composition over 10000 random breakdowns (<=1e-12)",
       criterion_2_reward_composition},
      {3, "advantage law: zero mean, unit population std (<=1e-9)", criterion_3_advantages},
      {4, "GRPO gradient check vs central differences (<=1e-4 relative)",
       criterion_4_gradient_check},
      {5, "bandit convergence: P(target) >= 0.9 within 500 steps", criterion_5_bandit},
      {6, "SFT overfit: loss < 0.1, full match >= 0.9, well-formed >= 0.95",
       criterion_6_sft_overfit},
      {7, "end-to-end mini pipeline: GRPO >= SFT reward, RR >= 0.9", criterion_7_end_to_end},
      {8, "structural invariants: atomicity, round trip, LoRA identity, freeze",
       criterion_8_structural},
      {9, "paper-anchored constants: split sizes and stage defaults", criterion_9_constants},
  };

  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    auto t0 = std::chrono::steady_clock::now();
    try {
      c.run();
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("[PASS] criterion %d: %s (%.1fs)\n", c.id, c.name, secs);
    } catch (const std::exception& e) {
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("[FAIL] criterion %d: %s (%.1fs)\n       %s\n", c.id, c.name, secs, e.what());
      ++failures;
    }
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
