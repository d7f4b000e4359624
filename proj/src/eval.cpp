#include "apirec/eval.hpp"

#include <atomic>
#include <thread>

#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

EvalOutput evaluate_model(const Policy& policy, const std::vector<Mashup>& split,
                          const ApiRepository& repo, const Codec& codec,
                          const RewardWeights& weights, const EvalOptions& opts,
                          ChatClient* judge_client) {
  if (split.empty()) throw DataError("evaluate_model: empty split");

  EvalOutput out;
  out.instances.resize(split.size());

  PolicySnapshot snap = snapshot(policy);
  auto run_range = [&](size_t begin, size_t end) {
    std::mt19937_64 rng(0);
    for (size_t i = begin; i < end; ++i) {
      const Mashup& m = split[i];
      InstanceResult inst;
      inst.mashup_id = m.mashup_id;
      auto [rec, parse] = recommend(*snap, m, opts.decode, codec, rng, opts.tmpl);
      inst.rec = std::move(rec);
      inst.parse = parse;
      std::set<std::string> truth(m.invoked_apis.begin(), m.invoked_apis.end());
      inst.score = score_instance(inst.rec.api_list, inst.rec.apis_reason, truth, weights,
                                  opts.recommendation_only);
      out.instances[i] = std::move(inst);
    }
  };

  int threads = std::max(1, opts.threads);
  if (threads == 1 || split.size() < 2) {
    run_range(0, split.size());
  } else {
    // Deterministic merge: workers own disjoint index ranges of the split.
    threads = std::min<int>(threads, static_cast<int>(split.size()));
    std::vector<std::thread> pool;
    size_t chunk = (split.size() + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
      size_t begin = w * chunk;
      size_t end = std::min(split.size(), begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  EvalReport& r = out.report;
  r.instances = split.size();
  double p1 = 0, ps = 0, r1 = 0, rs = 0, n_s = 0, ap_s = 0, rp = 0, rr = 0;
  double apis_total = 0, full = 0, reward = 0;
  size_t covered = 0, recommended_total = 0, well_formed = 0;
  for (size_t i = 0; i < split.size(); ++i) {
    const auto& inst = out.instances[i];
    const Mashup& m = split[i];
    std::set<std::string> truth(m.invoked_apis.begin(), m.invoked_apis.end());
    p1 += precision_at(inst.rec.api_list, truth, 1);
    r1 += recall_at(inst.rec.api_list, truth, 1);
    ps += inst.score.precision;
    rs += inst.score.recall;
    n_s += inst.score.ndcg;
    ap_s += inst.score.ap;
    rp += inst.score.rp;
    rr += inst.score.rr;
    reward += inst.score.total;
    apis_total += static_cast<double>(inst.rec.api_list.size());
    std::set<std::string> emitted(inst.rec.api_list.begin(), inst.rec.api_list.end());
    if (emitted == truth) full += 1;
    for (const auto& api : inst.rec.api_list)
      if (inst.rec.apis_reason.count(api)) ++covered;
    recommended_total += inst.rec.api_list.size();
    if (inst.parse.well_formed()) ++well_formed;
  }
  const double n = static_cast<double>(split.size());
  r.p_at_1 = p1 / n;
  r.p_at_s = ps / n;
  r.r_at_1 = r1 / n;
  r.r_at_s = rs / n;
  r.ndcg_at_s = n_s / n;
  r.map_at_s = ap_s / n;  // MAP: AP averaged across mashups
  r.rp = rp / n;
  r.rr = rr / n;
  r.mean_apis_per_output = apis_total / n;
  r.full_match_rate = full / n;
  r.rationale_coverage_rate =
      recommended_total ? static_cast<double>(covered) / recommended_total : 0.0;
  r.well_formed_rate = static_cast<double>(well_formed) / n;
  r.mean_total_reward = reward / n;

  if (!opts.judges.empty() && judge_client) {
    std::vector<JudgeVerdict> verdicts;
    for (const auto& judge : opts.judges) {
      for (size_t i = 0; i < split.size(); ++i) {
        const auto& inst = out.instances[i];
        if (inst.rec.api_list.empty()) continue;  // judging requires >= 1 API
        verdicts.push_back(judge_rs(split[i], inst.rec.api_list, inst.rec.reasons, repo,
                                    *judge_client, judge));
      }
    }
    RsAggregate agg = aggregate_rs(verdicts);
    r.rs_per_judge = agg.per_judge;
    r.rs_average = agg.overall;
  }
  return out;
}

std::string instances_to_jsonl(const std::vector<InstanceResult>& instances) {
  std::string out;
  for (const auto& inst : instances) {
    json j = json::parse(inst.rec.to_json(inst.mashup_id));
    j["well_formed_api_span"] = inst.parse.well_formed_api_span;
    j["well_formed_reason_span"] = inst.parse.well_formed_reason_span;
    j["truncated"] = inst.parse.truncated;
    j["duplicates_removed"] = inst.parse.duplicates_removed;
    j["unknown_tokens_skipped"] = inst.parse.unknown_tokens_skipped;
    j["reward_total"] = inst.score.total;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace apirec
