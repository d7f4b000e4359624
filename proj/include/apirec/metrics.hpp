#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Scalar quality measures: ranked-retrieval metrics over one recommendation,
// the two reasoning set-overlap measures, and the composite rewards built
// from them. Everything here is pure and double precision.

namespace apirec {

struct RewardWeights {
  double f1 = 0.4;
  double precision = 0.1;
  double recall = 0.1;
  double ndcg = 0.2;
  double ap = 0.2;
  double rp = 0.5;
  double rr = 0.5;

  bool sums_valid(double tol = 1e-12) const;
};

struct RewardBreakdown {
  double precision = 0, recall = 0, f1 = 0, ndcg = 0, ap = 0;
  double rp = 0, rr = 0;
  double recommendation_reward = 0;
  double reasoning_reward = 0;
  double total = 0;
};

// rec must be duplicate-free (parse_generation guarantees it). cutoff >= 1.
// Empty rec scores 0; the denominator is min(cutoff, |rec|).
double precision_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
                    size_t cutoff);

// Throws std::invalid_argument on empty truth.
double recall_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
                 size_t cutoff);

double f1_score(double p, double r);

// Binary gains, log2(i+1) discount, ideal DCG over min(cutoff, |truth|)
// positions. Throws on empty truth.
double ndcg_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
               size_t cutoff);

// Mean of precision_at(rec, truth, i) over the positions i where rec[i-1] is a
// hit; 0 with no hits. Throws on empty truth.
double average_precision(const std::vector<std::string>& rec, const std::set<std::string>& truth);

// |recommended ∩ reasoned| / |reasoned|; both empty -> 1, reasons absent while
// recommendations exist -> 0.
double reasoning_precision(const std::set<std::string>& recommended,
                           const std::set<std::string>& reasoned);

// |recommended ∩ reasoned| / |recommended|; empty recommendation -> 0.
double reasoning_recall(const std::set<std::string>& recommended,
                        const std::set<std::string>& reasoned);

// All retrieval metrics at cutoff s = |rec|; composite rewards per the fixed
// weight scheme. Empty rec yields the all-zero breakdown. When
// recommendation_only is set the reasoning reward is excluded from total.
RewardBreakdown score_instance(const std::vector<std::string>& rec,
                               const std::set<std::string>& reasoned,
                               const std::set<std::string>& truth, const RewardWeights& weights,
                               bool recommendation_only = false);

struct EvalReport {
  size_t instances = 0;
  double p_at_1 = 0, p_at_s = 0, r_at_1 = 0, r_at_s = 0, ndcg_at_s = 0, map_at_s = 0;
  double rp = 0, rr = 0;
  std::map<std::string, double> rs_per_judge;  // judge model -> mean over valid verdicts
  std::optional<double> rs_average;
  double mean_apis_per_output = 0;
  double full_match_rate = 0;
  double rationale_coverage_rate = 0;  // recommended APIs carrying a reason, micro
  double well_formed_rate = 0;
  double mean_total_reward = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  // Fixed-width comparison table, one row per labeled report.
  static std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
};

}  // namespace apirec
