#include "apirec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace apirec {

using nlohmann::json;

bool RewardWeights::sums_valid(double tol) const {
  return std::abs(f1 + precision + recall + ndcg + ap - 1.0) <= tol &&
         std::abs(rp + rr - 1.0) <= tol;
}

namespace {

size_t hits_in_prefix(const std::vector<std::string>& rec, const std::set<std::string>& truth,
                      size_t prefix) {
  size_t hits = 0;
  for (size_t i = 0; i < prefix && i < rec.size(); ++i)
    if (truth.count(rec[i])) ++hits;
  return hits;
}

size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& big = a.size() <= b.size() ? b : a;
  size_t n = 0;
  for (const auto& x : small)
    if (big.count(x)) ++n;
  return n;
}

}  // namespace

double precision_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
                    size_t cutoff) {
  if (cutoff < 1) throw std::invalid_argument("precision_at: cutoff must be >= 1");
  if (rec.empty()) return 0.0;
  size_t denom = std::min(cutoff, rec.size());
  return static_cast<double>(hits_in_prefix(rec, truth, denom)) / static_cast<double>(denom);
}

double recall_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
                 size_t cutoff) {
  if (cutoff < 1) throw std::invalid_argument("recall_at: cutoff must be >= 1");
  if (truth.empty()) throw std::invalid_argument("recall_at: truth set must be non-empty");
  return static_cast<double>(hits_in_prefix(rec, truth, cutoff)) /
         static_cast<double>(truth.size());
}

double f1_score(double p, double r) {
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double ndcg_at(const std::vector<std::string>& rec, const std::set<std::string>& truth,
               size_t cutoff) {
  if (cutoff < 1) throw std::invalid_argument("ndcg_at: cutoff must be >= 1");
  if (truth.empty()) throw std::invalid_argument("ndcg_at: truth set must be non-empty");
  double dcg = 0.0;
  for (size_t i = 0; i < cutoff && i < rec.size(); ++i)
    if (truth.count(rec[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  size_t ideal = std::min(cutoff, truth.size());
  for (size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

double average_precision(const std::vector<std::string>& rec,
                         const std::set<std::string>& truth) {
  if (truth.empty()) throw std::invalid_argument("average_precision: truth set must be non-empty");
  double sum = 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < rec.size(); ++i) {
    if (truth.count(rec[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) return 0.0;
  return sum / static_cast<double>(hits);
}

double reasoning_precision(const std::set<std::string>& recommended,
                           const std::set<std::string>& reasoned) {
  if (reasoned.empty()) return recommended.empty() ? 1.0 : 0.0;
  return static_cast<double>(intersection_size(recommended, reasoned)) /
         static_cast<double>(reasoned.size());
}

double reasoning_recall(const std::set<std::string>& recommended,
                        const std::set<std::string>& reasoned) {
  if (recommended.empty()) return 0.0;
  return static_cast<double>(intersection_size(recommended, reasoned)) /
         static_cast<double>(recommended.size());
}

RewardBreakdown score_instance(const std::vector<std::string>& rec,
                               const std::set<std::string>& reasoned,
                               const std::set<std::string>& truth, const RewardWeights& weights,
                               bool recommendation_only) {
  if (truth.empty()) throw std::invalid_argument("score_instance: truth set must be non-empty");
  RewardBreakdown b;
  if (rec.empty()) return b;
  size_t s = rec.size();
  b.precision = precision_at(rec, truth, s);
  b.recall = recall_at(rec, truth, s);
  b.f1 = f1_score(b.precision, b.recall);
  b.ndcg = ndcg_at(rec, truth, s);
  b.ap = average_precision(rec, truth);
  b.recommendation_reward = weights.f1 * b.f1 + weights.precision * b.precision +
                            weights.recall * b.recall + weights.ndcg * b.ndcg + weights.ap * b.ap;
  std::set<std::string> recommended(rec.begin(), rec.end());
  b.rp = reasoning_precision(recommended, reasoned);
  b.rr = reasoning_recall(recommended, reasoned);
  b.reasoning_reward = recommendation_only ? 0.0 : weights.rp * b.rp + weights.rr * b.rr;
  b.total = b.recommendation_reward + b.reasoning_reward;
  return b;
}

std::string EvalReport::to_json() const {
  json j;
  j["instances"] = instances;
  j["p_at_1"] = p_at_1;
  j["p_at_s"] = p_at_s;
  j["r_at_1"] = r_at_1;
  j["r_at_s"] = r_at_s;
  j["ndcg_at_s"] = ndcg_at_s;
  j["map_at_s"] = map_at_s;
  j["rp"] = rp;
  j["rr"] = rr;
  if (!rs_per_judge.empty()) {
    j["rs_per_judge"] = rs_per_judge;
    j["rs_average"] = rs_average.value();
  }
  j["mean_apis_per_output"] = mean_apis_per_output;
  j["full_match_rate"] = full_match_rate;
  j["rationale_coverage_rate"] = rationale_coverage_rate;
  j["well_formed_rate"] = well_formed_rate;
  j["mean_total_reward"] = mean_total_reward;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  r.instances = j.at("instances").get<size_t>();
  r.p_at_1 = j.at("p_at_1").get<double>();
  r.p_at_s = j.at("p_at_s").get<double>();
  r.r_at_1 = j.at("r_at_1").get<double>();
  r.r_at_s = j.at("r_at_s").get<double>();
  r.ndcg_at_s = j.at("ndcg_at_s").get<double>();
  r.map_at_s = j.at("map_at_s").get<double>();
  r.rp = j.at("rp").get<double>();
  r.rr = j.at("rr").get<double>();
  if (j.contains("rs_per_judge")) {
    r.rs_per_judge = j.at("rs_per_judge").get<std::map<std::string, double>>();
    r.rs_average = j.at("rs_average").get<double>();
  }
  r.mean_apis_per_output = j.at("mean_apis_per_output").get<double>();
  r.full_match_rate = j.at("full_match_rate").get<double>();
  r.rationale_coverage_rate = j.at("rationale_coverage_rate").get<double>();
  r.well_formed_rate = j.at("well_formed_rate").get<double>();
  r.mean_total_reward = j.value("mean_total_reward", 0.0);
  return r;
}

std::string EvalReport::format_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %6s %6s %6s %6s %6s %6s %6s %6s %6s\n", "run", "P@1",
                "P@s", "R@1", "R@s", "N@s", "M@s", "RP", "RR", "RS");
  out += line;
  out += std::string(24 + 7 * 9 + 6, '-') + "\n";
  for (const auto& [label, r] : rows) {
    char rs[16] = "  --- ";
    if (r.rs_average) std::snprintf(rs, sizeof(rs), "%6.3f", *r.rs_average);
    std::snprintf(line, sizeof(line), "%-24s %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %s\n",
                  label.c_str(), r.p_at_1, r.p_at_s, r.r_at_1, r.r_at_s, r.ndcg_at_s, r.map_at_s,
                  r.rp, r.rr, rs);
    out += line;
  }
  return out;
}

}  // namespace apirec
