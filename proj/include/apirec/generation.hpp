#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "apirec/corpus.hpp"
#include "apirec/model.hpp"
#include "apirec/sft.hpp"
#include "apirec/vocab.hpp"

// Parse model generations into a variable-cardinality recommendation with
// per-API reasons; all malformed outputs degrade through salvage rules rather
// than failing.

namespace apirec {

struct Recommendation {
  std::vector<std::string> api_list;           // emission order, duplicate-free
  std::map<std::string, std::string> reasons;  // api_id -> reason clause
  std::set<std::string> apis_reason;           // APIs mentioned anywhere in the reason span

  std::string to_json(const std::string& mashup_id = "") const;
};

struct ParseReport {
  bool well_formed_api_span = false;
  bool well_formed_reason_span = false;
  size_t duplicates_removed = 0;
  size_t unknown_tokens_skipped = 0;
  bool truncated = false;

  bool well_formed() const { return well_formed_api_span && well_formed_reason_span; }
};

// Second-stage question: the first-stage template truncated right after the
// "Recommended APIs: " label, BOS included, so generation begins at API_start.
std::vector<int> render_question(const Mashup& mashup, const Codec& codec,
                                 const TemplateSpec& tmpl = {});

// Total parser over any completion. Under the delimiter grammar the API list
// is the API tokens strictly between the first API_start and the next
// API_stop; the reason span sits between REASON_start and REASON_stop; reasons
// attach by segmenting the span at API-token occurrences. In plain mode
// (tmpl.special_tokens=false) the API section runs until the "Reason:" label.
std::pair<Recommendation, ParseReport> parse_generation(std::span<const int> completion,
                                                        const Codec& codec,
                                                        const TemplateSpec& tmpl = {});

// generate + parse; cardinality is whatever the model emitted.
std::pair<Recommendation, ParseReport> recommend(const Policy& policy, const Mashup& mashup,
                                                 const DecodeConfig& cfg, const Codec& codec,
                                                 std::mt19937_64& rng,
                                                 const TemplateSpec& tmpl = {});

}  // namespace apirec
