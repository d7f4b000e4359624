#include "apirec/generation.hpp"

#include <algorithm>

#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

std::string Recommendation::to_json(const std::string& mashup_id) const {
  json j;
  if (!mashup_id.empty()) j["mashup_id"] = mashup_id;
  j["api_list"] = api_list;
  j["reasons"] = reasons;
  j["apis_reason"] = std::vector<std::string>(apis_reason.begin(), apis_reason.end());
  return j.dump();
}

std::vector<int> render_question(const Mashup& mashup, const Codec& codec,
                                 const TemplateSpec& tmpl) {
  if (util::trim(mashup.requirement).empty())
    throw DataError("render_question: mashup requirement is empty");
  return codec.encode(template_prefix(mashup.requirement, tmpl), /*add_bos=*/true);
}

namespace {

size_t find_token(std::span<const int> ids, int token, size_t from) {
  for (size_t i = from; i < ids.size(); ++i)
    if (ids[i] == token) return i;
  return ids.size();
}

void collect_api_list(std::span<const int> ids, size_t begin, size_t end, const TokenSpace& space,
                      Recommendation& rec, ParseReport& report) {
  std::set<std::string> seen;
  for (size_t i = begin; i < end && i < ids.size(); ++i) {
    if (space.is_api_token(ids[i])) {
      const std::string& api = space.api_of(ids[i]);
      if (seen.insert(api).second)
        rec.api_list.push_back(api);
      else
        ++report.duplicates_removed;
    } else {
      ++report.unknown_tokens_skipped;
    }
  }
}

// Segments [begin, end) at API-token occurrences; the clause trailing each
// first mention becomes that API's reason.
void attach_reasons(std::span<const int> ids, size_t begin, size_t end, const Codec& codec,
                    Recommendation& rec) {
  const TokenSpace& space = codec.space();
  end = std::min(end, ids.size());
  std::vector<std::pair<size_t, std::string>> mentions;
  for (size_t i = begin; i < end; ++i) {
    if (space.is_api_token(ids[i])) {
      rec.apis_reason.insert(space.api_of(ids[i]));
      mentions.emplace_back(i, space.api_of(ids[i]));
    }
  }
  for (size_t m = 0; m < mentions.size(); ++m) {
    const auto& [pos, api] = mentions[m];
    if (rec.reasons.count(api)) continue;  // first mention wins
    size_t clause_end = (m + 1 < mentions.size()) ? mentions[m + 1].first : end;
    std::string text = codec.decode(ids.subspan(pos + 1, clause_end - pos - 1));
    rec.reasons[api] = util::trim(text);
  }
}

std::pair<Recommendation, ParseReport> parse_plain(std::span<const int> completion,
                                                   const Codec& codec) {
  // Without delimiters the API section ends where the "Reason:" label starts.
  Recommendation rec;
  ParseReport report;
  const TokenSpace& space = codec.space();

  size_t boundary = completion.size();
  std::string text;
  std::vector<size_t> char_to_token;
  for (size_t i = 0; i < completion.size(); ++i) {
    std::string piece = completion[i] < space.base_vocab_size
                            ? codec.base().decode_token(completion[i])
                            : space.surface(completion[i]);
    for (size_t c = 0; c < piece.size(); ++c) char_to_token.push_back(i);
    text += piece;
  }
  size_t label = text.find("Reason:");
  bool has_label = label != std::string::npos;
  if (has_label) boundary = char_to_token[label];

  collect_api_list(completion, 0, boundary, space, rec, report);
  // Plain-mode "unknown tokens" are ordinary text (separators), not noise.
  report.unknown_tokens_skipped = 0;
  report.well_formed_api_span = !rec.api_list.empty();
  report.well_formed_reason_span = has_label;
  if (has_label) attach_reasons(completion, boundary, completion.size(), codec, rec);
  return {std::move(rec), std::move(report)};
}

}  // namespace

std::pair<Recommendation, ParseReport> parse_generation(std::span<const int> completion,
                                                        const Codec& codec,
                                                        const TemplateSpec& tmpl) {
  if (!tmpl.special_tokens) return parse_plain(completion, codec);

  Recommendation rec;
  ParseReport report;
  const TokenSpace& space = codec.space();
  const int api_start = space.delimiter(Delimiter::ApiStart);
  const int api_stop = space.delimiter(Delimiter::ApiStop);
  const int reason_start = space.delimiter(Delimiter::ReasonStart);
  const int reason_stop = space.delimiter(Delimiter::ReasonStop);
  const size_t n = completion.size();

  size_t s = find_token(completion, api_start, 0);
  if (s < n) {
    size_t e = find_token(completion, api_stop, s + 1);
    if (e < n) {
      report.well_formed_api_span = true;
    } else {
      // Salvage: extend to REASON_start or the end of the sequence.
      e = std::min(find_token(completion, reason_start, s + 1), n);
      report.truncated = true;
    }
    collect_api_list(completion, s + 1, e, space, rec, report);
  }
  // Missing API_start leaves the api_list empty and the span flag false.

  size_t rs = find_token(completion, reason_start, 0);
  if (rs < n) {
    size_t re = find_token(completion, reason_stop, rs + 1);
    if (re < n) {
      report.well_formed_reason_span = true;
    } else {
      re = n;  // salvage: reason span extends to the sequence end
      report.truncated = true;
    }
    attach_reasons(completion, rs + 1, re, codec, rec);
  }
  return {std::move(rec), std::move(report)};
}

std::pair<Recommendation, ParseReport> recommend(const Policy& policy, const Mashup& mashup,
                                                 const DecodeConfig& cfg, const Codec& codec,
                                                 std::mt19937_64& rng, const TemplateSpec& tmpl) {
  std::vector<int> question = render_question(mashup, codec, tmpl);
  GenerateResult gen = generate(policy, std::span<const int>(question), cfg, rng);
  auto [rec, report] = parse_generation(std::span<const int>(gen.completion), codec, tmpl);
  report.truncated = report.truncated || gen.truncated;
  return {std::move(rec), std::move(report)};
}

}  // namespace apirec
