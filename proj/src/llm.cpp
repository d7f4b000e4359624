#include "apirec/llm.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <regex>
#include <thread>

#include "apirec/util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace apirec {

using nlohmann::json;
namespace fs = std::filesystem;

std::string ChatRequest::cache_key() const {
  char temp[32];
  std::snprintf(temp, sizeof(temp), "%.6f", temperature);
  std::string blob = model_id + "\x1f" + prompt + "\x1f" + temp;
  if (!salt.empty()) blob += std::string("\x1f") + salt;
  return util::sha256_hex(blob);
}

HttpChatProvider::HttpChatProvider(std::string base_url, std::string api_key, int timeout_seconds)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

std::string HttpChatProvider::complete(const ChatRequest& req) {
  httplib::Client client(base_url_);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  json body;
  body["model"] = req.model_id;
  body["messages"] = json::array({json{{"role", "user"}, {"content", req.prompt}}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;

  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw DataError("chat provider unreachable: " + base_url_);
  if (res->status == 429) throw DataError("chat provider rate-limited (429)");
  if (res->status != 200)
    throw DataError("chat provider returned status " + std::to_string(res->status) + ": " +
                    res->body.substr(0, 200));
  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
    throw DataError("chat provider reply missing choices");
  return reply["choices"][0]["message"]["content"].get<std::string>();
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

std::string ResponseCache::path_for(const std::string& key) const {
  return dir_ + "/" + key.substr(0, 2) + "/" + key + ".json";
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("reply")) return std::nullopt;
  return j["reply"].get<std::string>();
}

void ResponseCache::put(const std::string& key, const ChatRequest& req,
                        const std::string& reply) {
  json j;
  j["model_id"] = req.model_id;
  j["temperature"] = req.temperature;
  j["salt"] = req.salt;
  j["prompt_sha256"] = util::sha256_hex(req.prompt);
  j["reply"] = reply;
  util::write_text_file_atomic(path_for(key), j.dump(2) + "\n");
}

ChatClient::ChatClient(std::shared_ptr<ChatProvider> provider,
                       std::shared_ptr<ResponseCache> cache, ChatClientOptions opts)
    : provider_(std::move(provider)), cache_(std::move(cache)), opts_(opts) {}

std::string ChatClient::chat(const ChatRequest& req) {
  std::string key = req.cache_key();
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  {
    std::unique_lock lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return in_flight_ < opts_.max_in_flight; });
    ++in_flight_;
  }
  struct SlotRelease {
    ChatClient* c;
    ~SlotRelease() {
      std::lock_guard lock(c->slot_mutex_);
      --c->in_flight_;
      c->slot_cv_.notify_one();
    }
  } release{this};

  std::string reply;
  int backoff = opts_.backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      provider_calls_.fetch_add(1);
      reply = provider_->complete(req);
      break;
    } catch (const std::exception& e) {
      if (attempt >= opts_.max_retries)
        throw DataError("chat failed after " + std::to_string(attempt) +
                        " attempts: " + e.what());
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  if (cache_) cache_->put(key, req, reply);
  return reply;
}

namespace {

std::string truncated(const std::string& text, size_t budget) {
  if (text.size() <= budget) return text;
  return text.substr(0, budget) + "...";
}

}  // namespace

std::string build_annotation_prompt(const Mashup& mashup, const std::vector<WebApi>& targets,
                                    size_t description_budget) {
  if (targets.empty())
    throw std::invalid_argument("build_annotation_prompt: targets must be non-empty");
  std::string names;
  std::string descs;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (i) {
      names += ", ";
      descs += "; ";
    }
    names += targets[i].api_id;
    descs += targets[i].api_id + ": " + truncated(targets[i].description, description_budget);
  }
  std::string p;
  p += "API Recommendation Reasoning Task\n";
  p += "Reason in English, concisely and accurately explain why the mashup uses each target "
       "API, based on the descriptions of the mashup and the target APIs.\n";
  p += "When you mention an API name, wrap it with three asterisks exactly as given in Target "
       "APIs (e.g., ***sendgrid***).\n\n";
  p += "Mashup: " + mashup.requirement + "\n\n";
  p += "Target APIs: " + names + "\n\n";
  p += "Target API Descriptions: " + descs + "\n";
  return p;
}

AnnotationRecord annotate(const Mashup& mashup, const std::vector<WebApi>& targets,
                          ChatClient& client, const std::string& annotator_model,
                          const TokenSpace& space, const AnnotateOptions& opts) {
  AnnotationRecord rec;
  rec.mashup_id = mashup.mashup_id;
  for (const auto& t : targets) rec.target_apis.push_back(t.api_id);
  rec.annotator_model = annotator_model;

  std::string prompt = build_annotation_prompt(mashup, targets);
  for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
    ChatRequest req{annotator_model, prompt, opts.temperature, opts.max_tokens,
                    attempt == 1 ? std::string() : "attempt:" + std::to_string(attempt)};
    std::string reply = client.chat(req);
    MarkerRewrite rewritten = rewrite_markers(reply, space);
    rec.rationale = rewritten.text;
    rec.attempts = attempt;

    bool covered = true;
    for (const auto& t : targets) {
      std::string surface = "<API_" + t.api_id + ">";
      if (rec.rationale.find(surface) == std::string::npos) {
        covered = false;
        break;
      }
    }
    if (covered) {
      rec.valid = true;
      break;
    }
  }
  return rec;
}

std::string build_judge_prompt(const Mashup& mashup, const std::vector<std::string>& api_list,
                               const std::map<std::string, std::string>& reasons,
                               const ApiRepository& repo, size_t description_budget) {
  if (api_list.empty())
    throw std::invalid_argument("build_judge_prompt: recommendation must contain >= 1 API");
  std::string names, descs;
  for (size_t i = 0; i < api_list.size(); ++i) {
    if (i) {
      names += ", ";
      descs += "; ";
    }
    names += api_list[i];
    std::string d = repo.contains(api_list[i]) ? repo.at(api_list[i]).description : "";
    descs += api_list[i] + ": " + truncated(d, description_budget);
  }
  std::string reason_text;
  for (const auto& api : api_list) {
    auto it = reasons.find(api);
    if (it == reasons.end() || it->second.empty()) continue;
    if (!reason_text.empty()) reason_text += " ";
    reason_text += "<API_" + api + "> : " + it->second;
  }
  if (reason_text.empty()) reason_text = "(no reasons were provided)";

  std::string p;
  p += "API Reason Evaluation Task\n";
  p += "You are given a mashup description, recommended APIs, their corresponding descriptions, "
       "and the reason for the recommendation. You are asked to evaluate the reason for the "
       "recommendation and give a score ranging from 0 to 1 by analyzing:\n";
  p += "(1) How well the reason aligns with the mashup requirements\n";
  p += "(2) How well the reason aligns with the API descriptions\n";
  p += "(3) The overall quality and accuracy of the reason\n";
  p += "The final score should be the average assessment of all the recommended APIs. If any API "
       "doesn't have a reason, it should be given 0 definitely. The API names in the reason are "
       "already enclosed in angle brackets as given in Recommended APIs, for example: "
       "<API_sendgrid>.\n";
  p += "Please provide only the numerical score (0 to 1) as your response.\n\n";
  p += "Mashup: " + mashup.requirement + "\n";
  p += "Recommended APIs: " + names + "\n";
  p += "Recommended APIs Description: " + descs + "\n";
  p += "Reason: " + reason_text + "\n";
  return p;
}

std::optional<double> parse_first_number(const std::string& text) {
  static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
  std::smatch m;
  if (std::regex_search(text, m, number)) return std::stod(m.str());
  return std::nullopt;
}

JudgeVerdict judge_rs(const Mashup& mashup, const std::vector<std::string>& api_list,
                      const std::map<std::string, std::string>& reasons, const ApiRepository& repo,
                      ChatClient& client, const std::string& judge_model) {
  JudgeVerdict v;
  v.mashup_id = mashup.mashup_id;
  v.judge_model = judge_model;
  std::string prompt = build_judge_prompt(mashup, api_list, reasons, repo);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    ChatRequest req{judge_model, prompt, 0.0, 64,
                    attempt == 1 ? std::string() : "attempt:" + std::to_string(attempt)};
    v.raw_reply = client.chat(req);
    if (auto num = parse_first_number(v.raw_reply)) {
      v.score = std::min(1.0, std::max(0.0, *num));
      v.valid = true;
      return v;
    }
  }
  v.valid = false;
  return v;
}

RsAggregate aggregate_rs(const std::vector<JudgeVerdict>& verdicts) {
  std::map<std::string, std::pair<double, size_t>> sums;
  for (const auto& v : verdicts) {
    if (!v.valid) continue;
    auto& [sum, n] = sums[v.judge_model];
    sum += v.score;
    ++n;
  }
  if (sums.empty()) throw DataError("aggregate_rs: no valid verdicts");
  RsAggregate agg;
  double total = 0;
  for (const auto& [judge, sn] : sums) {
    double mean = sn.first / static_cast<double>(sn.second);
    agg.per_judge[judge] = mean;
    total += mean;
  }
  agg.overall = total / static_cast<double>(agg.per_judge.size());
  return agg;
}

std::string annotations_to_jsonl(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["mashup_id"] = r.mashup_id;
    j["target_apis"] = r.target_apis;
    j["rationale"] = r.rationale;
    j["annotator_model"] = r.annotator_model;
    j["valid"] = r.valid;
    j["attempts"] = r.attempts;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<AnnotationRecord> annotations_from_jsonl(const std::string& text) {
  std::vector<AnnotationRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    json j = json::parse(line);
    AnnotationRecord r;
    r.mashup_id = j.at("mashup_id").get<std::string>();
    r.target_apis = j.at("target_apis").get<std::vector<std::string>>();
    r.rationale = j.at("rationale").get<std::string>();
    r.annotator_model = j.at("annotator_model").get<std::string>();
    r.valid = j.at("valid").get<bool>();
    r.attempts = j.at("attempts").get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace apirec
