#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "apirec/corpus.hpp"
#include "apirec/vocab.hpp"

// Gateway to external chat-completion models for rationale annotation and
// Reasoning Score judging: disk-cached, retry-bounded, provider-pluggable.

namespace apirec {

struct ChatRequest {
  std::string model_id;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
  // Distinguishes re-sampling attempts of an otherwise identical request so a
  // warm cache can replay a whole annotation run without provider calls.
  std::string salt;

  std::string cache_key() const;  // digest of (model_id, prompt, temperature[, salt])
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const ChatRequest& req) = 0;  // throws DataError on failure
  virtual std::string name() const = 0;
};

// OpenAI-style /v1/chat/completions endpoint.
class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(std::string base_url, std::string api_key, int timeout_seconds = 120);
  std::string complete(const ChatRequest& req) override;
  std::string name() const override { return "http:" + base_url_; }

 private:
  std::string base_url_;
  std::string api_key_;
  int timeout_seconds_;
};

// Deterministic in-process provider for tests and offline runs.
class ScriptedProvider final : public ChatProvider {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit ScriptedProvider(Fn fn, std::string label = "scripted")
      : fn_(std::move(fn)), label_(std::move(label)) {}
  std::string complete(const ChatRequest& req) override { return fn_(req); }
  std::string name() const override { return label_; }

 private:
  Fn fn_;
  std::string label_;
};

// One file per cache key under dir/<k[0..1]>/<key>.json. Writers go through a
// temp file + rename, so concurrent writers of the same key are safe.
class ResponseCache {
 public:
  explicit ResponseCache(std::string dir);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const ChatRequest& req, const std::string& reply);
  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& key) const;
  std::string dir_;
};

struct ChatClientOptions {
  int max_retries = 3;       // transport retries per request
  int backoff_ms = 250;      // doubled per retry
  int max_in_flight = 4;     // bounded concurrent provider calls
};

class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatProvider> provider, std::shared_ptr<ResponseCache> cache,
             ChatClientOptions opts = {});
  // Cache hit returns immediately; otherwise calls the provider with bounded
  // retries and stores the reply. Thread-safe.
  std::string chat(const ChatRequest& req);
  size_t provider_calls() const { return provider_calls_.load(); }
  size_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<ChatProvider> provider_;
  std::shared_ptr<ResponseCache> cache_;
  ChatClientOptions opts_;
  std::atomic<size_t> provider_calls_{0};
  std::atomic<size_t> cache_hits_{0};
  std::mutex slot_mutex_;
  std::condition_variable_any slot_cv_;
  int in_flight_ = 0;
};

struct AnnotationRecord {
  std::string mashup_id;
  std::vector<std::string> target_apis;
  std::string rationale;  // marker-rewritten
  std::string annotator_model;
  bool valid = false;
  int attempts = 0;
};

struct JudgeVerdict {
  std::string mashup_id;
  std::string judge_model;
  double score = 0.0;
  bool valid = false;
  std::string raw_reply;
};

// Table-1-shaped annotation prompt: task header, marker instruction, mashup
// description, target API names, and each target's (truncated) description.
std::string build_annotation_prompt(const Mashup& mashup, const std::vector<WebApi>& targets,
                                    size_t description_budget = 1500);

struct AnnotateOptions {
  int max_attempts = 3;
  double temperature = 0.7;
  int max_tokens = 1024;
};

// Requests a rationale until every target API token appears after marker
// rewriting, or attempts run out (valid=false, never throws for coverage).
AnnotationRecord annotate(const Mashup& mashup, const std::vector<WebApi>& targets,
                          ChatClient& client, const std::string& annotator_model,
                          const TokenSpace& space, const AnnotateOptions& opts = {});

// Table-4-shaped judging prompt over a parsed recommendation.
std::string build_judge_prompt(const Mashup& mashup, const std::vector<std::string>& api_list,
                               const std::map<std::string, std::string>& reasons,
                               const ApiRepository& repo, size_t description_budget = 1500);

// Scores one recommendation; parses the first real number of the reply and
// clamps to [0,1]. One retry on an unparseable reply, then valid=false.
JudgeVerdict judge_rs(const Mashup& mashup, const std::vector<std::string>& api_list,
                      const std::map<std::string, std::string>& reasons, const ApiRepository& repo,
                      ChatClient& client, const std::string& judge_model);

struct RsAggregate {
  std::map<std::string, double> per_judge;
  double overall = 0.0;  // mean of per-judge means
};

// Throws DataError when no valid verdicts exist.
RsAggregate aggregate_rs(const std::vector<JudgeVerdict>& verdicts);

std::string annotations_to_jsonl(const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> annotations_from_jsonl(const std::string& text);

// First real number in the text, or nullopt.
std::optional<double> parse_first_number(const std::string& text);

}  // namespace apirec
