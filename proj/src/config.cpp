#include "apirec/config.hpp"

#include <cstdlib>

#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

namespace {

std::string positional_name(Positional p) {
  return p == Positional::Rotary ? "rotary" : "learned";
}

std::string decode_mode_name(DecodeMode m) { return m == DecodeMode::Sample ? "sample" : "greedy"; }

std::string kl_name(KlEstimator k) { return k == KlEstimator::Exact ? "exact" : "unbiased"; }

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["data"] = {{"apis", apis_path}, {"mashups", mashups_path}};
  j["cache_dir"] = cache_dir;
  j["backbone"] = {{"layers", backbone.layers},
                   {"heads", backbone.heads},
                   {"hidden_dim", backbone.hidden_dim},
                   {"context_length", backbone.context_length},
                   {"positional", positional_name(backbone.positional)},
                   {"tie_embeddings", backbone.tie_embeddings}};
  j["lora"] = {{"rank", lora.rank},
               {"scale", lora.scale},
               {"target_sites",
                std::vector<std::string>(lora.target_sites.begin(), lora.target_sites.end())}};
  j["sft"] = {{"learning_rate", sft.learning_rate},
              {"epochs", sft.epochs},
              {"batch_size", sft.batch_size},
              {"weight_decay", sft.weight_decay},
              {"warmup_fraction", sft.warmup_fraction},
              {"max_sequence_length", sft.max_sequence_length},
              {"save_every", sft.save_every}};
  j["grpo"] = {{"learning_rate", grpo.learning_rate},
               {"epochs", grpo.epochs},
               {"group_size", grpo.group_size},
               {"clip_epsilon", grpo.clip_epsilon},
               {"kl_beta", grpo.kl_beta},
               {"rollout_temperature", grpo.rollout_temperature},
               {"kl_estimator", kl_name(grpo.kl_estimator)},
               {"max_new_tokens", grpo.max_new_tokens},
               {"kl_halt_ceiling", grpo.kl_halt_ceiling},
               {"save_every", grpo.save_every}};
  j["decode"] = {{"mode", decode_mode_name(decode.mode)},
                 {"temperature", decode.temperature},
                 {"max_new_tokens", decode.max_new_tokens}};
  j["weights"] = {{"f1", weights.f1},       {"precision", weights.precision},
                  {"recall", weights.recall}, {"ndcg", weights.ndcg},
                  {"ap", weights.ap},       {"rp", weights.rp},
                  {"rr", weights.rr}};
  j["annotator"] = {{"provider", annotator.provider},
                    {"model", annotator.model},
                    {"base_url", annotator.base_url},
                    {"api_key", annotator.api_key},
                    {"temperature", annotator.temperature},
                    {"max_attempts", annotator.max_attempts},
                    {"max_tokens", annotator.max_tokens},
                    {"concurrency", annotator.concurrency}};
  j["judge"] = {{"provider", judge.provider},
                {"models", judge.models},
                {"base_url", judge.base_url},
                {"api_key", judge.api_key}};
  j["ablations"] = {{"skip_grpo", ablations.skip_grpo},
                    {"no_special_tokens", ablations.no_special_tokens},
                    {"recommendation_only", ablations.recommendation_only}};
  return j.dump(2) + "\n";
}

std::string ExperimentConfig::digest() const { return util::sha256_hex(to_json()); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("data")) {
    c.apis_path = j["data"].value("apis", c.apis_path);
    c.mashups_path = j["data"].value("mashups", c.mashups_path);
  }
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  if (j.contains("backbone")) {
    const auto& b = j["backbone"];
    c.backbone.layers = b.value("layers", c.backbone.layers);
    c.backbone.heads = b.value("heads", c.backbone.heads);
    c.backbone.hidden_dim = b.value("hidden_dim", c.backbone.hidden_dim);
    c.backbone.context_length = b.value("context_length", c.backbone.context_length);
    c.backbone.positional = b.value("positional", "learned") == std::string("rotary")
                                ? Positional::Rotary
                                : Positional::Learned;
    c.backbone.tie_embeddings = b.value("tie_embeddings", true);
  }
  if (j.contains("lora")) {
    const auto& l = j["lora"];
    c.lora.rank = l.value("rank", c.lora.rank);
    c.lora.scale = l.value("scale", c.lora.scale);
    if (l.contains("target_sites")) {
      auto sites = l["target_sites"].get<std::vector<std::string>>();
      c.lora.target_sites = std::set<std::string>(sites.begin(), sites.end());
    }
  }
  if (j.contains("sft")) {
    const auto& s = j["sft"];
    c.sft.learning_rate = s.value("learning_rate", c.sft.learning_rate);
    c.sft.epochs = s.value("epochs", c.sft.epochs);
    c.sft.batch_size = s.value("batch_size", c.sft.batch_size);
    c.sft.weight_decay = s.value("weight_decay", c.sft.weight_decay);
    c.sft.warmup_fraction = s.value("warmup_fraction", c.sft.warmup_fraction);
    c.sft.max_sequence_length = s.value("max_sequence_length", c.sft.max_sequence_length);
    c.sft.save_every = s.value("save_every", c.sft.save_every);
  }
  c.sft.seed = c.seed;
  if (j.contains("grpo")) {
    const auto& g = j["grpo"];
    c.grpo.learning_rate = g.value("learning_rate", c.grpo.learning_rate);
    c.grpo.epochs = g.value("epochs", c.grpo.epochs);
    c.grpo.group_size = g.value("group_size", c.grpo.group_size);
    c.grpo.clip_epsilon = g.value("clip_epsilon", c.grpo.clip_epsilon);
    c.grpo.kl_beta = g.value("kl_beta", c.grpo.kl_beta);
    c.grpo.rollout_temperature = g.value("rollout_temperature", c.grpo.rollout_temperature);
    c.grpo.kl_estimator = g.value("kl_estimator", "unbiased") == std::string("exact")
                              ? KlEstimator::Exact
                              : KlEstimator::Unbiased;
    c.grpo.max_new_tokens = g.value("max_new_tokens", c.grpo.max_new_tokens);
    c.grpo.kl_halt_ceiling = g.value("kl_halt_ceiling", c.grpo.kl_halt_ceiling);
    c.grpo.save_every = g.value("save_every", c.grpo.save_every);
  }
  c.grpo.seed = c.seed;
  if (j.contains("decode")) {
    const auto& d = j["decode"];
    c.decode.mode =
        d.value("mode", "greedy") == std::string("sample") ? DecodeMode::Sample : DecodeMode::Greedy;
    c.decode.temperature = d.value("temperature", c.decode.temperature);
    c.decode.max_new_tokens = d.value("max_new_tokens", c.decode.max_new_tokens);
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.f1 = w.value("f1", c.weights.f1);
    c.weights.precision = w.value("precision", c.weights.precision);
    c.weights.recall = w.value("recall", c.weights.recall);
    c.weights.ndcg = w.value("ndcg", c.weights.ndcg);
    c.weights.ap = w.value("ap", c.weights.ap);
    c.weights.rp = w.value("rp", c.weights.rp);
    c.weights.rr = w.value("rr", c.weights.rr);
  }
  if (j.contains("annotator")) {
    const auto& a = j["annotator"];
    c.annotator.provider = a.value("provider", c.annotator.provider);
    c.annotator.model = a.value("model", c.annotator.model);
    c.annotator.base_url = a.value("base_url", c.annotator.base_url);
    c.annotator.api_key = a.value("api_key", c.annotator.api_key);
    c.annotator.temperature = a.value("temperature", c.annotator.temperature);
    c.annotator.max_attempts = a.value("max_attempts", c.annotator.max_attempts);
    c.annotator.max_tokens = a.value("max_tokens", c.annotator.max_tokens);
    c.annotator.concurrency = a.value("concurrency", c.annotator.concurrency);
  }
  if (j.contains("judge")) {
    const auto& g = j["judge"];
    c.judge.provider = g.value("provider", c.judge.provider);
    c.judge.models = g.value("models", c.judge.models);
    c.judge.base_url = g.value("base_url", c.judge.base_url);
    c.judge.api_key = g.value("api_key", c.judge.api_key);
  }
  if (j.contains("ablations")) {
    const auto& a = j["ablations"];
    c.ablations.skip_grpo = a.value("skip_grpo", false);
    c.ablations.no_special_tokens = a.value("no_special_tokens", false);
    c.ablations.recommendation_only = a.value("recommendation_only", false);
  }
  if (!c.weights.sums_valid(1e-9))
    throw UsageError("config: recommendation weights must sum to 1 and rp+rr must sum to 1");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(util::read_text_file(path));
}

std::string resolve_env(const std::string& value) {
  std::string out;
  size_t i = 0;
  while (i < value.size()) {
    if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
      size_t close = value.find('}', i + 2);
      if (close == std::string::npos) throw UsageError("unterminated ${ in config value");
      std::string var = value.substr(i + 2, close - i - 2);
      const char* env = std::getenv(var.c_str());
      if (!env)
        throw UsageError("config references environment variable " + var + " which is not set");
      out += env;
      i = close + 1;
    } else {
      out += value[i++];
    }
  }
  return out;
}

}  // namespace apirec
