#include "apirec/synth.hpp"

#include <random>
#include <sstream>

#include "apirec/util.hpp"

namespace apirec {

namespace {

const char* kKeywords[] = {"maps",  "mail",   "chat",  "pay",     "video",  "music",  "photo",
                           "news",  "stock",  "food",  "hotel",   "taxi",   "game",   "book",
                           "sport", "crypto", "cloud", "weather", "social", "search", "travel",
                           "audio", "health", "login"};

std::string keyword_of_api(const std::string& api_id) {
  auto dash = api_id.find('-');
  return dash == std::string::npos ? api_id : api_id.substr(0, dash);
}

}  // namespace

SynthCorpus make_synthetic_corpus(const SynthSpec& spec) {
  const int max_named = static_cast<int>(sizeof(kKeywords) / sizeof(kKeywords[0]));
  if (spec.n_apis < 2 || spec.n_apis > max_named)
    throw std::invalid_argument("synthetic corpus supports 2.." + std::to_string(max_named) +
                                " APIs");
  SynthCorpus corpus;
  for (int i = 0; i < spec.n_apis; ++i) {
    WebApi api;
    std::string kw = kKeywords[i];
    api.api_id = kw + "-api";
    api.description = "the " + kw + " api exposes " + kw +
                      " data and operations through a simple web endpoint";
    api.categories = {kw};
    corpus.repo.index[api.api_id] = corpus.repo.apis.size();
    corpus.repo.apis.push_back(std::move(api));
  }

  std::mt19937_64 rng(spec.seed);
  for (int i = 0; i < spec.n_mashups; ++i) {
    Mashup m;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-mashup-%04d", i);
    m.mashup_id = idbuf;
    int k = 1 + static_cast<int>(util::rng_below(rng, spec.max_apis_per_mashup));
    std::vector<int> picks;
    while (static_cast<int>(picks.size()) < k) {
      int cand = static_cast<int>(util::rng_below(rng, spec.n_apis));
      bool dup = false;
      for (int p : picks) dup = dup || p == cand;
      if (!dup) picks.push_back(cand);
    }
    std::string names;
    for (size_t p = 0; p < picks.size(); ++p) {
      const auto& api = corpus.repo.apis[picks[p]];
      m.invoked_apis.push_back(api.api_id);
      if (p) names += " and ";
      names += api.api_id;
    }
    if (spec.tagged_requirements) {
      char tag[8];
      std::snprintf(tag, sizeof(tag), "z%02d", i);
      m.requirement = std::string("client ") + tag + " wants " + names;
    } else {
      m.requirement = "an app combining " + names;
    }
    m.categories = {"synthetic"};
    corpus.mashups.push_back(std::move(m));
  }
  return corpus;
}

std::shared_ptr<ChatProvider> make_scripted_annotator() {
  auto fn = [](const ChatRequest& req) -> std::string {
    std::istringstream in(req.prompt);
    std::string line, targets;
    while (std::getline(in, line)) {
      if (line.rfind("Target APIs: ", 0) == 0) {
        targets = line.substr(13);
        break;
      }
    }
    if (targets.empty()) return "no targets found";
    std::string reply;
    std::string name;
    std::istringstream ts(targets);
    while (std::getline(ts, name, ',')) {
      name = util::trim(name);
      if (name.empty()) continue;
      std::string kw = keyword_of_api(name);
      if (!reply.empty()) reply += " ";
      reply += "***" + name + "*** covers " + kw + ".";
    }
    return reply;
  };
  return std::make_shared<ScriptedProvider>(fn, "scripted-annotator");
}

std::shared_ptr<ChatProvider> make_scripted_judge() {
  auto fn = [](const ChatRequest& req) -> std::string {
    std::istringstream in(req.prompt);
    std::string line, apis_line, reason_line;
    while (std::getline(in, line)) {
      if (line.rfind("Recommended APIs: ", 0) == 0) apis_line = line.substr(18);
      if (line.rfind("Reason: ", 0) == 0) reason_line = line.substr(8);
    }
    if (apis_line.empty()) return "0";
    std::vector<std::string> apis;
    std::istringstream as(apis_line);
    std::string name;
    while (std::getline(as, name, ',')) {
      name = util::trim(name);
      if (!name.empty()) apis.push_back(name);
    }
    if (apis.empty()) return "0";
    size_t reasoned = 0;
    for (const auto& api : apis) {
      std::string tag = "<API_" + api + "> :";
      size_t pos = reason_line.find(tag);
      if (pos != std::string::npos && reason_line.size() > pos + tag.size() + 1) ++reasoned;
    }
    double score = static_cast<double>(reasoned) / static_cast<double>(apis.size());
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", score);
    return buf;
  };
  return std::make_shared<ScriptedProvider>(fn, "scripted-judge");
}

}  // namespace apirec
