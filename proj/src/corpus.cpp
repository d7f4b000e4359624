#include "apirec/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

using nlohmann::json;

namespace {

constexpr const char* kReservedSurfaces[] = {"<API_start>", "<API_stop>", "<REASON_start>",
                                             "<REASON_stop>", "<API_"};

std::map<std::string, std::string> collect_meta(const json& rec,
                                                const std::set<std::string>& known) {
  std::map<std::string, std::string> meta;
  for (auto it = rec.begin(); it != rec.end(); ++it) {
    if (known.count(it.key())) continue;
    if (it.value().is_string())
      meta[it.key()] = it.value().get<std::string>();
    else
      meta[it.key()] = it.value().dump();
  }
  return meta;
}

std::vector<std::string> string_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v)
      if (e.is_string()) out.push_back(e.get<std::string>());
  } else if (v.is_string()) {
    // Tolerate comma-separated category exports.
    std::istringstream ss(v.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = util::trim(item);
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

void for_each_jsonl(const std::string& text, const std::string& origin,
                    const std::function<void(size_t, const json&)>& fn,
                    std::vector<RecordIssue>& issues) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    json rec = json::parse(trimmed, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      issues.push_back({lineno, "", origin + ": line is not a JSON object"});
      continue;
    }
    fn(lineno, rec);
  }
}

}  // namespace

const WebApi& ApiRepository::at(const std::string& api_id) const {
  auto it = index.find(api_id);
  if (it == index.end()) throw DataError("unknown api_id: " + api_id);
  return apis[it->second];
}

std::string escape_reserved_surfaces(const std::string& text, size_t* replaced) {
  std::string out;
  out.reserve(text.size());
  size_t count = 0;
  for (size_t i = 0; i < text.size();) {
    bool hit = false;
    if (text[i] == '<') {
      for (const char* s : kReservedSurfaces) {
        size_t len = std::char_traits<char>::length(s);
        if (text.compare(i, len, s) == 0) {
          hit = true;
          break;
        }
      }
    }
    if (hit) {
      out += "‹";  // single left angle quote stands in for '<'
      ++count;
      ++i;
    } else {
      out += text[i++];
    }
  }
  if (replaced) *replaced = count;
  return out;
}

ApiRepository ingest_repository_text(const std::string& jsonl, const std::string& origin) {
  ApiRepository repo;
  for_each_jsonl(
      jsonl, origin,
      [&](size_t lineno, const json& rec) {
        std::string raw_name = rec.value("name", "");
        std::string api_id = util::normalize_name(raw_name);
        if (api_id.empty()) {
          repo.issues.push_back({lineno, raw_name, "api name empty after normalization"});
          return;
        }
        std::string desc = util::trim(rec.value("description", ""));
        if (desc.empty()) {
          repo.issues.push_back({lineno, api_id, "api has empty description; record skipped"});
          return;
        }
        if (repo.index.count(api_id)) {
          throw DataError(origin + ": duplicate api_id '" + api_id + "' at line " +
                          std::to_string(lineno) + " (collides with earlier record '" +
                          repo.apis[repo.index[api_id]].api_id + "')");
        }
        WebApi api;
        api.api_id = api_id;
        api.description = escape_reserved_surfaces(desc);
        api.categories = string_list(rec.value("categories", json::array()));
        api.meta = collect_meta(rec, {"name", "description", "categories"});
        repo.index[api_id] = repo.apis.size();
        repo.apis.push_back(std::move(api));
      },
      repo.issues);
  return repo;
}

ApiRepository ingest_repository(const std::string& path) {
  return ingest_repository_text(util::read_text_file(path), path);
}

MashupIngest ingest_mashups_text(const std::string& jsonl, const std::string& origin,
                                 const ApiRepository& repo) {
  MashupIngest out;
  size_t anon = 0;
  for_each_jsonl(
      jsonl, origin,
      [&](size_t lineno, const json& rec) {
        std::string raw_name = rec.value("name", "");
        std::string mashup_id = util::normalize_name(raw_name);
        if (mashup_id.empty()) mashup_id = "mashup-" + std::to_string(++anon);
        std::string desc = util::trim(rec.value("description", ""));
        if (desc.empty()) {
          out.issues.push_back({lineno, mashup_id, "mashup has empty description; skipped"});
          return;
        }
        Mashup m;
        m.mashup_id = mashup_id;
        m.requirement = escape_reserved_surfaces(desc);
        m.categories = string_list(rec.value("categories", json::array()));
        m.meta = collect_meta(rec, {"name", "description", "categories", "related_apis"});

        std::set<std::string> seen;
        for (const std::string& ref : string_list(rec.value("related_apis", json::array()))) {
          std::string api_id = util::normalize_name(ref);
          if (!repo.contains(api_id)) {
            out.issues.push_back(
                {lineno, mashup_id, "unresolvable api reference '" + ref + "' dropped"});
            continue;
          }
          if (!seen.insert(api_id).second) continue;  // dedupe, keep first
          m.invoked_apis.push_back(api_id);
        }
        if (m.invoked_apis.empty()) {
          out.excluded.push_back(mashup_id);
          out.issues.push_back({lineno, mashup_id, "excluded: no resolvable invoked APIs"});
          return;
        }
        out.mashups.push_back(std::move(m));
      },
      out.issues);
  return out;
}

MashupIngest ingest_mashups(const std::string& path, const ApiRepository& repo) {
  return ingest_mashups_text(util::read_text_file(path), path, repo);
}

CorpusSplit split_ids(std::vector<std::string> ids, uint64_t seed) {
  size_t n = ids.size();
  if (n < 5) throw DataError("split requires at least 5 mashups, got " + std::to_string(n));
  std::mt19937_64 rng(seed);
  util::seeded_shuffle(ids, rng);
  size_t holdout = n / 5;
  size_t train_n = n - 2 * holdout;
  CorpusSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + train_n);
  split.validation.assign(ids.begin() + train_n, ids.begin() + train_n + holdout);
  split.test.assign(ids.begin() + train_n + holdout, ids.end());
  return split;
}

CorpusSplit split_corpus(const std::vector<Mashup>& mashups, uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(mashups.size());
  for (const auto& m : mashups) ids.push_back(m.mashup_id);
  return split_ids(std::move(ids), seed);
}

DatasetStats compute_stats(const ApiRepository& repo, const std::vector<Mashup>& mashups) {
  if (repo.apis.empty() || mashups.empty()) throw DataError("compute_stats: empty corpus");
  DatasetStats s;
  s.api_count = repo.apis.size();
  s.mashup_count = mashups.size();
  std::set<std::string> categories;
  double api_words = 0;
  for (const auto& a : repo.apis) {
    categories.insert(a.categories.begin(), a.categories.end());
    api_words += static_cast<double>(util::split_whitespace(a.description).size());
  }
  double mashup_words = 0, apis_total = 0;
  for (const auto& m : mashups) {
    categories.insert(m.categories.begin(), m.categories.end());
    mashup_words += static_cast<double>(util::split_whitespace(m.requirement).size());
    apis_total += static_cast<double>(m.invoked_apis.size());
  }
  s.category_count = categories.size();
  s.apis_per_mashup = apis_total / static_cast<double>(mashups.size());
  s.words_per_mashup_desc = mashup_words / static_cast<double>(mashups.size());
  s.words_per_api_desc = api_words / static_cast<double>(repo.apis.size());
  return s;
}

std::string split_to_json(const CorpusSplit& split) {
  json j;
  j["seed"] = split.seed;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  return j.dump(2) + "\n";
}

CorpusSplit split_from_json(const std::string& text) {
  json j = json::parse(text);
  CorpusSplit split;
  split.seed = j.at("seed").get<uint64_t>();
  split.train = j.at("train").get<std::vector<std::string>>();
  split.validation = j.at("validation").get<std::vector<std::string>>();
  split.test = j.at("test").get<std::vector<std::string>>();
  return split;
}

std::string repository_to_jsonl(const ApiRepository& repo) {
  std::string out;
  for (const auto& a : repo.apis) {
    json j;
    j["name"] = a.api_id;
    j["description"] = a.description;
    j["categories"] = a.categories;
    for (const auto& [k, v] : a.meta) j[k] = v;
    out += j.dump() + "\n";
  }
  return out;
}

std::string mashups_to_jsonl(const std::vector<Mashup>& mashups) {
  std::string out;
  for (const auto& m : mashups) {
    json j;
    j["name"] = m.mashup_id;
    j["description"] = m.requirement;
    j["categories"] = m.categories;
    j["related_apis"] = m.invoked_apis;
    for (const auto& [k, v] : m.meta) j[k] = v;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace apirec
