#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "apirec/util.hpp"

// Corpus registry: ingest, validate, split, and summarize the mashup/API
// dataset. Dataset files are JSONL, one record per line; APIs carry
// name/description/categories, mashups additionally related_apis.

namespace apirec {

struct WebApi {
  std::string api_id;  // normalized: lowercase, hyphenated
  std::string description;
  std::vector<std::string> categories;
  std::map<std::string, std::string> meta;
};

struct Mashup {
  std::string mashup_id;
  std::string requirement;  // free-text description
  std::vector<std::string> categories;
  std::vector<std::string> invoked_apis;  // ordered, duplicate-free, all resolvable
  std::map<std::string, std::string> meta;
};

struct CorpusSplit {
  std::vector<std::string> train, validation, test;
  uint64_t seed = 0;
};

struct DatasetStats {
  size_t api_count = 0;
  size_t mashup_count = 0;
  size_t category_count = 0;
  double apis_per_mashup = 0;
  double words_per_mashup_desc = 0;
  double words_per_api_desc = 0;
};

struct RecordIssue {
  size_t line = 0;          // 1-based source line
  std::string entity;       // api or mashup name when known
  std::string message;
};

struct ApiRepository {
  std::vector<WebApi> apis;                       // source order
  std::unordered_map<std::string, size_t> index;  // api_id -> position
  std::vector<RecordIssue> issues;

  bool contains(const std::string& api_id) const { return index.count(api_id) != 0; }
  const WebApi& at(const std::string& api_id) const;
};

struct MashupIngest {
  std::vector<Mashup> mashups;
  std::vector<RecordIssue> issues;    // dropped references, skipped records
  std::vector<std::string> excluded;  // mashup ids left with zero resolvable APIs
};

// Throws DataError on duplicate api_id after normalization; records with an
// empty description are skipped and reported.
ApiRepository ingest_repository(const std::string& path);
ApiRepository ingest_repository_text(const std::string& jsonl, const std::string& origin);

MashupIngest ingest_mashups(const std::string& path, const ApiRepository& repo);
MashupIngest ingest_mashups_text(const std::string& jsonl, const std::string& origin,
                                 const ApiRepository& repo);

// 3:1:1 split over shuffled mashup ids: |validation| = |test| = floor(N/5),
// train keeps the remainder. Throws DataError when N < 5.
CorpusSplit split_corpus(const std::vector<Mashup>& mashups, uint64_t seed);
CorpusSplit split_ids(std::vector<std::string> mashup_ids, uint64_t seed);

DatasetStats compute_stats(const ApiRepository& repo, const std::vector<Mashup>& mashups);

std::string split_to_json(const CorpusSplit& split);
CorpusSplit split_from_json(const std::string& text);

std::string repository_to_jsonl(const ApiRepository& repo);
std::string mashups_to_jsonl(const std::vector<Mashup>& mashups);

// Free text from dataset records may contain the reserved token surfaces;
// ingestion rewrites their opening bracket so they can never alias a real
// control token downstream.
std::string escape_reserved_surfaces(const std::string& text, size_t* replaced = nullptr);

}  // namespace apirec
