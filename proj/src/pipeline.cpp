#include "apirec/pipeline.hpp"

#include <filesystem>
#include <iostream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "apirec/eval.hpp"
#include "apirec/grpo.hpp"
#include "apirec/llm.hpp"
#include "apirec/sft.hpp"
#include "apirec/synth.hpp"
#include "apirec/util.hpp"
#include "json.hpp"

namespace apirec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_artifact(const std::string& path, const std::string& stage) {
  if (!fs::exists(path))
    throw DataError("missing artifact " + path + "; run `apirec " + stage + "` first");
}

void guard_output(const std::string& path, bool force) {
  if (fs::exists(path) && !force)
    throw UsageError("output " + path + " already exists for this config digest; pass --force "
                     "to overwrite");
}

std::shared_ptr<ChatProvider> make_provider(const std::string& kind, const std::string& base_url,
                                            const std::string& api_key, bool annotator) {
  if (kind == "scripted") return annotator ? make_scripted_annotator() : make_scripted_judge();
  if (kind == "http")
    return std::make_shared<HttpChatProvider>(resolve_env(base_url), resolve_env(api_key));
  throw UsageError("unknown provider kind: " + kind + " (expected scripted or http)");
}

const ByteTokenizer& base_tokenizer() {
  static ByteTokenizer tok;
  return tok;
}

TokenSpace load_vocabulary(const RunPaths& paths) {
  require_artifact(paths.vocabulary(), "train-sft");
  return TokenSpace::from_json(util::read_text_file(paths.vocabulary()), base_tokenizer());
}

CorpusSplit load_split(const RunPaths& paths) {
  require_artifact(paths.split(), "split");
  return split_from_json(util::read_text_file(paths.split()));
}

}  // namespace

RunPaths find_or_create_run_dir(const ExperimentConfig& cfg, const std::string& out_root) {
  std::string digest12 = cfg.digest().substr(0, 12);
  std::string prefix = "run-" + digest12 + "-";
  fs::create_directories(out_root);
  for (const auto& entry : fs::directory_iterator(out_root)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0) return RunPaths{entry.path().string()};
  }
  RunPaths paths{out_root + "/" + prefix + util::timestamp_utc_compact()};
  fs::create_directories(paths.root);
  util::write_text_file_atomic(paths.resolved_config(), cfg.to_json());
  json meta;
  meta["config_digest"] = cfg.digest();
  meta["created_at"] = util::timestamp_utc_compact();
  util::write_text_file_atomic(paths.run_meta(), meta.dump(2) + "\n");
  return paths;
}

LoadedCorpus load_normalized_corpus(const RunPaths& paths) {
  require_artifact(paths.apis(), "ingest");
  require_artifact(paths.mashups(), "ingest");
  LoadedCorpus corpus;
  corpus.repo = ingest_repository(paths.apis());
  corpus.mashups = ingest_mashups(paths.mashups(), corpus.repo).mashups;
  return corpus;
}

std::vector<Mashup> select_split(const std::vector<Mashup>& mashups,
                                 const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const Mashup*> by_id;
  for (const auto& m : mashups) by_id[m.mashup_id] = &m;
  std::vector<Mashup> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("split references unknown mashup_id: " + id);
    out.push_back(*it->second);
  }
  return out;
}

void stage_ingest(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  guard_output(paths.apis(), force);
  ApiRepository repo = ingest_repository(cfg.apis_path);
  MashupIngest mi = ingest_mashups(cfg.mashups_path, repo);

  util::write_text_file_atomic(paths.apis(), repository_to_jsonl(repo));
  util::write_text_file_atomic(paths.mashups(), mashups_to_jsonl(mi.mashups));

  json report;
  report["apis"] = repo.apis.size();
  report["mashups"] = mi.mashups.size();
  report["excluded_mashups"] = mi.excluded;
  json issues = json::array();
  for (const auto& i : repo.issues)
    issues.push_back({{"line", i.line}, {"entity", i.entity}, {"message", i.message}});
  for (const auto& i : mi.issues)
    issues.push_back({{"line", i.line}, {"entity", i.entity}, {"message", i.message}});
  report["issues"] = issues;
  util::write_text_file_atomic(paths.ingest_report(), report.dump(2) + "\n");

  std::cout << "ingested " << repo.apis.size() << " APIs, " << mi.mashups.size() << " mashups ("
            << mi.excluded.size() << " excluded, " << repo.issues.size() + mi.issues.size()
            << " issues)\n";
}

void stage_stats(const ExperimentConfig&, const RunPaths& paths, bool force) {
  guard_output(paths.stats(), force);
  LoadedCorpus corpus = load_normalized_corpus(paths);
  DatasetStats s = compute_stats(corpus.repo, corpus.mashups);
  json j;
  j["api_count"] = s.api_count;
  j["mashup_count"] = s.mashup_count;
  j["category_count"] = s.category_count;
  j["apis_per_mashup"] = s.apis_per_mashup;
  j["words_per_mashup_desc"] = s.words_per_mashup_desc;
  j["words_per_api_desc"] = s.words_per_api_desc;
  util::write_text_file_atomic(paths.stats(), j.dump(2) + "\n");
  std::cout << "Number of APIs               " << s.api_count << "\n"
            << "Number of Mashups            " << s.mashup_count << "\n"
            << "Number of Categories         " << s.category_count << "\n"
            << "APIs per Mashup              " << s.apis_per_mashup << "\n"
            << "Words per Mashup description " << s.words_per_mashup_desc << "\n"
            << "Words per API description    " << s.words_per_api_desc << "\n";
}

void stage_split(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  guard_output(paths.split(), force);
  LoadedCorpus corpus = load_normalized_corpus(paths);
  CorpusSplit split = split_corpus(corpus.mashups, cfg.seed);
  util::write_text_file_atomic(paths.split(), split_to_json(split));
  std::cout << "split " << corpus.mashups.size() << " mashups -> train " << split.train.size()
            << ", validation " << split.validation.size() << ", test " << split.test.size()
            << " (seed " << split.seed << ")\n";
}

void stage_annotate(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  guard_output(paths.annotations(), force);
  LoadedCorpus corpus = load_normalized_corpus(paths);
  CorpusSplit split = load_split(paths);

  TokenSpace space = extend_vocabulary(base_tokenizer(), corpus.repo.apis);
  auto provider = make_provider(cfg.annotator.provider, cfg.annotator.base_url,
                                cfg.annotator.api_key, /*annotator=*/true);
  auto cache = std::make_shared<ResponseCache>(cfg.cache_dir);
  ChatClientOptions copts;
  copts.max_in_flight = cfg.annotator.concurrency;
  ChatClient client(provider, cache, copts);

  std::vector<std::string> target_ids = split.train;
  target_ids.insert(target_ids.end(), split.validation.begin(), split.validation.end());
  std::vector<Mashup> targets = select_split(corpus.mashups, target_ids);

  AnnotateOptions aopts;
  aopts.max_attempts = cfg.annotator.max_attempts;
  aopts.temperature = cfg.annotator.temperature;
  aopts.max_tokens = cfg.annotator.max_tokens;

  std::vector<AnnotationRecord> records(targets.size());
  auto worker = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      std::vector<WebApi> target_apis;
      for (const auto& id : targets[i].invoked_apis) target_apis.push_back(corpus.repo.at(id));
      records[i] = annotate(targets[i], target_apis, client, cfg.annotator.model, space, aopts);
    }
  };
  int threads = std::max(1, cfg.annotator.concurrency);
  if (threads == 1 || targets.size() < 8) {
    worker(0, targets.size());
  } else {
    std::vector<std::thread> pool;
    size_t chunk = (targets.size() + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
      size_t b = w * chunk, e = std::min(targets.size(), b + chunk);
      if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& t : pool) t.join();
  }

  util::write_text_file_atomic(paths.annotations(), annotations_to_jsonl(records));
  size_t valid = 0;
  for (const auto& r : records) valid += r.valid ? 1 : 0;
  json report;
  report["annotated"] = records.size();
  report["valid"] = valid;
  report["provider_calls"] = client.provider_calls();
  report["cache_hits"] = client.cache_hits();
  util::write_text_file_atomic(paths.annotation_report(), report.dump(2) + "\n");
  std::cout << "annotated " << records.size() << " mashups (" << valid << " valid, "
            << client.provider_calls() << " provider calls, " << client.cache_hits()
            << " cache hits)\n";
}

void stage_train_sft(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  guard_output(paths.sft_best(), force);
  LoadedCorpus corpus = load_normalized_corpus(paths);
  CorpusSplit split = load_split(paths);
  TemplateSpec tmpl = cfg.template_spec();

  std::vector<AnnotationLookup> lookups;
  if (tmpl.include_reasons) {
    require_artifact(paths.annotations(), "annotate");
    for (const auto& r : annotations_from_jsonl(util::read_text_file(paths.annotations())))
      lookups.push_back({r.mashup_id, r.rationale, r.valid});
  }

  TokenSpace space = extend_vocabulary(base_tokenizer(), corpus.repo.apis);
  util::write_text_file_atomic(paths.vocabulary(), space.to_json());
  Codec codec(base_tokenizer(), space);

  Policy policy = make_backbone<float>(cfg.backbone, space, cfg.seed);
  mean_init_extended_embeddings(policy, codec);

  RenderedCorpus train = render_corpus(select_split(corpus.mashups, split.train), lookups, codec,
                                       tmpl, cfg.sft.max_sequence_length);
  RenderedCorpus val = render_corpus(select_split(corpus.mashups, split.validation), lookups,
                                     codec, tmpl, cfg.sft.max_sequence_length);
  json render_report;
  render_report["train_rendered"] = train.sequences.size();
  render_report["val_rendered"] = val.sequences.size();
  render_report["dropped"] = train.dropped;
  render_report["val_dropped"] = val.dropped;
  fs::create_directories(paths.sft_dir());
  util::write_text_file_atomic(paths.sft_dir() + "/render_report.json",
                               render_report.dump(2) + "\n");

  std::cout << "training sft on " << train.sequences.size() << " sequences ("
            << train.dropped.size() << " dropped), validating on " << val.sequences.size()
            << "\n";
  SftResult result = train_sft(policy, train.sequences, val.sequences, cfg.sft, paths.sft_dir());
  std::string log;
  for (const auto& line : result.log_lines) {
    log += line + "\n";
    std::cout << line << "\n";
  }
  util::write_text_file_atomic(paths.sft_dir() + "/train_log.txt", log);
  std::cout << "best epoch " << result.best_epoch << " (val loss " << result.best_val_loss
            << "); checkpoints: " << result.best_checkpoint << ", " << result.final_checkpoint
            << "\n";
}

void stage_train_grpo(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  if (cfg.ablations.skip_grpo)
    throw UsageError("this config sets ablations.skip_grpo; the second stage is disabled");
  guard_output(paths.grpo_best(), force);
  require_artifact(paths.sft_best(), "train-sft");
  LoadedCorpus corpus = load_normalized_corpus(paths);
  CorpusSplit split = load_split(paths);
  TokenSpace space = load_vocabulary(paths);
  Codec codec(base_tokenizer(), space);
  TemplateSpec tmpl = cfg.template_spec();

  Policy policy = load_checkpoint(paths.sft_best(), space);
  inject_lora(policy, cfg.lora, cfg.seed + 1);
  set_trainable_scope(policy, TrainScope::LoraOnly);

  std::vector<Mashup> train = select_split(corpus.mashups, split.train);
  std::vector<Mashup> val = select_split(corpus.mashups, split.validation);
  std::cout << "grpo over " << train.size() << " mashups, validating on " << val.size() << "\n";
  GrpoResult result = train_grpo(policy, train, val, codec, cfg.grpo, cfg.weights,
                                 cfg.ablations.recommendation_only, tmpl, paths.grpo_dir());
  std::string log;
  for (const auto& line : result.log_lines) log += line + "\n";
  util::write_text_file_atomic(paths.grpo_dir() + "/train_log.txt", log);
  std::cout << "best epoch " << result.best_epoch << " (val reward " << result.best_val_reward
            << "); checkpoints: " << result.best_checkpoint << ", " << result.final_checkpoint
            << "\n";
}

void stage_evaluate(const ExperimentConfig& cfg, const RunPaths& paths, bool force,
                    const std::vector<std::string>& judges_override,
                    const std::string& checkpoint_override, double temperature_override) {
  guard_output(paths.eval_json(), force);
  LoadedCorpus corpus = load_normalized_corpus(paths);
  CorpusSplit split = load_split(paths);
  TokenSpace space = load_vocabulary(paths);
  Codec codec(base_tokenizer(), space);

  std::string ckpt = checkpoint_override;
  if (ckpt.empty()) {
    if (!cfg.ablations.skip_grpo && fs::exists(paths.grpo_best()))
      ckpt = paths.grpo_best();
    else {
      require_artifact(paths.sft_best(), "train-sft");
      ckpt = paths.sft_best();
    }
  }
  Policy policy = load_checkpoint(ckpt, space);

  EvalOptions opts;
  opts.tmpl = cfg.template_spec();
  opts.recommendation_only = cfg.ablations.recommendation_only;
  opts.decode = cfg.decode;
  if (temperature_override > 0) {
    opts.decode.mode = DecodeMode::Sample;
    opts.decode.temperature = temperature_override;
  }
  opts.decode.ensure_stops(space);
  if (!opts.tmpl.include_reasons)
    opts.decode.stop_ids.insert(space.delimiter(Delimiter::ApiStop));
  opts.judges = judges_override.empty() ? cfg.judge.models : judges_override;

  std::unique_ptr<ChatClient> judge_client;
  if (!opts.judges.empty()) {
    auto provider =
        make_provider(cfg.judge.provider, cfg.judge.base_url, cfg.judge.api_key, false);
    auto cache = std::make_shared<ResponseCache>(cfg.cache_dir);
    judge_client = std::make_unique<ChatClient>(provider, cache);
  }

  std::vector<Mashup> test = select_split(corpus.mashups, split.test);
  EvalOutput out =
      evaluate_model(policy, test, corpus.repo, codec, cfg.weights, opts, judge_client.get());
  util::write_text_file_atomic(paths.eval_json(), out.report.to_json());
  util::write_text_file_atomic(paths.eval_instances(), instances_to_jsonl(out.instances));
  std::cout << "evaluated " << ckpt << " on " << test.size() << " test mashups\n"
            << EvalReport::format_table({{fs::path(paths.root).filename().string(), out.report}});
}

void stage_recommend(const ExperimentConfig& cfg, const RunPaths& paths, const std::string& text,
                     double temperature_override) {
  if (util::trim(text).empty()) throw UsageError("recommend requires a non-empty --text");
  TokenSpace space = load_vocabulary(paths);
  Codec codec(base_tokenizer(), space);
  std::string ckpt = (!cfg.ablations.skip_grpo && fs::exists(paths.grpo_best()))
                         ? paths.grpo_best()
                         : paths.sft_best();
  require_artifact(ckpt, "train-sft");
  Policy policy = load_checkpoint(ckpt, space);

  Mashup m;
  m.mashup_id = "adhoc";
  m.requirement = escape_reserved_surfaces(text);
  DecodeConfig dc = cfg.decode;
  if (temperature_override > 0) {
    dc.mode = DecodeMode::Sample;
    dc.temperature = temperature_override;
  }
  dc.ensure_stops(space);
  TemplateSpec tmpl = cfg.template_spec();
  if (!tmpl.include_reasons) dc.stop_ids.insert(space.delimiter(Delimiter::ApiStop));
  std::mt19937_64 rng(cfg.seed);
  auto [rec, parse] = recommend(policy, m, dc, codec, rng, tmpl);
  json j = json::parse(rec.to_json(m.mashup_id));
  j["well_formed"] = parse.well_formed();
  j["truncated"] = parse.truncated;
  std::cout << j.dump(2) << "\n";
}

void stage_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw UsageError("report requires at least one run directory");
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& dir : run_dirs) {
    RunPaths paths{dir};
    require_artifact(paths.eval_json(), "evaluate");
    rows.emplace_back(fs::path(dir).filename().string(),
                      EvalReport::from_json(util::read_text_file(paths.eval_json())));
  }
  std::cout << EvalReport::format_table(rows);
}

}  // namespace apirec
