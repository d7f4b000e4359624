// Command-line front end for the recommendation pipeline:
//   ingest -> stats -> split -> annotate -> train-sft -> train-grpo ->
//   evaluate -> recommend -> report
// Exit codes: 0 success, 1 usage, 2 data error, 3 training divergence.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "apirec/pipeline.hpp"
#include "apirec/util.hpp"

using namespace apirec;

int main(int argc, char** argv) {
  CLI::App app{"apirec: two-stage web API recommendation with per-API reasons"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_root = "runs";
  bool force = false;
  uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "experiment config JSON")->required(false);
  app.add_option("--out", out_root, "root directory for run artifacts");
  app.add_flag("--force", force, "overwrite existing stage outputs");
  app.add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* ingest = app.add_subcommand("ingest", "validate and normalize the dataset files");
  auto* stats = app.add_subcommand("stats", "summarize the ingested corpus");
  auto* split = app.add_subcommand("split", "partition mashups 3:1:1");
  auto* annotate = app.add_subcommand("annotate", "attach rationale annotations via the LLM");
  auto* train_sft = app.add_subcommand("train-sft", "first stage: supervised fine-tuning");
  auto* train_grpo = app.add_subcommand("train-grpo", "second stage: GRPO over LoRA adapters");
  auto* evaluate = app.add_subcommand("evaluate", "score the test split");
  auto* recommend = app.add_subcommand("recommend", "recommend APIs for one requirement text");
  auto* report = app.add_subcommand("report", "tabulate eval results across run directories");

  std::string judges_csv;
  std::string checkpoint_override;
  double temperature = 0.0;
  evaluate->add_option("--judges", judges_csv, "comma-separated judge model ids");
  evaluate->add_option("--checkpoint", checkpoint_override, "evaluate this checkpoint file");
  evaluate->add_option("--temperature", temperature, "sample at this temperature (default greedy)");

  std::string text;
  recommend->add_option("--text", text, "mashup requirement description")->required();
  recommend->add_option("--temperature", temperature, "sample at this temperature");

  std::vector<std::string> run_dirs;
  report->add_option("--runs", run_dirs, "run directories to compare")->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      stage_report(run_dirs);
      return 0;
    }
    ExperimentConfig cfg =
        config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (seed_set) {
      cfg.seed = seed_override;
      cfg.sft.seed = seed_override;
      cfg.grpo.seed = seed_override;
    }
    RunPaths paths = find_or_create_run_dir(cfg, out_root);

    if (ingest->parsed()) stage_ingest(cfg, paths, force);
    else if (stats->parsed()) stage_stats(cfg, paths, force);
    else if (split->parsed()) stage_split(cfg, paths, force);
    else if (annotate->parsed()) stage_annotate(cfg, paths, force);
    else if (train_sft->parsed()) stage_train_sft(cfg, paths, force);
    else if (train_grpo->parsed()) stage_train_grpo(cfg, paths, force);
    else if (evaluate->parsed()) {
      std::vector<std::string> judges;
      std::istringstream js(judges_csv);
      std::string j;
      while (std::getline(js, j, ','))
        if (!util::trim(j).empty()) judges.push_back(util::trim(j));
      stage_evaluate(cfg, paths, force, judges, checkpoint_override, temperature);
    } else if (recommend->parsed()) {
      stage_recommend(cfg, paths, text, temperature);
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const TrainingDivergence& e) {
    std::cerr << "training divergence: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
