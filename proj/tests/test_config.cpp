#include "apirec/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "apirec/pipeline.hpp"
#include "apirec/util.hpp"
#include "doctest.h"

using namespace apirec;

TEST_CASE("defaults carry the published hyperparameters") {
  ExperimentConfig cfg;
  CHECK(cfg.sft.learning_rate == doctest::Approx(1e-5));
  CHECK(cfg.sft.epochs == 20);
  CHECK(cfg.grpo.learning_rate == doctest::Approx(5e-6));
  CHECK(cfg.grpo.epochs == 20);
  CHECK(cfg.grpo.group_size == 8);
  CHECK(cfg.grpo.clip_epsilon == doctest::Approx(0.2));
  CHECK(cfg.grpo.kl_beta == doctest::Approx(0.04));
  CHECK(cfg.weights.f1 == doctest::Approx(0.4));
  CHECK(cfg.weights.rp == doctest::Approx(0.5));
  CHECK(cfg.weights.sums_valid());
  CHECK(cfg.lora.effective_scale() == doctest::Approx(2.0 / cfg.lora.rank));
}

TEST_CASE("round trip preserves the digest; edits change it") {
  ExperimentConfig cfg;
  std::string text = cfg.to_json();
  ExperimentConfig back = ExperimentConfig::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(back.digest() == cfg.digest());

  ExperimentConfig tweaked = ExperimentConfig::from_json(text);
  tweaked.seed = 43;
  CHECK(tweaked.digest() != cfg.digest());

  // resolved config keeps the env placeholder verbatim
  CHECK(text.find("${APIREC_API_KEY}") != std::string::npos);
}

TEST_CASE("partial config files fall back to defaults") {
  ExperimentConfig cfg = ExperimentConfig::from_json(R"({"seed": 7, "sft": {"epochs": 3}})");
  CHECK(cfg.seed == 7);
  CHECK(cfg.sft.epochs == 3);
  CHECK(cfg.sft.learning_rate == doctest::Approx(1e-5));
  CHECK(cfg.grpo.epochs == 20);
  CHECK(cfg.sft.seed == 7);  // stage seeds follow the experiment seed
  CHECK(cfg.grpo.seed == 7);
}

TEST_CASE("invalid weight vectors are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"weights": {"f1": 0.9}})"), UsageError);
}

TEST_CASE("ablation switches map onto the template spec") {
  ExperimentConfig cfg;
  CHECK(cfg.template_spec().special_tokens);
  CHECK(cfg.template_spec().include_reasons);
  cfg.ablations.no_special_tokens = true;
  CHECK_FALSE(cfg.template_spec().special_tokens);
  cfg.ablations.recommendation_only = true;
  CHECK_FALSE(cfg.template_spec().include_reasons);
}

TEST_CASE("environment interpolation resolves or fails loudly") {
  setenv("APIREC_TEST_VALUE", "sekrit", 1);
  CHECK(resolve_env("bearer ${APIREC_TEST_VALUE} token") == "bearer sekrit token");
  CHECK(resolve_env("no placeholders") == "no placeholders");
  unsetenv("APIREC_TEST_MISSING");
  CHECK_THROWS_AS(resolve_env("${APIREC_TEST_MISSING}"), UsageError);
  CHECK_THROWS_AS(resolve_env("${unterminated"), UsageError);
}

TEST_CASE("run directories are keyed by config digest") {
  namespace fs = std::filesystem;
  std::string root = (fs::temp_directory_path() / "apirec-rundir-test").string();
  fs::remove_all(root);

  ExperimentConfig cfg;
  RunPaths a = find_or_create_run_dir(cfg, root);
  CHECK(fs::exists(a.resolved_config()));
  CHECK(fs::exists(a.run_meta()));
  // the recorded config must not contain a resolved secret
  std::string recorded = util::read_text_file(a.resolved_config());
  CHECK(recorded.find("${APIREC_API_KEY}") != std::string::npos);

  // same digest reuses the directory
  RunPaths b = find_or_create_run_dir(cfg, root);
  CHECK(b.root == a.root);

  // different config gets its own directory
  ExperimentConfig other;
  other.seed = 99;
  RunPaths c = find_or_create_run_dir(other, root);
  CHECK(c.root != a.root);
  fs::remove_all(root);
}
