#include "apirec/llm.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>

#include "apirec/synth.hpp"
#include "apirec/util.hpp"
#include "apirec/vocab.hpp"
#include "doctest.h"

using namespace apirec;

namespace {

struct TempDir {
  std::string path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("apirec-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

struct CountingProvider final : ChatProvider {
  std::atomic<int> calls{0};
  std::function<std::string(const ChatRequest&)> fn;
  explicit CountingProvider(std::function<std::string(const ChatRequest&)> f) : fn(std::move(f)) {}
  std::string complete(const ChatRequest& req) override {
    ++calls;
    return fn(req);
  }
  std::string name() const override { return "counting"; }
};

struct Fixture {
  ApiRepository repo;
  Mashup mashup;
  TokenSpace space;
  ByteTokenizer base;

  Fixture() {
    for (const char* id : {"blogger", "google-custom-search"}) {
      WebApi a;
      a.api_id = id;
      a.description = std::string(id) + " api description text";
      repo.index[a.api_id] = repo.apis.size();
      repo.apis.push_back(a);
    }
    mashup.mashup_id = "editor";
    mashup.requirement =
        "realtime html/css/javascript editor and advanced search engine dedicated to web "
        "development and design.";
    mashup.invoked_apis = {"blogger", "google-custom-search"};
    space = extend_vocabulary(base, repo.apis);
  }
};

}  // namespace

TEST_CASE("cache contract: identical requests hit the provider once") {
  TempDir tmp;
  auto provider = std::make_shared<CountingProvider>(
      [](const ChatRequest&) { return "stable reply"; });
  auto cache = std::make_shared<ResponseCache>(tmp.path);
  ChatClient client(provider, cache);

  ChatRequest req{"model-x", "some prompt", 0.7, 256, ""};
  CHECK(client.chat(req) == "stable reply");
  CHECK(client.chat(req) == "stable reply");
  CHECK(provider->calls == 1);
  CHECK(client.cache_hits() == 1);

  SUBCASE("distinct temperatures are distinct cache entries") {
    ChatRequest warm = req;
    warm.temperature = 0.9;
    client.chat(warm);
    CHECK(provider->calls == 2);
  }
  SUBCASE("a fresh client against the same cache directory stays warm") {
    auto provider2 = std::make_shared<CountingProvider>(
        [](const ChatRequest&) { return "other"; });
    ChatClient client2(provider2, std::make_shared<ResponseCache>(tmp.path));
    CHECK(client2.chat(req) == "stable reply");
    CHECK(provider2->calls == 0);
  }
}

TEST_CASE("provider failures retry then surface an error") {
  auto flaky_calls = std::make_shared<std::atomic<int>>(0);
  auto provider = std::make_shared<CountingProvider>([flaky_calls](const ChatRequest&) -> std::string {
    if (++*flaky_calls < 3) throw DataError("transient");
    return "recovered";
  });
  ChatClientOptions opts;
  opts.max_retries = 3;
  opts.backoff_ms = 1;
  ChatClient client(provider, nullptr, opts);
  CHECK(client.chat({"m", "p", 0.0, 16, ""}) == "recovered");

  auto always_down = std::make_shared<CountingProvider>(
      [](const ChatRequest&) -> std::string { throw DataError("down"); });
  ChatClient failing(always_down, nullptr, opts);
  CHECK_THROWS_AS(failing.chat({"m", "p", 0.0, 16, ""}), DataError);
  CHECK(always_down->calls == 3);
}

TEST_CASE("annotation prompt carries the table sections in order") {
  Fixture f;
  std::vector<WebApi> targets = {f.repo.apis[0], f.repo.apis[1]};
  std::string p = build_annotation_prompt(f.mashup, targets);
  size_t header = p.find("API Recommendation Reasoning Task");
  size_t marker = p.find("wrap it with three asterisks");
  size_t mash = p.find("Mashup: realtime html");
  size_t apis = p.find("Target APIs: blogger, google-custom-search");
  size_t descs = p.find("Target API Descriptions: blogger: ");
  REQUIRE(header != std::string::npos);
  REQUIRE(marker != std::string::npos);
  REQUIRE(mash != std::string::npos);
  REQUIRE(apis != std::string::npos);
  REQUIRE(descs != std::string::npos);
  CHECK(header < marker);
  CHECK(marker < mash);
  CHECK(mash < apis);
  CHECK(apis < descs);

  SUBCASE("long descriptions are truncated with an ellipsis") {
    std::vector<WebApi> big = targets;
    big[0].description = std::string(3000, 'x');
    std::string q = build_annotation_prompt(f.mashup, big, 1500);
    CHECK(q.find(std::string(1500, 'x') + "...") != std::string::npos);
    CHECK(q.find(std::string(1501, 'x')) == std::string::npos);
  }
  SUBCASE("empty targets are rejected") {
    CHECK_THROWS_AS(build_annotation_prompt(f.mashup, {}), std::invalid_argument);
  }
}

TEST_CASE("annotate validates target coverage and counts attempts") {
  Fixture f;
  std::vector<WebApi> targets = {f.repo.apis[0], f.repo.apis[1]};

  SUBCASE("covering reply is valid on the first attempt") {
    auto provider = std::make_shared<CountingProvider>([](const ChatRequest&) {
      return "***blogger*** handles posts while ***google custom search*** powers search.";
    });
    ChatClient client(provider, nullptr);
    AnnotationRecord rec = annotate(f.mashup, targets, client, "anno", f.space);
    CHECK(rec.valid);
    CHECK(rec.attempts == 1);
    CHECK(rec.rationale.find("<API_blogger>") != std::string::npos);
    CHECK(rec.rationale.find("<API_google-custom-search>") != std::string::npos);
  }
  SUBCASE("persistent omission exhausts attempts and stays invalid") {
    auto provider = std::make_shared<CountingProvider>(
        [](const ChatRequest&) { return "only ***blogger*** is mentioned"; });
    ChatClient client(provider, nullptr);
    AnnotationRecord rec = annotate(f.mashup, targets, client, "anno", f.space, {3, 0.7, 256});
    CHECK_FALSE(rec.valid);
    CHECK(rec.attempts == 3);
    CHECK(provider->calls == 3);  // retry salts bypass request identity
  }
}

TEST_CASE("judge prompt states the three criteria and the zero rule") {
  Fixture f;
  std::map<std::string, std::string> reasons = {{"blogger", "to fetch blog posts"}};
  std::string p = build_judge_prompt(f.mashup, {"blogger", "google-custom-search"}, reasons,
                                     f.repo);
  CHECK(p.find("API Reason Evaluation Task") != std::string::npos);
  CHECK(p.find("(1) How well the reason aligns with the mashup requirements") !=
        std::string::npos);
  CHECK(p.find("(2) How well the reason aligns with the API descriptions") != std::string::npos);
  CHECK(p.find("(3) The overall quality and accuracy of the reason") != std::string::npos);
  CHECK(p.find("If any API doesn't have a reason, it should be given 0") != std::string::npos);
  CHECK(p.find("provide only the numerical score (0 to 1)") != std::string::npos);
  CHECK(p.find("<API_blogger> : to fetch blog posts") != std::string::npos);

  SUBCASE("reason-free recommendations still yield a well-formed prompt") {
    std::string q = build_judge_prompt(f.mashup, {"blogger"}, {}, f.repo);
    CHECK(q.find("(no reasons were provided)") != std::string::npos);
  }
  SUBCASE("empty recommendation refuses") {
    CHECK_THROWS_AS(build_judge_prompt(f.mashup, {}, {}, f.repo), std::invalid_argument);
  }
}

TEST_CASE("judge_rs parses, clamps, and flags unparseable replies") {
  Fixture f;
  SUBCASE("first number is extracted") {
    auto provider = std::make_shared<CountingProvider>([](const ChatRequest&) { return "0.69"; });
    ChatClient client(provider, nullptr);
    JudgeVerdict v = judge_rs(f.mashup, {"blogger"}, {}, f.repo, client, "judge");
    CHECK(v.valid);
    CHECK(v.score == doctest::Approx(0.69));
  }
  SUBCASE("out-of-range replies clamp to [0,1]") {
    auto provider = std::make_shared<CountingProvider>([](const ChatRequest&) { return "1.2"; });
    ChatClient client(provider, nullptr);
    CHECK(judge_rs(f.mashup, {"blogger"}, {}, f.repo, client, "judge").score ==
          doctest::Approx(1.0));
  }
  SUBCASE("unparseable replies invalidate the verdict after one retry") {
    auto provider = std::make_shared<CountingProvider>(
        [](const ChatRequest&) { return "great job"; });
    ChatClient client(provider, nullptr);
    JudgeVerdict v = judge_rs(f.mashup, {"blogger"}, {}, f.repo, client, "judge");
    CHECK_FALSE(v.valid);
    CHECK(provider->calls == 2);
  }
}

TEST_CASE("aggregate_rs averages per judge then across judges") {
  auto verdict = [](const char* judge, double score, bool valid = true) {
    JudgeVerdict v;
    v.judge_model = judge;
    v.score = score;
    v.valid = valid;
    return v;
  };
  SUBCASE("per-judge means 0.785 / 0.798 / 0.787 give 0.790 overall") {
    std::vector<JudgeVerdict> vs = {verdict("ds", 0.785), verdict("llama", 0.798),
                                    verdict("gpt", 0.787)};
    RsAggregate agg = aggregate_rs(vs);
    CHECK(agg.overall == doctest::Approx(0.790).epsilon(1e-12));
  }
  SUBCASE("single verdict") {
    CHECK(aggregate_rs({verdict("j", 0.5)}).overall == doctest::Approx(0.5));
  }
  SUBCASE("two judges at the extremes") {
    std::vector<JudgeVerdict> vs = {verdict("a", 1.0), verdict("b", 0.0)};
    CHECK(aggregate_rs(vs).overall == doctest::Approx(0.5));
  }
  SUBCASE("invalid verdicts are excluded; none valid errors") {
    std::vector<JudgeVerdict> vs = {verdict("a", 0.9, false)};
    CHECK_THROWS_AS(aggregate_rs(vs), DataError);
    vs.push_back(verdict("a", 0.5));
    CHECK(aggregate_rs(vs).overall == doctest::Approx(0.5));
  }
}

TEST_CASE("annotation records round trip through jsonl") {
  AnnotationRecord r;
  r.mashup_id = "m1";
  r.target_apis = {"a", "b"};
  r.rationale = "uses <API_a> and <API_b>";
  r.annotator_model = "anno";
  r.valid = true;
  r.attempts = 2;
  auto back = annotations_from_jsonl(annotations_to_jsonl({r}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].mashup_id == "m1");
  CHECK(back[0].target_apis == r.target_apis);
  CHECK(back[0].rationale == r.rationale);
  CHECK(back[0].valid);
  CHECK(back[0].attempts == 2);
}

TEST_CASE("scripted annotator covers every target deterministically") {
  SynthCorpus corpus = make_synthetic_corpus({6, 10, 2, 3});
  TokenSpace space = extend_vocabulary(ByteTokenizer{}, corpus.repo.apis);
  auto provider = make_scripted_annotator();
  ChatClient client(provider, nullptr);
  for (const auto& m : corpus.mashups) {
    std::vector<WebApi> targets;
    for (const auto& id : m.invoked_apis) targets.push_back(corpus.repo.at(id));
    AnnotationRecord rec = annotate(m, targets, client, "scripted", space);
    CHECK(rec.valid);
    CHECK(rec.attempts == 1);
  }
}

TEST_CASE("first-number parsing") {
  CHECK(parse_first_number("score: 0.85 overall") == doctest::Approx(0.85));
  CHECK(parse_first_number("-0.2") == doctest::Approx(-0.2));
  CHECK(parse_first_number(".5") == doctest::Approx(0.5));
  CHECK_FALSE(parse_first_number("no digits here").has_value());
}
