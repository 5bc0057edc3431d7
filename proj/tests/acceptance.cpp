// Acceptance suite: one test case per criterion, each reported as a
// [PASS]/[FAIL] line on stdout.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "golden_inputs.hpp"
#include "simarena/cli.hpp"
#include "simarena/corpus.hpp"
#include "simarena/judges.hpp"
#include "simarena/reports.hpp"
#include "simarena/session.hpp"
#include "simarena/stats.hpp"
#include "stat_oracles.hpp"
#include "test_support.hpp"

using namespace simarena;
namespace ts = test_support;
namespace fs = std::filesystem;

namespace {

struct CriterionReporter : doctest::IReporter {
  const doctest::TestCaseData* current = nullptr;
  bool case_failed = false;

  explicit CriterionReporter(const doctest::ContextOptions&) {}
  void report_query(const doctest::QueryData&) override {}
  void test_run_start() override {}
  void test_run_end(const doctest::TestRunStats&) override {}
  void test_case_start(const doctest::TestCaseData& data) override {
    current = &data;
    case_failed = false;
  }
  void test_case_reenter(const doctest::TestCaseData&) override {}
  void test_case_end(const doctest::CurrentTestCaseStats& stats) override {
    std::cout << (stats.failure_flags == 0 && !case_failed ? "[PASS] "
                                                           : "[FAIL] ")
              << (current ? current->m_name : "?") << std::endl;
  }
  void test_case_exception(const doctest::TestCaseException&) override {
    case_failed = true;
  }
  void subcase_start(const doctest::SubcaseSignature&) override {}
  void subcase_end() override {}
  void log_assert(const doctest::AssertData& data) override {
    if (data.m_failed) case_failed = true;
  }
  void log_message(const doctest::MessageData&) override {}
  void test_case_skipped(const doctest::TestCaseData&) override {}
};

REGISTER_LISTENER("criteria", 1, CriterionReporter);

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file: " << file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("simarena-accept-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("correlations match brute-force oracles on 200 tied vectors") {
  const auto start = std::chrono::steady_clock::now();
  int checked = 0;
  while (checked < 200) {
    const std::size_t n = std::size_t(ts::rand_int(2, 12));
    auto x = ts::random_int_vector(n, 0, 8);
    auto y = ts::random_int_vector(n, 0, 8);
    if (!ts::non_constant(x) || !ts::non_constant(y)) continue;
    ++checked;
    CHECK(std::fabs(stats::spearman(x, y) -
                    stat_oracles::spearman_bruteforce(x, y)) <= 1e-9);
    CHECK(std::fabs(stats::pearson(x, y) -
                    stat_oracles::pearson_direct(x, y)) <= 1e-9);
    CHECK(std::fabs(stats::kendall(x, y) -
                    stat_oracles::kendall_tau_b_bruteforce(x, y)) <= 1e-9);
  }
  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - start;
  CHECK(elapsed.count() < 1.0);
}

TEST_CASE("spearman is invariant under 50 strictly increasing transforms") {
  int done = 0;
  while (done < 50) {
    const std::size_t n = std::size_t(ts::rand_int(3, 12));
    auto x = ts::random_int_vector(n, 0, 9);
    auto y = ts::random_int_vector(n, 0, 9);
    if (!ts::non_constant(x) || !ts::non_constant(y)) continue;
    ++done;
    const double base = stats::spearman(x, y);
    CHECK(std::fabs(stats::spearman(ts::random_monotone_transform(x), y) -
                    base) <= 1e-12);
    CHECK(std::fabs(stats::spearman(x, ts::random_monotone_transform(y)) -
                    base) <= 1e-12);
  }
}

TEST_CASE("length-control widening reproduces 3..43 -> (1, 45) plus invariants") {
  std::vector<int> example{3, 43};
  const auto r = derive_length_range(example);
  CHECK(r.lo == 1);
  CHECK(r.hi == 45);

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> counts;
    const int n = ts::rand_int(1, 15);
    for (int i = 0; i < n; ++i) counts.push_back(ts::rand_int(1, 400));
    const auto range = derive_length_range(counts);
    const int lo = *std::min_element(counts.begin(), counts.end());
    const int hi = *std::max_element(counts.begin(), counts.end());
    CHECK((range.lo % 5 == 0 || range.lo == 1));
    CHECK(range.hi % 5 == 0);
    CHECK(range.lo <= lo);
    CHECK(range.hi >= hi);
  }
}

TEST_CASE("z-scores have zero mean and unit variance per group") {
  std::vector<stats::RatingRecord> ratings;
  auto rec = [](std::string annotator, double raw) {
    stats::RatingRecord r;
    r.conversation_id = annotator + std::to_string(raw);
    r.annotator_id = std::move(annotator);
    r.raw = raw;
    return r;
  };
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3 + a; ++i)
      ratings.push_back(
          rec("big-" + std::to_string(a), double(1 + (i * 7 + a * 3) % 10)));
  for (int a = 0; a < 5; ++a)
    ratings.push_back(rec("small-" + std::to_string(a), double(2 + a * 2)));
  for (int i = 0; i < 4; ++i) ratings.push_back(rec("flat", 6.0));

  auto out = stats::zscore_normalize(ratings);

  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : out) {
    std::string key = r.annotator_id;
    if (key.rfind("small-", 0) == 0) key = "(pool)";
    groups[key].push_back(*r.normalized);
  }
  for (const auto& [key, zs] : groups) {
    double mu = 0;
    for (double z : zs) mu += z;
    mu /= double(zs.size());
    CHECK(std::fabs(mu) < 1e-12);
    if (key == "flat") {
      for (double z : zs) CHECK(z == 0.0);
      continue;
    }
    double var = 0;
    for (double z : zs) var += (z - mu) * (z - mu);
    var /= double(zs.size());
    CHECK(std::fabs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("turing tie-break verdict table covers all 12 ordered cases") {
  int enumerated = 0;
  for (int choice_a : {1, 2})
    for (int choice_b : {1, 2})
      for (int rel : {0, 1, 2}) {
        TuringTrial t;
        t.run_a = {choice_a, rel == 0 ? 80.0 : rel == 1 ? 20.0 : 50.0};
        t.run_b = {choice_b, 50.0};
        resolve_turing_verdict(t);
        ++enumerated;

        const bool a_real = choice_a == 1;
        const bool b_real = choice_b == 2;
        if (a_real == b_real) {
          CHECK_FALSE(t.tie_broken);  // consistent runs never tie-break
          CHECK(t.picked_real == a_real);
        } else {
          CHECK(t.tie_broken);
          const bool expect = rel == 1 ? b_real : a_real;
          CHECK(t.picked_real == expect);
          CHECK(t.equal_confidence == (rel == 2));
        }
      }
  CHECK(enumerated == 12);
}

TEST_CASE("turing deviation hits 17.8 for 678/1000 and is flip-symmetric") {
  const auto d = stats::turing_deviation(678, 1000);
  CHECK(d.deviation == 17.8);
  CHECK(d.accuracy_percent == doctest::Approx(67.8));

  for (int trial = 0; trial < 60; ++trial) {
    const int n = ts::rand_int(1, 500);
    const int k = ts::rand_int(0, n);
    CHECK(std::fabs(stats::turing_deviation(k, n).deviation -
                    stats::turing_deviation(n - k, n).deviation) <= 1e-12);
  }
}

TEST_CASE("macro F1 matches the confusion-matrix oracle on 500 label vectors") {
  auto hand = stats::macro_f1(
      std::vector<stats::Correctness>{stats::Correctness::Correct,
                                      stats::Correctness::Correct,
                                      stats::Correctness::Incorrect},
      std::vector<stats::Correctness>{stats::Correctness::Correct,
                                      stats::Correctness::Incorrect,
                                      stats::Correctness::Incorrect});
  CHECK(std::fabs(hand.macro - 0.667) <= 5e-4);

  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = std::size_t(ts::rand_int(1, 20));
    std::vector<stats::Correctness> h, s;
    for (std::size_t i = 0; i < n; ++i) {
      h.push_back(ts::rand_int(0, 1) ? stats::Correctness::Correct
                                     : stats::Correctness::Incorrect);
      s.push_back(ts::rand_int(0, 1) ? stats::Correctness::Correct
                                     : stats::Correctness::Incorrect);
    }
    auto got = stats::macro_f1(h, s);
    stat_oracles::Confusion cc, ci;
    for (std::size_t i = 0; i < n; ++i) {
      const bool th = h[i] == stats::Correctness::Correct;
      const bool ps = s[i] == stats::Correctness::Correct;
      if (th && ps) ++cc.tp;
      if (!th && ps) ++cc.fp;
      if (th && !ps) ++cc.fn;
      if (!th && !ps) ++ci.tp;
      if (th && !ps) ++ci.fp;
      if (!th && ps) ++ci.fn;
    }
    CHECK(std::fabs(got.f1_correct - stat_oracles::f1_from_confusion(cc)) <=
          1e-9);
    CHECK(std::fabs(got.f1_incorrect - stat_oracles::f1_from_confusion(ci)) <=
          1e-9);
    CHECK(std::fabs(got.macro - (stat_oracles::f1_from_confusion(cc) +
                                 stat_oracles::f1_from_confusion(ci)) /
                                    2.0) <= 1e-9);
  }
}

TEST_CASE("mcnemar frozen cases and symmetry; williams matches a second coding") {
  CHECK(stats::mcnemar_exact(0, 0) == 1.0);
  CHECK(std::fabs(stats::mcnemar_exact(5, 0) - 0.0625) <= 1e-12);
  CHECK(stats::mcnemar_exact(1, 1) == 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int b = ts::rand_int(0, 60);
    const int c = ts::rand_int(0, 60);
    CHECK(std::fabs(stats::mcnemar_exact(b, c) - stats::mcnemar_exact(c, b)) <=
          1e-12);
  }

  auto equal = stats::williams_test(0.4, 0.4, 0.2, 30);
  CHECK(equal.t == 0.0);
  CHECK(equal.p_two_sided == 1.0);

  int done = 0;
  while (done < 50) {
    const double r12 = ts::rand_int(-85, 85) / 100.0;
    const double r13 = ts::rand_int(-85, 85) / 100.0;
    const double r23 = ts::rand_int(-85, 85) / 100.0;
    const int n = ts::rand_int(5, 120);
    const double det =
        1 - r12 * r12 - r13 * r13 - r23 * r23 + 2 * r12 * r13 * r23;
    if (det <= 0.01) continue;
    ++done;
    auto got = stats::williams_test(r12, r13, r23, n);
    CHECK(std::fabs(got.t - stat_oracles::williams_t_independent(r12, r13, r23,
                                                                 n)) <= 1e-6);
    CHECK(std::fabs(got.p_two_sided -
                    stat_oracles::t_two_sided_p_quadrature(got.t, got.df)) <=
          1e-6);
  }
}

TEST_CASE("a 9-model x 3-stratum corpus yields 27 intermediate groups, both tasks") {
  auto build = [](TaskKind task) {
    std::vector<stats::AlignedPair> pairs;
    for (int m = 0; m < 9; ++m) {
      for (int s = 0; s < 3; ++s) {
        Scenario scenario;
        scenario.kind = task;
        if (task == TaskKind::MathTutoring)
          scenario.math = MathScenario{"p", "sol", "1", 3 + s};
        else
          scenario.doc = DocScenario{
              s == 0 ? "email/letter" : s == 1 ? "blog post" : "creative writing",
              "intent",
              {}};
        for (int k = 0; k < 2; ++k) {  // >= 2 conversations per cell
          stats::AlignedPair p;
          p.key = {"model-" + std::to_string(m), scenario.stratum()};
          p.human = m + 0.1 * s + 0.01 * k;
          p.sim = 0.5 * p.human + 3.0;
          pairs.push_back(p);
        }
      }
    }
    return stats::aggregate_levels(pairs);
  };
  auto math = build(TaskKind::MathTutoring);
  CHECK(math.intermediate.n == 27);
  CHECK(math.instance.n == 54);
  CHECK(math.system.n == 9);
  auto doc = build(TaskKind::DocumentCreation);
  CHECK(doc.intermediate.n == 27);
  CHECK(doc.system.n == 9);
}

TEST_CASE("an 18-row leaderboard puts the dominating model first, rescale-stably") {
  // four metrics with a clear overall winner; every other row
  // is dominated on all four.
  std::map<std::string, std::map<std::string, double>> table;
  table["gpt-5"] = {{"math_interaction", 8.89},
                    {"math_correct_rate", 90.0},
                    {"doc_interaction", 9.08},
                    {"doc_document", 8.96}};
  for (int i = 0; i < 17; ++i) {
    const double drop = 0.05 + 0.11 * double(i % 7) + 0.01 * double(i);
    table["model-" + std::to_string(i)] = {
        {"math_interaction", 8.89 - drop},
        {"math_correct_rate", 90.0 - 2.0 * drop - double(i % 5)},
        {"doc_interaction", 9.08 - drop},
        {"doc_document", 8.96 - 1.5 * drop}};
  }
  REQUIRE(table.size() == 18);
  const std::vector<std::string> metrics{"math_interaction",
                                         "math_correct_rate",
                                         "doc_interaction", "doc_document"};
  auto rows = stats::leaderboard(table, metrics);
  CHECK(rows.front().model == "gpt-5");

  // ordering is invariant under a positive affine rescale of any column
  for (const auto& name : metrics) {
    auto rescaled = table;
    for (auto& [model, values] : rescaled)
      values[name] = 12.5 * values[name] + 100.0;
    auto again = stats::leaderboard(rescaled, metrics);
    for (std::size_t i = 0; i < rows.size(); ++i)
      CHECK(rows[i].model == again[i].model);
  }
}

// ---------------------------------------------------------------------------
// Offline end-to-end pipeline
// ---------------------------------------------------------------------------

namespace {

struct PipelineLayout {
  fs::path root;
  fs::path config;
  fs::path human;
  fs::path run;
};

PipelineLayout prepare_pipeline(const std::string& tag, const char* task) {
  PipelineLayout layout;
  layout.root = fresh_dir(tag);
  const bool math = std::string(task) == "math";
  const auto fixture_cfg = ts::fixtures_dir() / "e2e" /
                           (math ? "math_config.json" : "doc_config.json");
  nlohmann::json config;
  {
    std::ifstream in(fixture_cfg);
    in >> config;
  }
  // re-anchor paths on the temp root; mock scripts stay in the fixture tree
  const auto e2e = ts::fixtures_dir() / "e2e";
  config["templates_dir"] = ts::templates_dir().string();
  config["attributes_dir"] = ts::attributes_dir().string();
  const char* corpus = math ? "human_math" : "human_doc";
  layout.human = layout.root / "human";
  fs::copy(ts::fixtures_dir() / corpus, layout.human,
           fs::copy_options::recursive);
  config["scenario_set"] = (layout.human / "scenarios.json").string();
  config["corpus"] = layout.human.string();
  config["cache_dir"] = (layout.root / "cache").string();
  config["simulator"]["provider"]["script"] =
      (e2e / config["simulator"]["provider"]["script"].get<std::string>())
          .string();
  for (auto& a : config["assistants"])
    a["provider"]["script"] =
        (e2e / a["provider"]["script"].get<std::string>()).string();
  config["rater"]["provider"]["script"] =
      (e2e / config["rater"]["provider"]["script"].get<std::string>()).string();
  if (config.contains("doc_updater"))
    config["doc_updater"]["provider"]["script"] =
        (e2e / config["doc_updater"]["provider"]["script"].get<std::string>())
            .string();

  layout.config = layout.root / "config.json";
  std::ofstream out(layout.config);
  out << config.dump(2);
  layout.run = layout.root / "run";
  return layout;
}

int arena(std::initializer_list<std::string> args) {
  return cli::run(std::vector<std::string>(args));
}

void run_pipeline(const PipelineLayout& p) {
  REQUIRE(arena({"simulate", "--config", p.config.string(), "--run-dir",
                 p.run.string(), "--offline"}) == 0);
  REQUIRE(arena({"judge", "--config", p.config.string(), "--run-dir",
                 p.run.string(), "--offline"}) == 0);
  REQUIRE(arena({"judge", "--config", p.config.string(), "--run-dir",
                 p.human.string(), "--offline"}) == 0);
  REQUIRE(arena({"evaluate", "--config", p.config.string(), "--run-dir",
                 p.run.string(), "--human", p.human.string(), "--offline"}) ==
          0);
  REQUIRE(arena({"leaderboard", "--run-dir", p.run.string()}) == 0);
}

void check_pipeline_outputs(const PipelineLayout& p) {
  for (const char* file :
       {"conversations.jsonl", "manifest.json", "verdicts.jsonl",
        "similarity.jsonl", "turing.jsonl", "reports/metrics.json",
        "reports/metrics.md", "reports/leaderboard.json",
        "reports/leaderboard.md"})
    CHECK_MESSAGE(fs::exists(p.run / file), "missing ", file);

  // zero network activity: the gateway audit after simulate counts none
  nlohmann::json audit;
  std::ifstream in(p.run / "audit.json");
  in >> audit;
  CHECK(audit.at("network_requests").get<int>() == 0);
}

}  // namespace

TEST_CASE("offline pipeline runs both tasks, reproducibly, in bounded time") {
  const auto start = std::chrono::steady_clock::now();

  for (const char* task : {"math", "doc"}) {
    auto first = prepare_pipeline(std::string("e2e-") + task + "-1", task);
    run_pipeline(first);
    check_pipeline_outputs(first);

    // same config, fresh run dir: assignments and reports must not drift
    auto second = first;
    second.run = first.root / "run2";
    run_pipeline(second);
    CHECK(slurp(first.run / "manifest.json") ==
          slurp(second.run / "manifest.json"));
    for (const char* file :
         {"reports/metrics.json", "reports/metrics.md",
          "reports/leaderboard.json", "reports/leaderboard.md"})
      CHECK_MESSAGE(slurp(first.run / file) == slurp(second.run / file),
                    "report drifted across reruns: ", file);

    // warmed cache: re-simulating performs only cache hits
    REQUIRE(arena({"simulate", "--config", first.config.string(), "--run-dir",
                   first.run.string(), "--offline"}) == 0);
    nlohmann::json audit;
    std::ifstream in(first.run / "audit.json");
    in >> audit;
    CHECK(audit.at("calls").get<int>() ==
          audit.at("cache_hits").get<int>());

    // configuration errors exit with code 2: non-mock providers are rejected
    nlohmann::json bad;
    {
      std::ifstream cfg(first.config);
      cfg >> bad;
    }
    bad["assistants"][0]["provider"] = {{"kind", "openai-compatible"},
                                        {"model_id", "remote"},
                                        {"endpoint", "https://api.example.com"},
                                        {"auth_env", "NO_SUCH_KEY_SET"}};
    const auto bad_path = first.root / "bad_config.json";
    {
      std::ofstream out(bad_path);
      out << bad.dump(2);
    }
    CHECK(arena({"simulate", "--config", bad_path.string(), "--run-dir",
                 (first.root / "bad-run").string(), "--offline"}) == 2);
  }

  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - start;
  CHECK(elapsed.count() < 10.0);
}

TEST_CASE("rendered prompts are byte-identical to the checked-in goldens") {
  TemplateStore templates(ts::templates_dir());
  const auto golden_dir = ts::source_dir() / "tests" / "golden" / "prompts";
  int compared = 0;
  for (TaskKind task : {TaskKind::MathTutoring, TaskKind::DocumentCreation}) {
    const Scenario scenario = golden_inputs::scenario_for(task);
    const UserProfile profile = golden_inputs::profile();
    const auto history = golden_inputs::history(task);
    for (const char* label : golden_inputs::strategy_labels()) {
      const SimulatorStrategy strategy = strategy_from_label(label);
      const bool needs_profile =
          !strategy.profile_parts.empty() || strategy.length_control;
      for (bool initial : {true, false}) {
        const auto req = build_simulator_prompt(
            templates, scenario, strategy, needs_profile ? &profile : nullptr,
            initial ? std::span<const Turn>{} : std::span<const Turn>(history));
        const auto file =
            golden_dir / golden_inputs::golden_name(task, label, initial);
        CHECK_MESSAGE(req.messages.at(0).text == slurp(file),
                      "prompt drifted from golden: ", file.string());
        ++compared;
      }
    }
  }
  CHECK(compared == 44);  // 11 configurations x 2 tasks x initial/follow-up
}

TEST_CASE("parser round-trips messages and terminate detection is strict") {
  const std::string words[] = {"how", "does",  "the",  "square", "step",
                               "go",  "again", "from", "here",   "ok"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string message;
    const int n = ts::rand_int(1, 14);
    for (int i = 0; i < n; ++i) {
      if (i) message += ' ';
      message += words[std::size_t(ts::rand_int(0, 9))];
    }
    auto cot = parse_simulator_output("Thought: t\n\nResponse: " + message,
                                      true);
    CHECK(cot.message == message);
    CHECK_FALSE(cot.terminate);
    auto plain = parse_simulator_output(message, false);
    CHECK(plain.message == message);
  }

  CHECK(parse_simulator_output("terminate conversation", false).terminate);
  CHECK(parse_simulator_output("  TERMINATE   Conversation\n", false).terminate);
  CHECK(parse_simulator_output("Thought: done\nMessage: Terminate Conversation",
                               true)
            .terminate);
  CHECK_FALSE(parse_simulator_output(
                  "I think we should terminate conversation once this works",
                  false)
                  .terminate);
  CHECK_FALSE(parse_simulator_output("terminate conversation please", false)
                  .terminate);
}

TEST_CASE("bundled corpus statistics reproduce the hand-counted means") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  REQUIRE(corpus.record_errors.empty());
  auto table = corpus_stats(corpus.conversations);
  REQUIRE(table.per_model.count("tutor-a"));
  CHECK(table.per_model.at("tutor-a").mean_turns == doctest::Approx(2.0));
  CHECK(table.per_model.at("tutor-a").mean_user_words ==
        doctest::Approx(7.75));

  // optional: an external dataset, when present, must match the expected
  // per-task counts (450 math / 459 document, 427 math after filtering)
  const char* dataset = std::getenv("SIMARENA_DATASET_DIR");
  if (!dataset || !*dataset) {
    MESSAGE("SIMARENA_DATASET_DIR not set; released-dataset check skipped");
    return;
  }
  auto released = load_corpus(fs::path(dataset));
  int math_total = 0, doc_total = 0, math_kept = 0;
  for (const auto& c : released.conversations) {
    if (c.task == TaskKind::MathTutoring) {
      ++math_total;
      if (!single_turn_excluded(c)) ++math_kept;
    } else {
      ++doc_total;
    }
  }
  CHECK(math_total == 450);
  CHECK(doc_total == 459);
  CHECK(math_kept == 427);
}
