#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "simarena/corpus.hpp"
#include "simarena/miner.hpp"
#include "simarena/profile.hpp"
#include "simarena/simulator.hpp"
#include "simarena/template_engine.hpp"
#include "test_support.hpp"

using namespace simarena;
namespace ts = test_support;
namespace fs = std::filesystem;

static fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("simarena-test-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Corpus loading
// ---------------------------------------------------------------------------

TEST_CASE("bundled fixture dir loads 4 conversations with no errors") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  CHECK(corpus.conversations.size() == 4);
  CHECK(corpus.record_errors.empty());
  CHECK(corpus.scenarios.size() == 2);
  // two files x two records, file order preserved
  REQUIRE(corpus.conversations.size() == 4);
  CHECK(corpus.conversations[0].id == "hm-001");
  CHECK(corpus.conversations[1].id == "hm-002");
  CHECK(corpus.conversations[2].id == "hm-003");
  CHECK(corpus.conversations[3].id == "hm-004");
}

TEST_CASE("a record missing `turns` is a schema error naming the field") {
  auto dir = temp_dir("missing-turns");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"id":"x","task":"math_tutoring","scenario_id":"s","assistant_model":"m","user_source":{"kind":"human","id":"a"}})"
        << "\n";
  }
  auto corpus = load_corpus(dir);
  CHECK(corpus.conversations.empty());
  REQUIRE(corpus.record_errors.size() == 1);
  CHECK(corpus.record_errors[0].message.find("turns") != std::string::npos);
}

TEST_CASE("loading a nonexistent path is an io error") {
  CHECK_THROWS_AS((void)load_corpus(ts::fixtures_dir() / "nope"), Error);
}

TEST_CASE("conversation json round-trips structurally") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  for (const auto& c : corpus.conversations) {
    CHECK(conversation_from_json(to_json(c)) == c);
  }
  auto docs = load_corpus(ts::fixtures_dir() / "human_doc");
  for (const auto& c : docs.conversations) {
    CHECK(conversation_from_json(to_json(c)) == c);
  }
  for (const auto& s : docs.scenarios) {
    CHECK(scenario_from_json(to_json(s)) == s);
  }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

static Conversation minimal_math(int turns) {
  Conversation c;
  c.id = "t";
  c.task = TaskKind::MathTutoring;
  c.scenario_id = "s";
  c.assistant_model = "m";
  c.user_source = {UserSource::Kind::Human, "a"};
  for (int i = 1; i <= turns; ++i)
    c.turns.push_back({i, "question " + std::to_string(i), "answer"});
  return c;
}

TEST_CASE("rating 11 violates the [1,10] invariant") {
  auto c = minimal_math(2);
  c.interaction_rating = 11;
  auto v = validate_conversation(c);
  REQUIRE(v.size() == 1);
  CHECK(v[0].code == "rating_out_of_range");
}

TEST_CASE("single-turn math conversations are flagged, not dropped") {
  auto c = minimal_math(1);
  auto v = validate_conversation(c);
  REQUIRE(v.size() == 1);
  CHECK(v[0].code == "single_turn_excluded");
  CHECK(single_turn_excluded(c));
  c.task = TaskKind::DocumentCreation;
  CHECK_FALSE(single_turn_excluded(c));
}

TEST_CASE("a fully valid conversation has no violations") {
  CHECK(validate_conversation(minimal_math(2)).empty());
}

TEST_CASE("every emitted violation code is documented") {
  const auto& known = known_violation_codes();
  auto is_known = [&](const std::string& code) {
    return std::find(known.begin(), known.end(), code) != known.end();
  };

  auto broken = minimal_math(3);
  broken.interaction_rating = 0;
  broken.document_rating = 12;
  broken.turns[1].index = 7;
  broken.turns[0].user_message.clear();
  broken.turns[1].assistant_message.clear();
  auto violations = validate_conversation(broken);
  CHECK(violations.size() >= 4);
  for (const auto& v : violations) CHECK(is_known(v.code));

  Scenario s;
  s.id = "x";
  s.kind = TaskKind::MathTutoring;
  s.doc = DocScenario{"blog post", "intent", {}};
  for (const auto& v : validate_scenario(s)) CHECK(is_known(v.code));
}

TEST_CASE("scenario validation flags difficulty and thin prewriting") {
  Scenario s;
  s.id = "m";
  s.kind = TaskKind::MathTutoring;
  s.math = MathScenario{"p", "sol", "1", 6};
  auto v = validate_scenario(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0].code == "difficulty_out_of_range");

  Scenario d;
  d.id = "d";
  d.kind = TaskKind::DocumentCreation;
  d.doc = DocScenario{"email/letter", "intent", {{"q1", "a1"}, {"q2", ""}}};
  auto dv = validate_scenario(d);
  REQUIRE(dv.size() == 1);
  CHECK(dv[0].code == "prewriting_underfilled");

  auto fixtures = load_corpus(ts::fixtures_dir() / "human_doc");
  for (const auto& sc : fixtures.scenarios)
    CHECK(validate_scenario(sc).empty());
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

TEST_CASE("hand-built fixture reproduces hand-counted means") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  auto table = corpus_stats(corpus.conversations);
  REQUIRE(table.per_model.count("tutor-a"));
  const auto& row = table.per_model.at("tutor-a");
  CHECK(row.conversations == 2);
  CHECK(row.mean_turns == doctest::Approx(2.0));
  CHECK(row.mean_user_words == doctest::Approx(7.75));
}

TEST_CASE("corpus stats are permutation invariant") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  auto base = corpus_stats(corpus.conversations);
  auto shuffled = corpus.conversations;
  std::reverse(shuffled.begin(), shuffled.end());
  auto again = corpus_stats(shuffled);
  CHECK(base.overall.mean_turns == again.overall.mean_turns);
  CHECK(base.overall.mean_user_words == again.overall.mean_user_words);
  CHECK(base.per_model.size() == again.per_model.size());
}

TEST_CASE("a single-turn document conversation counts as turns 1, length 5") {
  Conversation c;
  c.id = "solo";
  c.task = TaskKind::DocumentCreation;
  c.scenario_id = "s";
  c.assistant_model = "m";
  c.user_source = {UserSource::Kind::Human, "a"};
  c.turns.push_back({1, "please draft my email now", "done"});
  auto table = corpus_stats(std::vector<Conversation>{c});
  CHECK(table.overall.conversations == 1);
  CHECK(table.overall.mean_turns == doctest::Approx(1.0));
  CHECK(table.overall.mean_user_words == doctest::Approx(5.0));
}

TEST_CASE("single-turn math conversations are excluded from aggregates") {
  std::vector<Conversation> cs{minimal_math(1), minimal_math(2)};
  cs[0].id = "short";
  auto table = corpus_stats(cs);
  CHECK(table.overall.conversations == 1);
  CHECK(table.overall.excluded_single_turn == 1);
  CHECK(table.overall.mean_turns == doctest::Approx(2.0));
}

TEST_CASE("empty input yields an empty table, not a failure") {
  auto table = corpus_stats(std::vector<Conversation>{});
  CHECK(table.per_model.empty());
  CHECK(table.overall.conversations == 0);
}

TEST_CASE("source filter narrows stats to one side") {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  auto humans = corpus_stats(corpus.conversations, std::string("human"));
  CHECK(humans.overall.conversations == 4);
  auto sims = corpus_stats(corpus.conversations, std::string("simulator"));
  CHECK(sims.overall.conversations == 0);
  auto one = corpus_stats(corpus.conversations, std::string("human:ann-3"));
  CHECK(one.overall.conversations == 2);
}

TEST_CASE("benchmark scenario fixture carries the intended difficulty mix") {
  auto scenarios = load_scenarios(ts::fixtures_dir() / "math_benchmark_50.json");
  CHECK(scenarios.size() == 50);
  std::map<int, int> by_level;
  for (const auto& s : scenarios) {
    REQUIRE(s.math.has_value());
    ++by_level[s.math->difficulty];
    CHECK(validate_scenario(s).empty());
  }
  CHECK(by_level[3] == 8);
  CHECK(by_level[4] == 25);
  CHECK(by_level[5] == 17);
}

// ---------------------------------------------------------------------------
// Template engine
// ---------------------------------------------------------------------------

TEST_CASE("placeholders substitute and braces escape") {
  CHECK(render_template("Hello {name}!", {{"name", "world"}}) ==
        "Hello world!");
  CHECK(render_template("{{\"k\": \"{v}\"}}", {{"v", "x"}}) == "{\"k\": \"x\"}");
}

TEST_CASE("a missing placeholder value errors naming the placeholder") {
  try {
    (void)render_template("{math_problem}", {});
    FAIL("expected a template error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Template);
    CHECK(std::string(e.what()).find("math_problem") != std::string::npos);
  }
}

TEST_CASE("stray braces are template errors") {
  CHECK_THROWS_AS((void)render_template("{ oops", {}), Error);
  CHECK_THROWS_AS((void)render_template("oops }", {}), Error);
}

TEST_CASE("every shipped template parses under the placeholder grammar") {
  int seen = 0;
  for (const auto& entry :
       fs::recursive_directory_iterator(ts::templates_dir())) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt")
      continue;
    std::ifstream in(entry.path());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK_NOTHROW((void)template_placeholders(text));
    ++seen;
  }
  CHECK(seen >= 40);
}

// ---------------------------------------------------------------------------
// Length-control rule
// ---------------------------------------------------------------------------

TEST_CASE("length range widens 3..43 to 1..45") {
  std::vector<int> counts{3, 17, 43};
  auto r = derive_length_range(counts);
  CHECK(r.lo == 1);
  CHECK(r.hi == 45);
}

TEST_CASE("length range keeps exact multiples of five") {
  std::vector<int> counts{5, 12, 40};
  auto r = derive_length_range(counts);
  CHECK(r.lo == 5);
  CHECK(r.hi == 40);
}

TEST_CASE("length range widens a single count 7 to 5..10") {
  std::vector<int> counts{7};
  auto r = derive_length_range(counts);
  CHECK(r.lo == 5);
  CHECK(r.hi == 10);
}

TEST_CASE("length range rejects empty input") {
  CHECK_THROWS_AS((void)derive_length_range(std::vector<int>{}), Error);
}

TEST_CASE("length range invariants hold on random inputs") {
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> counts;
    const int n = ts::rand_int(1, 12);
    for (int i = 0; i < n; ++i) counts.push_back(ts::rand_int(1, 300));
    auto r = derive_length_range(counts);
    const int lo_count = *std::min_element(counts.begin(), counts.end());
    const int hi_count = *std::max_element(counts.begin(), counts.end());
    CHECK((r.lo % 5 == 0 || r.lo == 1));
    CHECK(r.hi % 5 == 0);
    CHECK(r.lo <= lo_count);
    CHECK(r.hi >= hi_count);
    CHECK(r.lo >= 1);
  }
}

// ---------------------------------------------------------------------------
// Simulator output parsing
// ---------------------------------------------------------------------------

TEST_CASE("cot output splits into thought and message") {
  auto out = parse_simulator_output("Thought: t\n\nResponse: hi there", true);
  REQUIRE(out.thought.has_value());
  CHECK(*out.thought == "t");
  CHECK(out.message == "hi there");
  CHECK_FALSE(out.terminate);
}

TEST_CASE("bare terminate phrase terminates in non-cot mode") {
  auto out = parse_simulator_output("terminate conversation", false);
  CHECK(out.terminate);
  CHECK(out.message.empty());
}

TEST_CASE("terminate detection is case-insensitive after a marker") {
  auto out = parse_simulator_output(
      "Thought: x\nMessage: Terminate Conversation", true);
  CHECK(out.terminate);
  CHECK(out.message.empty());
}

TEST_CASE("terminate phrase tolerates whitespace but not extra words") {
  CHECK(parse_simulator_output("  Terminate   conversation \n", false).terminate);
  CHECK(parse_simulator_output("TERMINATE CONVERSATION", true).terminate);
  auto longer = parse_simulator_output(
      "maybe we should terminate conversation soon", false);
  CHECK_FALSE(longer.terminate);
  auto punctuated = parse_simulator_output("terminate conversation.", false);
  CHECK_FALSE(punctuated.terminate);
}

TEST_CASE("cot output without a marker is a parse error carrying the text") {
  try {
    (void)parse_simulator_output("just some rambling text", true);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("rambling") != std::string::npos);
  }
}

TEST_CASE("the last marker wins when instructions are echoed") {
  auto out = parse_simulator_output(
      "Output format is Response: [your response]\nThought: hm\nResponse: real answer",
      true);
  CHECK(out.message == "real answer");
}

TEST_CASE("refined message marker is recognized") {
  auto out = parse_simulator_output(
      "Thought: tighten wording\n\nRefined Message: shorter msg", true);
  CHECK(out.message == "shorter msg");
  REQUIRE(out.thought.has_value());
  CHECK(*out.thought == "tighten wording");
}

TEST_CASE("render-parse round-trip recovers random marker-free messages") {
  const std::string words[] = {"solve", "x",     "first", "why", "ok",
                               "hint",  "stuck", "done",  "try", "again"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string message;
    const int n = ts::rand_int(1, 12);
    for (int i = 0; i < n; ++i) {
      if (i) message += ' ';
      message += words[std::size_t(ts::rand_int(0, 9))];
    }
    std::string thought = "t" + std::to_string(trial);
    auto cot = parse_simulator_output(
        "Thought: " + thought + "\n\nResponse: " + message, true);
    CHECK(cot.message == message);
    REQUIRE(cot.thought.has_value());
    CHECK(*cot.thought == thought);
    auto plain = parse_simulator_output(message, false);
    CHECK(plain.message == message);
  }
}

// ---------------------------------------------------------------------------
// Prompt building
// ---------------------------------------------------------------------------

static Scenario math_scenario() {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_math");
  for (auto& s : corpus.scenarios)
    if (s.id == "math-hmean-20") return s;
  throw std::runtime_error("fixture scenario missing");
}

static Scenario doc_scenario() {
  auto corpus = load_corpus(ts::fixtures_dir() / "human_doc");
  for (auto& s : corpus.scenarios)
    if (s.id == "doc-landlord-email") return s;
  throw std::runtime_error("fixture scenario missing");
}

static UserProfile sample_profile() {
  UserProfile p;
  p.knowledge = std::vector<ConceptStatus>{
      {"Harmonic mean", "definition as reciprocal of mean reciprocal",
       UnderstandingStatus::Struggling},
      {"Factoring", "completing the rectangle", UnderstandingStatus::KnowsWell},
  };
  p.preferences = std::vector<AttributeValue>{
      {"Formality Level", "Is the user's language formal or casual?",
       "Casual, with contractions throughout."}};
  p.writing_style = {{"Spelling", "Does the user often misspell words?",
                      "Frequent lowercase and occasional typos."}};
  p.interaction_style = {{"Answer Thoroughness",
                          "Detailed or minimal responses?",
                          "Minimal, usually one short sentence."}};
  p.length_range = LengthRange{1, 45};
  return p;
}

TEST_CASE("zero-shot math initial prompt has the problem header, no CoT") {
  TemplateStore store(ts::templates_dir());
  SimulatorStrategy strategy;
  strategy.base = SimulatorBase::ZeroShot;
  auto req =
      build_simulator_prompt(store, math_scenario(), strategy, nullptr, {});
  REQUIRE(req.messages.size() == 1);
  const auto& text = req.messages[0].text;
  CHECK(text.find("# Math Problem:") != std::string::npos);
  CHECK(text.find("harmonic mean") != std::string::npos);
  CHECK(text.find("Thought:") == std::string::npos);
}

TEST_CASE("cot profile follow-up prompt carries profile and history sections") {
  TemplateStore store(ts::templates_dir());
  SimulatorStrategy strategy;
  strategy.profile_parts = {ProfilePart::InteractionStyle};
  auto profile = sample_profile();
  std::vector<Turn> history{{1, "what is a harmonic mean", "It is ..."}};
  auto req = build_simulator_prompt(store, math_scenario(), strategy, &profile,
                                    history);
  const auto& text = req.messages[0].text;
  CHECK(text.find("# User Profile") != std::string::npos);
  CHECK(text.find("# Conversation History:") != std::string::npos);
  CHECK(text.find("what is a harmonic mean") != std::string::npos);
  CHECK(text.find("## Interaction Style") != std::string::npos);
  CHECK(text.find("## Writing Style") == std::string::npos);
}

TEST_CASE("length control renders the between-words phrase") {
  TemplateStore store(ts::templates_dir());
  SimulatorStrategy strategy;
  strategy.length_control = true;
  auto profile = sample_profile();
  auto req =
      build_simulator_prompt(store, math_scenario(), strategy, &profile, {});
  CHECK(req.messages[0].text.find("between 1 and 45 words") !=
        std::string::npos);
}

TEST_CASE("profile sections render exactly the selected parts") {
  auto profile = sample_profile();
  for (int mask = 1; mask < 8; ++mask) {
    SimulatorStrategy strategy;
    if (mask & 1) strategy.profile_parts.insert(ProfilePart::InherentKnowledge);
    if (mask & 2) strategy.profile_parts.insert(ProfilePart::WritingStyle);
    if (mask & 4) strategy.profile_parts.insert(ProfilePart::InteractionStyle);
    const std::string block =
        render_profile_block(strategy, profile, TaskKind::MathTutoring);
    CHECK((block.find("## Inherent Knowledge") != std::string::npos) ==
          bool(mask & 1));
    CHECK((block.find("## Writing Style") != std::string::npos) ==
          bool(mask & 2));
    CHECK((block.find("## Interaction Style") != std::string::npos) ==
          bool(mask & 4));
  }
}

TEST_CASE("doc profiles serialize preferences instead of knowledge") {
  SimulatorStrategy strategy;
  strategy.profile_parts = {ProfilePart::InherentKnowledge};
  auto profile = sample_profile();
  const std::string block =
      render_profile_block(strategy, profile, TaskKind::DocumentCreation);
  CHECK(block.find("## Document Preferences") != std::string::npos);
  CHECK(block.find("Formality Level") != std::string::npos);
  CHECK(block.find("Inherent Knowledge") == std::string::npos);
}

TEST_CASE("prompt rendering is a pure function of its inputs") {
  TemplateStore store(ts::templates_dir());
  SimulatorStrategy strategy;
  strategy.profile_parts = {ProfilePart::WritingStyle};
  strategy.length_control = true;
  auto profile = sample_profile();
  std::vector<Turn> history{{1, "hi", "hello"}};
  auto a = build_simulator_prompt(store, doc_scenario(), strategy, &profile,
                                  history);
  auto b = build_simulator_prompt(store, doc_scenario(), strategy, &profile,
                                  history);
  CHECK(a.messages[0].text == b.messages[0].text);
}

TEST_CASE("profile-less strategies reject a supplied profile and vice versa") {
  TemplateStore store(ts::templates_dir());
  SimulatorStrategy plain;
  plain.base = SimulatorBase::ZeroShot;
  auto profile = sample_profile();
  CHECK_THROWS_AS((void)build_simulator_prompt(store, math_scenario(), plain,
                                               &profile, {}),
                  Error);
  SimulatorStrategy wants;
  wants.profile_parts = {ProfilePart::WritingStyle};
  CHECK_THROWS_AS(
      (void)build_simulator_prompt(store, math_scenario(), wants, nullptr, {}),
      Error);
}

TEST_CASE("strategy labels round-trip") {
  for (const char* label :
       {"zero-shot", "zero-shot-cot", "zero-shot-cot+lc",
        "zero-shot-cot+profile(IK)", "zero-shot-cot+profile(IK,WS,IS)+lc",
        "zero-shot-cot+profile(WS)+refine"}) {
    auto s = strategy_from_label(label);
    CHECK(strategy_label(s) == label);
  }
  CHECK_THROWS_AS((void)strategy_from_label("few-shot"), Error);
}

// ---------------------------------------------------------------------------
// Attribute registries
// ---------------------------------------------------------------------------

TEST_CASE("seed registry ships 11 writing and 10 interaction attributes") {
  auto r = load_seed_registry(ts::attributes_dir(), TaskKind::MathTutoring);
  CHECK(r.writing.size() == 11);
  CHECK(r.interaction.size() == 10);
  CHECK(r.contains(AttributeCategory::Writing, "grammatical accuracy"));
  CHECK(r.contains(AttributeCategory::Interaction, "Message Length"));
}

TEST_CASE("finalized registries ship the full per-task lists") {
  auto math =
      load_finalized_registry(ts::attributes_dir(), TaskKind::MathTutoring);
  CHECK(math.writing.size() == 12);
  CHECK(math.interaction.size() == 17);
  CHECK(math.contains(AttributeCategory::Writing,
                      "Use of Mathematical Symbols and Notation"));

  auto doc =
      load_finalized_registry(ts::attributes_dir(), TaskKind::DocumentCreation);
  CHECK(doc.writing.size() == 15);
  CHECK(doc.interaction.size() == 13);
}

TEST_CASE("registry and profile json round-trip") {
  auto r =
      load_finalized_registry(ts::attributes_dir(), TaskKind::MathTutoring);
  auto again = registry_from_json(to_json(r));
  CHECK(again.writing == r.writing);
  CHECK(again.interaction == r.interaction);

  auto p = sample_profile();
  CHECK(profile_from_json(to_json(p)) == p);
}

TEST_CASE("profiles built from miner-style outputs satisfy the invariants") {
  auto p = sample_profile();
  CHECK(validate_profile(p).empty());
  p.length_range = LengthRange{0, 10};
  CHECK_FALSE(validate_profile(p).empty());
  p.length_range = LengthRange{9, 3};
  CHECK_FALSE(validate_profile(p).empty());
}
