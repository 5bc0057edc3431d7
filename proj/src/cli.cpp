#include "simarena/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "simarena/corpus.hpp"
#include "simarena/judges.hpp"
#include "simarena/miner.hpp"
#include "simarena/reports.hpp"

namespace simarena::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

ProviderSpec provider_from_json(const fs::path& base, const json& j) {
  ProviderSpec spec;
  spec.kind = provider_kind_from_string(j.value("kind", std::string("mock")));
  spec.model_id = j.value("model_id", std::string{});
  spec.endpoint = j.value("endpoint", std::string{});
  spec.auth_env = j.value("auth_env", std::string{});
  spec.fixed_temperature = j.value("fixed_temperature", false);
  if (spec.kind == ProviderKind::Mock) {
    if (j.contains("script")) {
      const auto file = resolve(base, j["script"].get<std::string>());
      std::ifstream in(file);
      if (!in)
        throw Error(ErrorKind::Config,
                    "cannot open mock script '" + file.string() + "'");
      json script;
      in >> script;
      spec.mock = MockScript::from_json(script);
    } else if (j.contains("responses") || j.contains("rules")) {
      spec.mock = MockScript::from_json(j);
    } else {
      throw Error(ErrorKind::Config, "mock provider needs a script");
    }
  }
  validate_provider_spec(spec);
  return spec;
}

SamplingParams sampling_from_json(const json& j, SamplingParams defaults) {
  SamplingParams p = defaults;
  if (j.contains("temperature")) p.temperature = j["temperature"].get<double>();
  if (j.contains("top_p")) p.top_p = j["top_p"].get<double>();
  return p;
}

}  // namespace

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Config, "cannot open config '" + file.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config,
                "malformed config '" + file.string() + "': " + e.what());
  }

  RunConfig config;
  config.raw = j;
  config.base_dir = fs::absolute(file).parent_path();
  config.task = task_kind_from_string(j.at("task").get<std::string>());
  config.templates_dir =
      resolve(config.base_dir, j.value("templates_dir", std::string("templates")));
  config.attributes_dir = resolve(
      config.base_dir, j.value("attributes_dir", std::string("attributes")));
  config.scenario_set =
      resolve(config.base_dir, j.value("scenario_set", std::string{}));
  config.profiles = j.value("profiles", std::string{});
  config.corpus = resolve(config.base_dir, j.value("corpus", std::string{}));
  config.cache_dir =
      resolve(config.base_dir, j.value("cache_dir", std::string{}));
  config.price_table =
      resolve(config.base_dir, j.value("price_table", std::string{}));
  config.parallelism = j.value("parallelism", 1);
  config.seed = j.value("seed", 0u);
  config.similarity = j.value("similarity", true);
  config.normalize_human = j.value("normalize_human_ratings", true);
  config.post_hoc_truncate = j.value("post_hoc_truncate", false);
  if (j.contains("limits")) {
    config.limits.max_turns = j["limits"].value("max_turns", 20);
    if (j["limits"].contains("max_total_tokens"))
      config.limits.max_total_tokens =
          j["limits"]["max_total_tokens"].get<std::int64_t>();
  }
  if (config.parallelism < 1)
    throw Error(ErrorKind::Config, "parallelism must be >= 1");

  if (j.contains("simulator")) {
    const json& sim = j["simulator"];
    config.simulator.id = sim.value("id", std::string("simulator"));
    config.simulator.provider =
        provider_from_json(config.base_dir, sim.at("provider"));
    config.simulator.sampling = sampling_from_json(
        sim.value("sampling", json::object()), simulator_sampling());
    config.simulator.strategy = strategy_from_label(
        sim.value("strategy", std::string("zero-shot-cot")));
  }
  if (j.contains("assistants")) {
    for (const auto& a : j["assistants"]) {
      AssistantSpec spec;
      spec.id = a.at("id").get<std::string>();
      spec.provider = provider_from_json(config.base_dir, a.at("provider"));
      spec.sampling = sampling_from_json(a.value("sampling", json::object()),
                                         assistant_sampling());
      spec.system_template = a.value("system_template", std::string{});
      config.assistants.push_back(std::move(spec));
    }
  }
  if (j.contains("rater")) {
    RaterSpec spec;
    spec.id = j["rater"].value("id", std::string("rater"));
    spec.provider = provider_from_json(config.base_dir, j["rater"].at("provider"));
    spec.sampling = sampling_from_json(
        j["rater"].value("sampling", json::object()), rater_sampling());
    config.rater = std::move(spec);
  }
  if (j.contains("doc_updater")) {
    AssistantSpec spec;
    spec.id = j["doc_updater"].value("id", std::string("doc-updater"));
    spec.provider =
        provider_from_json(config.base_dir, j["doc_updater"].at("provider"));
    spec.sampling = sampling_from_json(
        j["doc_updater"].value("sampling", json::object()), rater_sampling());
    config.doc_updater = std::move(spec);
  }
  if (j.contains("rater_families"))
    for (const auto& [rater, models] : j["rater_families"].items())
      for (const auto& m : models)
        config.rater_families[rater].push_back(m.get<std::string>());
  return config;
}

void preflight(const RunConfig& config, bool offline) {
  TemplateStore templates(config.templates_dir);
  const std::string task = to_string(config.task);

  if (config.simulator.provider.mock || !config.simulator.id.empty()) {
    if (config.simulator.provider.kind == ProviderKind::Mock &&
        !config.simulator.provider.mock)
      throw Error(ErrorKind::Config, "simulator mock has no script");
  }
  // the templates this task + strategy will render must exist
  const auto dir = strategy_template_dir(config.simulator.strategy);
  (void)templates.get(task + "/" + dir + "/initial.txt");
  (void)templates.get(task + "/" + dir + "/followup.txt");
  if (config.simulator.strategy.two_stage_refine)
    (void)templates.get(task + "/zero_shot_cot_user_profile/refine.txt");
  (void)templates.get(task + "/assistant_system.txt");
  if (config.task == TaskKind::MathTutoring) {
    (void)templates.get("judging/math_interaction_rating.txt");
    (void)templates.get("judging/answer_correctness.txt");
    (void)templates.get("extraction/student_answer.txt");
  } else {
    (void)templates.get("judging/doc_interaction_rating.txt");
    (void)templates.get("judging/document_rating.txt");
    (void)templates.get("extraction/final_document.txt");
  }

  std::vector<const ProviderSpec*> providers{&config.simulator.provider};
  for (const auto& a : config.assistants) providers.push_back(&a.provider);
  if (config.rater) providers.push_back(&config.rater->provider);
  if (config.doc_updater) providers.push_back(&config.doc_updater->provider);

  PriceTable prices;
  if (!config.price_table.empty()) prices = load_price_table(config.price_table);

  for (const auto* p : providers) {
    validate_provider_spec(*p);
    if (p->kind == ProviderKind::Mock) continue;
    if (offline)
      throw Error(ErrorKind::Config,
                  "--offline forbids non-mock provider '" + p->model_id + "'");
    const char* key = std::getenv(p->auth_env.c_str());
    if (!key || !*key)
      throw Error(ErrorKind::Config,
                  "auth variable " + p->auth_env + " is not set");
    if (!prices.empty() && !prices.count(p->model_id))
      throw Error(ErrorKind::Config,
                  "price table has no entry for '" + p->model_id + "'");
  }

  if (!config.scenario_set.empty() && !fs::exists(config.scenario_set))
    throw Error(ErrorKind::Config,
                "scenario set not found: '" + config.scenario_set.string() + "'");
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace {

struct Context {
  RunConfig config;
  bool offline = false;
  std::unique_ptr<TemplateStore> templates;
  std::unique_ptr<Gateway> gateway;
  PriceTable prices;
};

Context make_context(const RunConfig& config, bool offline) {
  Context ctx;
  ctx.config = config;
  ctx.offline = offline;
  ctx.templates = std::make_unique<TemplateStore>(config.templates_dir);
  GatewayOptions options;
  options.cache_dir = config.cache_dir;
  options.offline = offline;
  ctx.gateway = std::make_unique<Gateway>(options);
  if (!config.price_table.empty()) {
    ctx.prices = load_price_table(config.price_table);
    ctx.gateway->set_price_table(ctx.prices);
  }
  return ctx;
}

std::vector<Scenario> gather_scenarios(const RunConfig& config,
                                       const fs::path& extra_dir) {
  std::vector<Scenario> scenarios;
  std::set<std::string> seen;
  auto take = [&](std::vector<Scenario> more) {
    for (auto& s : more)
      if (seen.insert(s.id).second) scenarios.push_back(std::move(s));
  };
  if (!config.scenario_set.empty()) take(load_scenarios(config.scenario_set));
  if (!extra_dir.empty() && fs::is_directory(extra_dir))
    take(load_corpus(extra_dir).scenarios);
  if (!config.corpus.empty() && fs::is_directory(config.corpus))
    take(load_corpus(config.corpus).scenarios);
  return scenarios;
}

std::map<std::string, const Scenario*> index_scenarios(
    const std::vector<Scenario>& scenarios) {
  std::map<std::string, const Scenario*> idx;
  for (const auto& s : scenarios) idx[s.id] = &s;
  return idx;
}

struct StoredProfile {
  std::string id;
  std::string scenario_id;  // optional binding
  UserProfile profile;
};

std::vector<StoredProfile> load_profiles(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Config,
                "cannot open profiles '" + file.string() + "'");
  json arr;
  in >> arr;
  std::vector<StoredProfile> out;
  for (const auto& j : arr) {
    StoredProfile p;
    p.id = j.value("id", std::string{});
    p.scenario_id = j.value("scenario_id", std::string{});
    p.profile = profile_from_json(j.at("profile"));
    out.push_back(std::move(p));
  }
  return out;
}

std::string preferences_block(const UserProfile& profile) {
  if (!profile.preferences || profile.preferences->empty())
    return "(not specified)";
  std::string out;
  for (const auto& v : *profile.preferences)
    out += "- " + v.name + " — " + v.question + ": " + v.answer + "\n";
  out.pop_back();
  return out;
}

json template_hashes(const TemplateStore& templates) {
  json j = json::object();
  std::vector<fs::path> files;
  for (const auto& entry :
       fs::recursive_directory_iterator(templates.root()))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(fs::relative(entry.path(), templates.root()));
  std::sort(files.begin(), files.end());
  for (const auto& rel : files)
    j[rel.generic_string()] = templates.content_hash(rel.generic_string());
  return j;
}

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::Config ? kConfigError : kPartial;
}

}  // namespace

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

namespace {

int cmd_ingest(const Context& ctx, const fs::path& input, const fs::path& out) {
  auto corpus = load_corpus(input.empty() ? ctx.config.corpus : input);
  if (!ctx.config.price_table.empty())
    fill_missing_costs(corpus.conversations,
                       load_price_table(ctx.config.price_table));
  auto table = corpus_stats(corpus.conversations);

  json report;
  report["conversations"] = corpus.conversations.size();
  report["scenarios"] = corpus.scenarios.size();
  report["record_errors"] = json::array();
  for (const auto& e : corpus.record_errors)
    report["record_errors"].push_back(
        {{"file", e.file}, {"line", e.line}, {"message", e.message}});
  report["violations"] = json::array();
  for (const auto& [id, v] : corpus.violations)
    report["violations"].push_back({{"conversation_id", id},
                                    {"code", v.code},
                                    {"field", v.field},
                                    {"message", v.message}});
  report["stats"] = stats_to_json(table);

  const fs::path out_dir = out.empty() ? input / "reports" : out;
  write_text(out_dir / "corpus_stats.json", report.dump(2) + "\n");
  write_text(out_dir / "corpus_stats.md", stats_to_markdown(table));

  std::cout << "loaded " << corpus.conversations.size() << " conversations, "
            << corpus.scenarios.size() << " scenarios, "
            << corpus.record_errors.size() << " record errors, "
            << corpus.violations.size() << " violations\n";
  return corpus.record_errors.empty() ? kOk : kPartial;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct Assignment {
  std::map<std::string, std::string> profile_by_scenario;  // scenario -> id
  std::map<std::string, UserProfile> profiles;             // id -> profile
};

Assignment assign_profiles(const RunConfig& config,
                           const std::vector<Scenario>& scenarios) {
  Assignment assignment;
  const auto& strategy = config.simulator.strategy;
  const bool needs_profile =
      !strategy.profile_parts.empty() || strategy.length_control;
  if (!needs_profile) return assignment;

  std::vector<StoredProfile> pool;
  if (!config.profiles.empty() && config.profiles != "from-corpus") {
    pool = load_profiles(resolve(config.base_dir, config.profiles));
  } else if (config.profiles == "from-corpus") {
    const auto file = config.corpus / "profiles.json";
    if (fs::exists(file)) {
      pool = load_profiles(file);
    } else if (strategy.profile_parts.empty()) {
      // length control alone can be derived straight from the human logs
      auto corpus = load_corpus(config.corpus);
      std::map<std::string, std::vector<int>> counts;
      for (const auto& c : corpus.conversations) {
        if (c.user_source.kind != UserSource::Kind::Human) continue;
        for (const auto& t : c.turns)
          counts[c.scenario_id].push_back(int(word_count(t.user_message)));
      }
      for (auto& [scenario_id, words] : counts) {
        StoredProfile p;
        p.id = "lc-" + scenario_id;
        p.scenario_id = scenario_id;
        p.profile.length_range = derive_length_range(words);
        pool.push_back(std::move(p));
      }
    } else {
      throw Error(ErrorKind::Config,
                  "profiles = from-corpus needs '" + file.string() +
                      "'; run the profile command first");
    }
  } else {
    throw Error(ErrorKind::Config,
                "the chosen strategy needs profiles (set `profiles`)");
  }
  if (pool.empty())
    throw Error(ErrorKind::Config, "no usable profiles were found");

  std::vector<const Scenario*> ordered;
  for (const auto& s : scenarios) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const Scenario* a, const Scenario* b) { return a->id < b->id; });

  std::mt19937 engine(config.seed);
  for (const Scenario* s : ordered) {
    std::vector<const StoredProfile*> candidates;
    for (const auto& p : pool)
      if (p.scenario_id == s->id) candidates.push_back(&p);
    if (candidates.empty())
      for (const auto& p : pool) candidates.push_back(&p);
    const auto& pick =
        *candidates[std::size_t(engine() % candidates.size())];
    assignment.profile_by_scenario[s->id] = pick.id;
    assignment.profiles[pick.id] = pick.profile;
  }
  return assignment;
}

int cmd_simulate(Context& ctx, const fs::path& run_dir) {
  preflight(ctx.config, ctx.offline);
  if (ctx.config.scenario_set.empty())
    throw Error(ErrorKind::Config, "simulate needs a scenario_set");
  if (ctx.config.assistants.empty())
    throw Error(ErrorKind::Config, "simulate needs at least one assistant");
  if (ctx.config.task == TaskKind::DocumentCreation && !ctx.config.doc_updater)
    throw Error(ErrorKind::Config,
                "document runs need a doc_updater provider");

  auto scenarios = load_scenarios(ctx.config.scenario_set);
  for (const auto& s : scenarios)
    if (s.kind != ctx.config.task)
      throw Error(ErrorKind::Config,
                  "scenario '" + s.id + "' does not match the config task");

  const Assignment assignment = assign_profiles(ctx.config, scenarios);

  struct Job {
    const Scenario* scenario;
    const AssistantSpec* assistant;
  };
  std::vector<Job> jobs;
  for (const auto& assistant : ctx.config.assistants)
    for (const auto& scenario : scenarios)
      jobs.push_back({&scenario, &assistant});

  std::vector<Conversation> results(jobs.size());
  std::atomic<int> aborted{0};
  auto run_job = [&](std::size_t i) {
    const Job& job = jobs[i];
    SessionSetup setup;
    setup.scenario = *job.scenario;
    setup.simulator = ctx.config.simulator;
    setup.assistant = *job.assistant;
    setup.doc_updater = ctx.config.doc_updater;
    setup.limits = ctx.config.limits;
    setup.conversation_id = job.scenario->id + "__" + job.assistant->id;
    setup.prices = ctx.prices.empty() ? nullptr : &ctx.prices;
    const UserProfile* profile = nullptr;
    auto pi = assignment.profile_by_scenario.find(job.scenario->id);
    if (pi != assignment.profile_by_scenario.end())
      profile = &assignment.profiles.at(pi->second);
    setup.profile = profile;
    results[i] = run_session(*ctx.gateway, *ctx.templates, setup);
    if (results[i].status == "aborted") ++aborted;
  };

  const int workers = std::max(1, ctx.config.parallelism);
  for (std::size_t begin = 0; begin < jobs.size();
       begin += std::size_t(workers)) {
    std::vector<std::future<void>> batch;
    const std::size_t end =
        std::min(jobs.size(), begin + std::size_t(workers));
    for (std::size_t i = begin; i < end; ++i)
      batch.push_back(std::async(std::launch::async, run_job, i));
    for (auto& f : batch) f.get();
  }

  fs::create_directories(run_dir);
  fs::remove(run_dir / "conversations.jsonl");
  for (const auto& c : results)
    append_jsonl(run_dir / "conversations.jsonl", to_json(c));

  json manifest;
  manifest["task"] = to_string(ctx.config.task);
  manifest["seed"] = ctx.config.seed;
  manifest["simulator"] = {
      {"id", ctx.config.simulator.id},
      {"strategy", strategy_label(ctx.config.simulator.strategy)},
      {"model", ctx.config.simulator.provider.model_id}};
  json assistants = json::array();
  for (const auto& a : ctx.config.assistants) assistants.push_back(a.id);
  manifest["assistants"] = std::move(assistants);
  manifest["limits"] = {{"max_turns", ctx.config.limits.max_turns}};
  json assigned = json::object();
  for (const auto& [scenario, profile_id] : assignment.profile_by_scenario)
    assigned[scenario] = profile_id;
  manifest["profile_assignment"] = std::move(assigned);
  json profiles = json::object();
  for (const auto& [id, profile] : assignment.profiles)
    profiles[id] = to_json(profile);
  manifest["profiles"] = std::move(profiles);
  manifest["template_hashes"] = template_hashes(*ctx.templates);
  manifest["config_snapshot"] = ctx.config.raw;
  write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");

  json audit;
  const auto a = ctx.gateway->audit();
  audit["calls"] = a.calls;
  audit["cache_hits"] = a.cache_hits;
  audit["network_requests"] = a.network_requests;
  audit["cost_usd"] = a.cost_usd;
  write_text(run_dir / "audit.json", audit.dump(2) + "\n");

  std::cout << "simulated " << results.size() << " conversations into "
            << run_dir.string() << " (" << aborted.load() << " aborted)\n";
  return aborted.load() == 0 ? kOk : kPartial;
}

// ---------------------------------------------------------------------------
// judge
// ---------------------------------------------------------------------------

int cmd_judge(Context& ctx, const fs::path& run_dir) {
  preflight(ctx.config, ctx.offline);
  if (!ctx.config.rater)
    throw Error(ErrorKind::Config, "judge needs a rater provider");
  bool has_log = false;
  if (fs::is_directory(run_dir))
    for (const auto& entry : fs::directory_iterator(run_dir))
      if (entry.path().extension() == ".jsonl" &&
          entry.path().filename() != "verdicts.jsonl" &&
          entry.path().filename() != "similarity.jsonl" &&
          entry.path().filename() != "turing.jsonl")
        has_log = true;
  if (!has_log)
    throw Error(ErrorKind::Config,
                "no conversation log (*.jsonl) under '" + run_dir.string() + "'");

  auto corpus = load_corpus(run_dir);
  auto scenarios = gather_scenarios(ctx.config, run_dir);
  auto scenario_idx = index_scenarios(scenarios);

  // profiles from the run manifest feed the document-rating preferences
  std::map<std::string, UserProfile> profile_by_scenario;
  if (fs::exists(run_dir / "manifest.json")) {
    std::ifstream in(run_dir / "manifest.json");
    json manifest;
    in >> manifest;
    if (manifest.contains("profile_assignment"))
      for (const auto& [scenario, pid] :
           manifest["profile_assignment"].items())
        profile_by_scenario[scenario] =
            profile_from_json(manifest["profiles"].at(pid.get<std::string>()));
  }

  std::vector<VerdictRecord> records;
  json skipped = json::array();
  json truncations = json::array();
  int failures = 0;

  for (auto& c : corpus.conversations) {
    if (c.status == "aborted" || single_turn_excluded(c)) {
      skipped.push_back(
          {{"conversation_id", c.id},
           {"reason", c.status == "aborted" ? "aborted" : "single_turn_excluded"}});
      continue;
    }
    auto sit = scenario_idx.find(c.scenario_id);
    if (sit == scenario_idx.end()) {
      JudgeVerdict v;
      v.kind = VerdictKind::InteractionRating;
      v.failed = true;
      v.failure = "unknown scenario '" + c.scenario_id + "'";
      records.push_back({c.id, ctx.config.rater->id, v});
      ++failures;
      continue;
    }
    const Scenario& scenario = *sit->second;

    if (ctx.config.post_hoc_truncate &&
        c.task == TaskKind::DocumentCreation) {
      auto result = post_hoc_truncate(*ctx.gateway, *ctx.templates, scenario,
                                      c, *ctx.config.rater);
      truncations.push_back({{"conversation_id", c.id},
                             {"ending_turn", result.ending_turn},
                             {"reason", result.reason},
                             {"truncated", result.truncated}});
      if (result.truncated) c = std::move(result.conversation);
    }

    auto push = [&](JudgeVerdict v) {
      if (v.failed) ++failures;
      records.push_back({c.id, ctx.config.rater->id, std::move(v)});
    };
    auto guarded = [&](VerdictKind kind, auto&& fn) {
      try {
        push(fn());
      } catch (const Error& e) {
        JudgeVerdict v;
        v.kind = kind;
        v.failed = true;
        v.failure = e.what();
        push(std::move(v));
      }
    };

    guarded(VerdictKind::InteractionRating, [&] {
      return rate_interaction(*ctx.gateway, *ctx.templates, scenario, c,
                              *ctx.config.rater);
    });

    if (ctx.config.task == TaskKind::MathTutoring) {
      guarded(VerdictKind::Correctness, [&] {
        std::string answer = c.final_answer.value_or("");
        if (answer.empty())
          answer = extract_student_answer(*ctx.gateway, *ctx.templates,
                                          scenario.math->statement, c,
                                          *ctx.config.rater);
        return check_correct(*ctx.gateway, *ctx.templates,
                             scenario.math->statement,
                             scenario.math->gold_answer, answer,
                             *ctx.config.rater);
      });
    } else {
      guarded(VerdictKind::DocumentRating, [&] {
        std::string doc = c.final_document.value_or("");
        std::string prefs = "(not specified)";
        auto pit = profile_by_scenario.find(c.scenario_id);
        if (pit != profile_by_scenario.end())
          prefs = preferences_block(pit->second);
        return rate_document(*ctx.gateway, *ctx.templates, scenario, doc,
                             prefs, *ctx.config.rater);
      });
    }
  }

  fs::remove(run_dir / "verdicts.jsonl");
  for (const auto& r : records) append_verdict(run_dir / "verdicts.jsonl", r);

  if (!truncations.empty()) {
    fs::remove(run_dir / "truncations.jsonl");
    for (const auto& t : truncations)
      append_jsonl(run_dir / "truncations.jsonl", t);
  }

  json summary;
  summary["verdicts"] = records.size();
  summary["failures"] = failures;
  summary["skipped"] = std::move(skipped);
  const auto audit = ctx.gateway->audit();
  summary["audit"] = {{"calls", audit.calls},
                      {"cache_hits", audit.cache_hits},
                      {"network_requests", audit.network_requests}};
  write_text(run_dir / "judge_summary.json", summary.dump(2) + "\n");

  std::cout << "judged " << records.size() << " verdicts (" << failures
            << " failed, " << summary["skipped"].size() << " skipped)\n";
  return failures == 0 ? kOk : kPartial;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct LoadedRun {
  std::vector<Conversation> conversations;
  std::vector<VerdictRecord> verdicts;
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.conversations = load_corpus(dir).conversations;
  run.verdicts = load_verdicts(dir / "verdicts.jsonl");
  return run;
}

int cmd_evaluate(Context& ctx, const fs::path& run_dir, const fs::path& human,
                 const fs::path& compare) {
  preflight(ctx.config, ctx.offline);
  auto human_corpus = load_corpus(human);
  auto run = load_run(run_dir);
  auto scenarios = gather_scenarios(ctx.config, human);
  auto scenario_idx = index_scenarios(scenarios);

  const auto pairing =
      pair_conversations(human_corpus.conversations, run.conversations);

  int turing_errors = 0;
  if (ctx.config.similarity && ctx.config.rater) {
    auto registry = load_finalized_registry(ctx.config.attributes_dir,
                                            ctx.config.task);
    fs::remove(run_dir / "similarity.jsonl");
    fs::remove(run_dir / "turing.jsonl");
    for (const auto& p : pairing.pairs) {
      auto sit = scenario_idx.find(p.human->scenario_id);
      if (sit == scenario_idx.end()) continue;
      const Scenario& scenario = *sit->second;
      for (auto kind :
           {AttributeCategory::Writing, AttributeCategory::Interaction}) {
        try {
          auto v = likert_similarity(*ctx.gateway, *ctx.templates, kind,
                                     scenario, *p.human, *p.sim, registry,
                                     *ctx.config.rater);
          append_verdict(run_dir / "similarity.jsonl",
                         {p.sim->id, ctx.config.rater->id, v});
        } catch (const Error&) {
          // recorded implicitly: missing verdicts shrink the mean's n
        }
      }
      try {
        auto trial = turing_trial(*ctx.gateway, *ctx.templates, scenario,
                                  *p.human, *p.sim, *ctx.config.rater);
        append_turing(run_dir / "turing.jsonl",
                      {p.human->id, p.sim->id, trial.picked_real,
                       trial.tie_broken, trial.equal_confidence});
      } catch (const Error&) {
        ++turing_errors;
      }
    }
  }

  EvaluationInputs in;
  in.task = ctx.config.task;
  in.normalize_human = ctx.config.normalize_human;
  in.human = &human_corpus.conversations;
  in.sim = &run.conversations;
  in.scenarios = &scenarios;
  in.sim_verdicts = &run.verdicts;
  auto human_verdicts = load_verdicts(human / "verdicts.jsonl");
  in.human_verdicts = &human_verdicts;
  auto similarity = load_verdicts(run_dir / "similarity.jsonl");
  in.similarity = &similarity;
  auto turing = load_turing(run_dir / "turing.jsonl");
  in.turing = &turing;

  auto report = compute_evaluation(in);
  report.turing_errors = turing_errors;

  if (!compare.empty()) {
    auto other = load_run(compare);
    EvaluationInputs other_in = in;
    other_in.sim = &other.conversations;
    other_in.sim_verdicts = &other.verdicts;

    const auto mine = intermediate_means(in);
    const auto theirs = intermediate_means(other_in);
    std::vector<double> h, a, b;
    for (const auto& [key, values] : mine) {
      auto it = theirs.find(key);
      if (it == theirs.end()) continue;
      h.push_back(values.first);
      a.push_back(values.second);
      b.push_back(it->second.second);
    }
    if (h.size() >= 4) {
      try {
        const double r12 = stats::spearman(h, a);
        const double r13 = stats::spearman(h, b);
        const double r23 = stats::spearman(a, b);
        auto w = stats::williams_test(r12, r13, r23, int(h.size()));
        SignificanceEntry entry;
        entry.comparison = run_dir.filename().string() + " vs " +
                           compare.filename().string();
        entry.metric = "interaction_intermediate";
        entry.statistic = w.t;
        entry.p_two_sided = w.p_two_sided;
        entry.n = int(h.size());
        entry.method = "williams_on_spearman";
        report.significance.push_back(std::move(entry));
      } catch (const Error&) {
        // degenerate correlations (constant or |r| = 1) have no test
      }
    }

    if (ctx.config.task == TaskKind::MathTutoring) {
      auto labels = [&](const EvaluationInputs& inputs) {
        std::map<std::string, bool> agrees;  // human conv id -> sim agrees
        const auto p = pair_conversations(*inputs.human, *inputs.sim);
        std::map<std::string, std::string> human_labels, sim_labels;
        for (const auto& r : *inputs.human_verdicts)
          if (r.verdict.kind == VerdictKind::Correctness && r.verdict.label)
            human_labels[r.conversation_id] = *r.verdict.label;
        for (const auto& r : *inputs.sim_verdicts)
          if (r.verdict.kind == VerdictKind::Correctness && r.verdict.label)
            sim_labels[r.conversation_id] = *r.verdict.label;
        for (const auto& pc : p.pairs) {
          auto hl = human_labels.find(pc.human->id);
          auto sl = sim_labels.find(pc.sim->id);
          if (hl == human_labels.end() || sl == sim_labels.end()) continue;
          agrees[pc.human->id] = hl->second == sl->second;
        }
        return agrees;
      };
      const auto mine_agree = labels(in);
      const auto their_agree = labels(other_in);
      int b_count = 0, c_count = 0, n = 0;
      for (const auto& [id, a_ok] : mine_agree) {
        auto it = their_agree.find(id);
        if (it == their_agree.end()) continue;
        ++n;
        if (a_ok && !it->second) ++b_count;
        if (!a_ok && it->second) ++c_count;
      }
      if (n > 0) {
        SignificanceEntry entry;
        entry.comparison = run_dir.filename().string() + " vs " +
                           compare.filename().string();
        entry.metric = "outcome_agreement";
        entry.statistic = double(b_count - c_count);
        entry.p_two_sided = stats::mcnemar_exact(b_count, c_count);
        entry.n = n;
        entry.method = "mcnemar_exact";
        report.significance.push_back(std::move(entry));
      }
    }
  }

  write_text(run_dir / "reports" / "metrics.json",
             to_json(report).dump(2) + "\n");
  write_text(run_dir / "reports" / "metrics.md", to_markdown(report));

  json eval_inputs;
  eval_inputs["human"] = fs::absolute(human).string();
  if (!compare.empty())
    eval_inputs["compare"] = fs::absolute(compare).string();
  eval_inputs["turing_errors"] = turing_errors;
  const auto audit = ctx.gateway->audit();
  eval_inputs["audit"] = {{"calls", audit.calls},
                          {"cache_hits", audit.cache_hits},
                          {"network_requests", audit.network_requests}};
  write_text(run_dir / "eval_inputs.json", eval_inputs.dump(2) + "\n");

  std::cout << "evaluated " << report.paired << " pairs; reports under "
            << (run_dir / "reports").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// rater-eval
// ---------------------------------------------------------------------------

int cmd_rater_eval(Context& ctx, const fs::path& human,
                   const fs::path& verdicts_file) {
  auto human_corpus = load_corpus(human);
  auto verdicts = load_verdicts(verdicts_file);
  auto scenarios = gather_scenarios(ctx.config, human);
  auto scenario_idx = index_scenarios(scenarios);

  const auto human_z =
      normalized_human_ratings(human_corpus.conversations, false);

  std::string rater_id = "rater";
  std::map<std::string, double> rating_by_conv;
  for (const auto& r : verdicts) {
    if (r.verdict.kind != VerdictKind::InteractionRating || !r.verdict.numeric)
      continue;
    rating_by_conv[r.conversation_id] = *r.verdict.numeric;
    if (!r.rater_id.empty()) rater_id = r.rater_id;
  }

  std::vector<stats::AlignedPair> pairs;
  std::vector<stats::RaterRating> ratings;
  for (const auto& c : human_corpus.conversations) {
    auto z = human_z.find(c.id);
    auto r = rating_by_conv.find(c.id);
    if (z == human_z.end() || r == rating_by_conv.end()) continue;
    stats::AlignedPair p;
    p.human = z->second;
    p.sim = r->second;
    p.key.model = c.assistant_model;
    auto sit = scenario_idx.find(c.scenario_id);
    p.key.stratum = sit == scenario_idx.end() ? "?" : sit->second->stratum();
    pairs.push_back(std::move(p));
    ratings.push_back({rater_id, c.assistant_model, r->second});
  }

  const auto& families = ctx.config.rater_families;
  auto same_family = [&families](const std::string& rater,
                                 const std::string& assistant) {
    auto it = families.find(rater);
    if (it == families.end()) return false;
    return std::find(it->second.begin(), it->second.end(), assistant) !=
           it->second.end();
  };

  auto alignment = stats::rater_alignment(pairs, ratings, same_family);
  RaterEvalReport report;
  report.rater_id = rater_id;
  report.alignment = alignment.alignment;
  report.self_bias = alignment.self_bias;

  const fs::path out = verdicts_file.parent_path() / "reports";
  write_text(out / "rater_eval.json", to_json(report).dump(2) + "\n");
  write_text(out / "rater_eval.md", to_markdown(report));
  std::cout << "rater alignment over " << pairs.size() << " conversations\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// leaderboard
// ---------------------------------------------------------------------------

int cmd_leaderboard(const std::vector<fs::path>& run_dirs,
                    const fs::path& out_dir) {
  if (run_dirs.empty())
    throw Error(ErrorKind::Argument, "leaderboard needs at least one run dir");
  std::optional<TaskKind> task;
  std::vector<Conversation> conversations;
  std::vector<VerdictRecord> verdicts;
  for (const auto& dir : run_dirs) {
    auto run = load_run(dir);
    for (auto& c : run.conversations) {
      if (!task) task = c.task;
      if (c.task != *task)
        throw Error(ErrorKind::Argument,
                    "run dirs mix tasks; leaderboards are per task");
      conversations.push_back(std::move(c));
    }
    for (auto& v : run.verdicts) verdicts.push_back(std::move(v));
  }
  if (!task)
    throw Error(ErrorKind::Argument, "no conversations found in run dirs");

  auto report = compute_leaderboard(*task, conversations, verdicts);
  const fs::path out = out_dir.empty() ? run_dirs[0] / "reports" : out_dir;
  write_text(out / "leaderboard.json", to_json(report).dump(2) + "\n");
  write_text(out / "leaderboard.md", to_markdown(report));
  std::cout << "ranked " << report.rows.size() << " models\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

void merge_profile(std::map<std::string, StoredProfile>& store,
                   const Conversation& c,
                   const std::function<void(UserProfile&)>& update) {
  auto& entry = store[c.id];
  entry.id = c.id;
  entry.scenario_id = c.scenario_id;
  update(entry.profile);
}

int cmd_profile(Context& ctx, const std::string& what, const fs::path& corpus,
                const fs::path& sim_run, int iterations) {
  preflight(ctx.config, ctx.offline);
  if (!ctx.config.rater)
    throw Error(ErrorKind::Config, "profile extraction needs a rater provider");
  const auto& extractor = *ctx.config.rater;

  auto loaded = load_corpus(corpus);
  auto scenario_idx = index_scenarios(loaded.scenarios);

  const fs::path profiles_file = corpus / "profiles.json";
  std::map<std::string, StoredProfile> store;
  if (fs::exists(profiles_file))
    for (auto& p : load_profiles(profiles_file)) store[p.id] = std::move(p);

  auto persist = [&] {
    json arr = json::array();
    for (const auto& [id, p] : store)
      arr.push_back({{"id", p.id},
                     {"scenario_id", p.scenario_id},
                     {"profile", to_json(p.profile)}});
    write_text(profiles_file, arr.dump(2) + "\n");
  };

  if (what == "knowledge") {
    int done = 0;
    for (const auto& c : loaded.conversations) {
      if (c.task != TaskKind::MathTutoring || single_turn_excluded(c)) continue;
      auto sit = scenario_idx.find(c.scenario_id);
      if (sit == scenario_idx.end() || !sit->second->math) continue;
      const auto& math = *sit->second->math;
      auto concepts = extract_concepts(*ctx.gateway, *ctx.templates,
                                       math.statement, math.gold_solution,
                                       extractor);
      if (concepts.empty()) continue;
      auto statuses = classify_understanding(*ctx.gateway, *ctx.templates,
                                             concepts, math.statement, c,
                                             extractor);
      merge_profile(store, c, [&](UserProfile& p) { p.knowledge = statuses; });
      ++done;
    }
    persist();
    std::cout << "extracted knowledge for " << done << " conversations\n";
    return kOk;
  }

  if (what == "preferences") {
    // seed preferences are configurable data, not code
    std::vector<StyleAttribute> seeds;
    const auto seeds_file = ctx.config.attributes_dir / "preference_seeds.json";
    if (fs::exists(seeds_file)) {
      std::ifstream in(seeds_file);
      json arr;
      in >> arr;
      for (const auto& a : arr)
        seeds.push_back({AttributeCategory::Writing,
                         a.at("name").get<std::string>(),
                         a.at("question").get<std::string>()});
    }
    std::map<std::string, std::vector<const Conversation*>> by_doc_type;
    for (const auto& c : loaded.conversations) {
      if (c.task != TaskKind::DocumentCreation) continue;
      auto sit = scenario_idx.find(c.scenario_id);
      if (sit == scenario_idx.end() || !sit->second->doc) continue;
      by_doc_type[sit->second->doc->doc_type].push_back(&c);
    }
    int done = 0;
    for (const auto& [doc_type, convs] : by_doc_type) {
      std::vector<Conversation> batch;
      for (std::size_t i = 0; i < convs.size() && i < 5; ++i)
        batch.push_back(*convs[i]);
      auto discovery = discover_preference_attributes(
          *ctx.gateway, *ctx.templates, doc_type, seeds, batch, extractor);
      for (const auto& w : discovery.warnings) std::cout << w << "\n";
      std::vector<StyleAttribute> attrs = seeds;
      attrs.insert(attrs.end(), discovery.added.begin(), discovery.added.end());

      for (const auto* c : convs) {
        auto values = extract_preference_values(*ctx.gateway, *ctx.templates,
                                                attrs,
                                                *scenario_idx.at(c->scenario_id),
                                                *c, extractor);
        merge_profile(store, *c,
                      [&](UserProfile& p) { p.preferences = values; });
        ++done;
      }
    }
    persist();
    std::cout << "extracted preferences for " << done << " conversations\n";
    return kOk;
  }

  if (what == "styles") {
    auto registry = load_finalized_registry(ctx.config.attributes_dir,
                                            ctx.config.task);
    int done = 0;
    for (const auto& c : loaded.conversations) {
      if (c.task != ctx.config.task || single_turn_excluded(c)) continue;
      auto writing = extract_style_values(*ctx.gateway, *ctx.templates,
                                          registry, AttributeCategory::Writing,
                                          c, extractor);
      auto interaction = extract_style_values(
          *ctx.gateway, *ctx.templates, registry,
          AttributeCategory::Interaction, c, extractor);
      std::vector<int> counts;
      for (const auto& t : c.turns)
        counts.push_back(std::max(1, int(word_count(t.user_message))));
      merge_profile(store, c, [&](UserProfile& p) {
        p.writing_style = writing;
        p.interaction_style = interaction;
        p.length_range = derive_length_range(counts);
      });
      ++done;
    }
    persist();
    std::cout << "extracted styles for " << done << " conversations\n";
    return kOk;
  }

  if (what == "mine") {
    if (sim_run.empty())
      throw Error(ErrorKind::Config, "mine needs --sim-run <dir>");
    auto sims = load_corpus(sim_run).conversations;
    std::map<std::string, const Conversation*> sim_by_scenario;
    for (const auto& c : sims) sim_by_scenario[c.scenario_id] = &c;

    std::vector<Conversation> real, simulated;
    for (const auto& c : loaded.conversations) {
      if (c.task != ctx.config.task) continue;
      auto it = sim_by_scenario.find(c.scenario_id);
      if (it == sim_by_scenario.end()) continue;
      real.push_back(c);
      simulated.push_back(*it->second);
      if (real.size() == 10) break;
    }
    auto seed = load_seed_registry(ctx.config.attributes_dir, ctx.config.task);
    auto mined = mine_style_attributes(*ctx.gateway, *ctx.templates,
                                       ctx.config.task, real, simulated, seed,
                                       iterations, extractor);
    auto finalized =
        finalize_attributes(*ctx.gateway, *ctx.templates, mined, extractor);
    write_text(corpus / "mined_attributes.json", to_json(mined).dump(2) + "\n");
    write_text(corpus / "finalized_attributes.json",
               to_json(finalized).dump(2) + "\n");
    std::cout << "mined " << mined.writing.size() << "+"
              << mined.interaction.size() << " attributes, finalized to "
              << finalized.writing.size() << "+" << finalized.interaction.size()
              << "\n";
    return kOk;
  }

  throw Error(ErrorKind::Config,
              "unknown profile subcommand '" + what +
                  "' (knowledge|preferences|styles|mine)");
}

// ---------------------------------------------------------------------------
// report (pure regeneration)
// ---------------------------------------------------------------------------

int cmd_report(Context& ctx, const fs::path& run_dir) {
  const auto inputs_file = run_dir / "eval_inputs.json";
  if (!fs::exists(inputs_file))
    throw Error(ErrorKind::Config,
                "no eval_inputs.json under '" + run_dir.string() +
                    "'; run evaluate first");
  std::ifstream in(inputs_file);
  json inputs;
  in >> inputs;

  const fs::path human = inputs.at("human").get<std::string>();
  auto human_corpus = load_corpus(human);
  auto run = load_run(run_dir);
  auto scenarios = gather_scenarios(ctx.config, human);

  EvaluationInputs ein;
  ein.task = ctx.config.task;
  ein.normalize_human = ctx.config.normalize_human;
  ein.human = &human_corpus.conversations;
  ein.sim = &run.conversations;
  ein.scenarios = &scenarios;
  ein.sim_verdicts = &run.verdicts;
  auto human_verdicts = load_verdicts(human / "verdicts.jsonl");
  ein.human_verdicts = &human_verdicts;
  auto similarity = load_verdicts(run_dir / "similarity.jsonl");
  ein.similarity = &similarity;
  auto turing = load_turing(run_dir / "turing.jsonl");
  ein.turing = &turing;

  auto report = compute_evaluation(ein);
  report.turing_errors = inputs.value("turing_errors", 0);
  write_text(run_dir / "reports" / "metrics.json",
             to_json(report).dump(2) + "\n");
  write_text(run_dir / "reports" / "metrics.md", to_markdown(report));

  auto table = corpus_stats(run.conversations);
  write_text(run_dir / "reports" / "corpus_stats.json",
             stats_to_json(table).dump(2) + "\n");
  write_text(run_dir / "reports" / "corpus_stats.md",
             stats_to_markdown(table));
  std::cout << "reports regenerated under "
            << (run_dir / "reports").string() << "\n";
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// CLI entry
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
  CLI::App app{"simulator arena: user-simulator evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::string human_dir;
  std::string compare_dir;
  std::string input_dir;
  std::string out_dir;
  std::string verdicts_file;
  std::string profile_what;
  std::string sim_run;
  std::vector<std::string> run_dirs;
  int iterations = 10;
  bool offline = false;
  std::optional<unsigned> seed_override;
  std::optional<int> parallelism_override;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "run config file");
    if (needs_config) opt->required();
    cmd->add_flag("--offline", offline, "forbid non-mock providers");
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_option("--parallelism", parallelism_override,
                    "override config parallelism");
  };

  auto* ingest = app.add_subcommand("ingest", "load and validate a corpus");
  add_common(ingest, false);
  ingest->add_option("--input", input_dir, "corpus file or directory");
  ingest->add_option("--out", out_dir, "report output directory");

  auto* simulate =
      app.add_subcommand("simulate", "run simulator-assistant sessions");
  add_common(simulate, true);
  simulate->add_option("--run-dir", run_dir, "run output directory")
      ->required();

  auto* judge = app.add_subcommand("judge", "rate conversations with a judge");
  add_common(judge, true);
  judge->add_option("--run-dir", run_dir, "run (or corpus) directory")
      ->required();

  auto* evaluate =
      app.add_subcommand("evaluate", "align a simulator run with human data");
  add_common(evaluate, true);
  evaluate->add_option("--run-dir", run_dir, "simulator run directory")
      ->required();
  evaluate->add_option("--human", human_dir, "human corpus directory")
      ->required();
  evaluate->add_option("--compare", compare_dir,
                       "second simulator run for significance tests");

  auto* rater_eval =
      app.add_subcommand("rater-eval", "align a rater with human ratings");
  add_common(rater_eval, true);
  rater_eval->add_option("--human", human_dir, "human corpus directory")
      ->required();
  rater_eval->add_option("--verdicts", verdicts_file,
                         "rater verdicts over the human corpus")
      ->required();

  auto* leaderboard =
      app.add_subcommand("leaderboard", "rank assistants across runs");
  add_common(leaderboard, false);
  leaderboard
      ->add_option("--run-dir", run_dirs, "judged run directory (repeatable)")
      ->required();
  leaderboard->add_option("--out", out_dir, "report output directory");

  auto* profile =
      app.add_subcommand("profile", "extract user profiles from a corpus");
  add_common(profile, true);
  profile
      ->add_option("what", profile_what, "knowledge|preferences|styles|mine")
      ->required();
  profile->add_option("--corpus", input_dir, "corpus directory")->required();
  profile->add_option("--sim-run", sim_run, "simulated run (mine)");
  profile->add_option("--iterations", iterations, "mining rounds");

  auto* report =
      app.add_subcommand("report", "regenerate reports from persisted logs");
  add_common(report, true);
  report->add_option("--run-dir", run_dir, "run directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = load_run_config(config_path);
    if (seed_override) config.seed = *seed_override;
    if (parallelism_override) config.parallelism = *parallelism_override;

    if (ingest->parsed()) {
      Context ctx;
      ctx.config = config;
      return cmd_ingest(ctx, input_dir, out_dir);
    }
    if (leaderboard->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      return cmd_leaderboard(dirs, out_dir);
    }
    auto ctx = make_context(config, offline);
    if (simulate->parsed()) return cmd_simulate(ctx, run_dir);
    if (judge->parsed()) return cmd_judge(ctx, run_dir);
    if (evaluate->parsed())
      return cmd_evaluate(ctx, run_dir, human_dir, compare_dir);
    if (rater_eval->parsed())
      return cmd_rater_eval(ctx, human_dir, verdicts_file);
    if (profile->parsed())
      return cmd_profile(ctx, profile_what, input_dir, sim_run, iterations);
    if (report->parsed()) return cmd_report(ctx, run_dir);
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartial;
  }
}

}  // namespace simarena::cli
