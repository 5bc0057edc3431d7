#include "simarena/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace simarena {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void load_jsonl_file(const fs::path& file, LoadedCorpus& out) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open '" + file.string() + "'");

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Conversation c = conversation_from_json(json::parse(line));
      for (auto& v : validate_conversation(c))
        out.violations.emplace_back(c.id, std::move(v));
      out.conversations.push_back(std::move(c));
    } catch (const std::exception& e) {
      out.record_errors.push_back({file.string(), lineno, e.what()});
    }
  }
}

// Directory scans tolerate non-scenario .json files (run manifests, audits):
// only arrays of scenario objects load.
void load_scenario_file_if_array(const fs::path& file, LoadedCorpus& out,
                                 std::set<std::string>& seen) {
  std::ifstream in(file);
  if (!in) return;
  json arr;
  try {
    in >> arr;
  } catch (const std::exception&) {
    return;
  }
  if (!arr.is_array()) return;
  try {
    for (const auto& j : arr) {
      Scenario s = scenario_from_json(j);
      if (seen.insert(s.id).second) out.scenarios.push_back(std::move(s));
    }
  } catch (const std::exception& e) {
    out.record_errors.push_back({file.string(), 0, e.what()});
  }
}

}  // namespace

std::vector<Scenario> load_scenarios(const fs::path& file) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open '" + file.string() + "'");
  json arr;
  try {
    in >> arr;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io,
                "malformed scenario file '" + file.string() + "': " + e.what());
  }
  if (!arr.is_array())
    throw Error(ErrorKind::Validation,
                "scenario file must hold a JSON array: " + file.string());
  std::vector<Scenario> scenarios;
  for (const auto& j : arr) scenarios.push_back(scenario_from_json(j));
  return scenarios;
}

LoadedCorpus load_corpus(const fs::path& path) {
  LoadedCorpus out;
  std::set<std::string> seen_scenarios;

  if (!fs::exists(path))
    throw Error(ErrorKind::Io, "no such path: '" + path.string() + "'");

  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      // verdict/judge artifacts live beside run logs; they are not records
      const auto name = file.filename().string();
      const bool artifact = name == "verdicts.jsonl" ||
                            name == "similarity.jsonl" ||
                            name == "turing.jsonl";
      if (file.extension() == ".jsonl" && !artifact)
        load_jsonl_file(file, out);
      else if (file.extension() == ".json")
        load_scenario_file_if_array(file, out, seen_scenarios);
    }
  } else if (path.extension() == ".json") {
    for (auto& s : load_scenarios(path))
      if (seen_scenarios.insert(s.id).second)
        out.scenarios.push_back(std::move(s));
  } else {
    load_jsonl_file(path, out);
  }
  return out;
}

void append_jsonl(const fs::path& file, const json& j) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::app);
  if (!out)
    throw Error(ErrorKind::Io, "cannot append to '" + file.string() + "'");
  out << j.dump() << '\n';
}

void write_scenarios(const fs::path& file, std::span<const Scenario> scenarios) {
  fs::create_directories(file.parent_path());
  json arr = json::array();
  for (const auto& s : scenarios) arr.push_back(to_json(s));
  std::ofstream out(file);
  if (!out)
    throw Error(ErrorKind::Io, "cannot write '" + file.string() + "'");
  out << arr.dump(2) << '\n';
}

int fill_missing_costs(std::vector<Conversation>& conversations,
                       const PriceTable& prices) {
  int filled = 0;
  for (auto& c : conversations) {
    if (c.cost_usd) continue;
    auto it = prices.find(c.assistant_model);
    if (it == prices.end()) continue;
    c.cost_usd = estimate_cost(
        {c.usage.prompt_tokens, c.usage.completion_tokens}, c.assistant_model,
        prices);
    ++filled;
  }
  return filled;
}

namespace {

struct StatAcc {
  int conversations = 0;
  int excluded = 0;
  long long turns = 0;
  long long user_words = 0, user_messages = 0;
  long long assistant_words = 0, assistant_messages = 0;
  double cost = 0.0;
  int cost_n = 0;

  void add(const Conversation& c) {
    if (single_turn_excluded(c)) {
      ++excluded;
      return;
    }
    ++conversations;
    turns += (long long)c.turns.size();
    for (const auto& t : c.turns) {
      user_words += (long long)word_count(t.user_message);
      ++user_messages;
      if (!t.assistant_message.empty()) {
        assistant_words += (long long)word_count(t.assistant_message);
        ++assistant_messages;
      }
    }
    if (c.cost_usd) {
      cost += *c.cost_usd;
      ++cost_n;
    }
  }

  StatRow row() const {
    StatRow r;
    r.conversations = conversations;
    r.excluded_single_turn = excluded;
    if (conversations > 0) r.mean_turns = double(turns) / conversations;
    if (user_messages > 0)
      r.mean_user_words = double(user_words) / double(user_messages);
    if (assistant_messages > 0)
      r.mean_assistant_words =
          double(assistant_words) / double(assistant_messages);
    if (cost_n > 0) r.mean_cost = cost / cost_n;
    return r;
  }
};

bool matches_source(const Conversation& c, const std::string& filter) {
  const std::string kind =
      c.user_source.kind == UserSource::Kind::Human ? "human" : "simulator";
  if (filter == kind) return true;
  return filter == kind + ":" + c.user_source.id;
}

}  // namespace

StatTable corpus_stats(std::span<const Conversation> conversations,
                       const std::optional<std::string>& source_filter) {
  StatTable table;
  std::map<std::string, StatAcc> per_model;
  StatAcc overall;
  for (const auto& c : conversations) {
    if (source_filter && !matches_source(c, *source_filter)) continue;
    per_model[c.assistant_model].add(c);
    overall.add(c);
  }
  for (const auto& [model, acc] : per_model) table.per_model[model] = acc.row();
  table.overall = overall.row();
  return table;
}

}  // namespace simarena
