#include "simarena/reports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace simarena {

using nlohmann::json;

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + file.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Verdict persistence
// ---------------------------------------------------------------------------

void append_verdict(const std::filesystem::path& file, const VerdictRecord& r) {
  json j;
  j["conversation_id"] = r.conversation_id;
  j["rater"] = r.rater_id;
  j["verdict"] = r.verdict.to_json();
  append_jsonl(file, j);
}

std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& file) {
  std::vector<VerdictRecord> out;
  std::ifstream in(file);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    VerdictRecord r;
    r.conversation_id = j.at("conversation_id").get<std::string>();
    r.rater_id = j.value("rater", std::string{});
    r.verdict = JudgeVerdict::from_json(j.at("verdict"));
    out.push_back(std::move(r));
  }
  return out;
}

void append_turing(const std::filesystem::path& file, const TuringRecord& r) {
  json j;
  j["real_id"] = r.real_id;
  j["sim_id"] = r.sim_id;
  j["picked_real"] = r.picked_real;
  j["tie_broken"] = r.tie_broken;
  j["equal_confidence"] = r.equal_confidence;
  append_jsonl(file, j);
}

std::vector<TuringRecord> load_turing(const std::filesystem::path& file) {
  std::vector<TuringRecord> out;
  std::ifstream in(file);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("real_id").get<std::string>(),
                   j.at("sim_id").get<std::string>(),
                   j.at("picked_real").get<bool>(),
                   j.at("tie_broken").get<bool>(),
                   j.value("equal_confidence", false)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairing
// ---------------------------------------------------------------------------

namespace {

bool evaluation_excluded(const Conversation& c) {
  return c.status == "aborted" || single_turn_excluded(c);
}

}  // namespace

PairingResult pair_conversations(const std::vector<Conversation>& human,
                                 const std::vector<Conversation>& sim) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::vector<const Conversation*>> h_by_key, s_by_key;
  PairingResult result;

  for (const auto& c : human) {
    if (evaluation_excluded(c)) continue;
    h_by_key[{c.scenario_id, c.assistant_model}].push_back(&c);
  }
  for (const auto& c : sim) {
    if (evaluation_excluded(c)) continue;
    s_by_key[{c.scenario_id, c.assistant_model}].push_back(&c);
  }
  auto by_id = [](const Conversation* a, const Conversation* b) {
    return a->id < b->id;
  };
  for (auto& [key, list] : h_by_key) std::sort(list.begin(), list.end(), by_id);
  for (auto& [key, list] : s_by_key) std::sort(list.begin(), list.end(), by_id);

  for (auto& [key, h_list] : h_by_key) {
    auto it = s_by_key.find(key);
    const std::size_t matched =
        it == s_by_key.end() ? 0 : std::min(h_list.size(), it->second.size());
    for (std::size_t i = 0; i < matched; ++i) {
      PairedConversation p;
      p.human = h_list[i];
      p.sim = it->second[i];
      p.key.model = key.second;
      result.pairs.push_back(p);
    }
    for (std::size_t i = matched; i < h_list.size(); ++i)
      result.unpaired.push_back(h_list[i]->id);
    if (it != s_by_key.end())
      for (std::size_t i = matched; i < it->second.size(); ++i)
        result.unpaired.push_back(it->second[i]->id);
  }
  for (auto& [key, s_list] : s_by_key)
    if (!h_by_key.count(key))
      for (const auto* c : s_list) result.unpaired.push_back(c->id);
  std::sort(result.unpaired.begin(), result.unpaired.end());
  return result;
}

std::map<std::string, double> normalized_human_ratings(
    const std::vector<Conversation>& human, bool document_rating) {
  std::vector<stats::RatingRecord> records;
  for (const auto& c : human) {
    if (evaluation_excluded(c)) continue;
    const auto& rating = document_rating ? c.document_rating
                                         : c.interaction_rating;
    if (!rating) continue;
    stats::RatingRecord r;
    r.annotator_id = c.user_source.id;
    r.conversation_id = c.id;
    r.raw = *rating;
    records.push_back(std::move(r));
  }
  std::map<std::string, double> out;
  for (const auto& r : stats::zscore_normalize(std::move(records)))
    out[r.conversation_id] = *r.normalized;
  return out;
}

namespace {

std::map<std::string, double> raw_human_ratings(
    const std::vector<Conversation>& human, bool document_rating) {
  std::map<std::string, double> out;
  for (const auto& c : human) {
    if (evaluation_excluded(c)) continue;
    const auto& rating = document_rating ? c.document_rating
                                         : c.interaction_rating;
    if (rating) out[c.id] = *rating;
  }
  return out;
}

std::map<std::string, double> human_rating_values(const EvaluationInputs& in,
                                                  bool document_rating) {
  return in.normalize_human
             ? normalized_human_ratings(*in.human, document_rating)
             : raw_human_ratings(*in.human, document_rating);
}

}  // namespace

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, const Scenario*> scenario_index(
    const std::vector<Scenario>* scenarios) {
  std::map<std::string, const Scenario*> idx;
  if (scenarios)
    for (const auto& s : *scenarios) idx[s.id] = &s;
  return idx;
}

std::map<std::string, double> verdict_values(
    const std::vector<VerdictRecord>* verdicts, VerdictKind kind) {
  std::map<std::string, double> out;
  if (verdicts)
    for (const auto& r : *verdicts)
      if (r.verdict.kind == kind && r.verdict.numeric && !r.verdict.failed)
        out[r.conversation_id] = *r.verdict.numeric;
  return out;
}

std::map<std::string, std::string> verdict_labels(
    const std::vector<VerdictRecord>* verdicts, VerdictKind kind) {
  std::map<std::string, std::string> out;
  if (verdicts)
    for (const auto& r : *verdicts)
      if (r.verdict.kind == kind && r.verdict.label && !r.verdict.failed)
        out[r.conversation_id] = *r.verdict.label;
  return out;
}

std::vector<stats::AlignedPair> aligned_pairs_for(
    const EvaluationInputs& in, const PairingResult& pairing,
    const std::map<std::string, double>& human_values,
    const std::map<std::string, double>& sim_values) {
  const auto scenarios = scenario_index(in.scenarios);
  std::vector<stats::AlignedPair> pairs;
  for (const auto& p : pairing.pairs) {
    auto h = human_values.find(p.human->id);
    auto s = sim_values.find(p.sim->id);
    if (h == human_values.end() || s == sim_values.end()) continue;
    stats::AlignedPair a;
    a.human = h->second;
    a.sim = s->second;
    a.key.model = p.human->assistant_model;
    auto sc = scenarios.find(p.human->scenario_id);
    a.key.stratum = sc == scenarios.end() ? std::string("?")
                                          : sc->second->stratum();
    pairs.push_back(std::move(a));
  }
  return pairs;
}

}  // namespace

std::map<stats::GroupKey, std::pair<double, double>> intermediate_means(
    const EvaluationInputs& in) {
  const auto pairing = pair_conversations(*in.human, *in.sim);
  const auto human_z = human_rating_values(in, false);
  const auto ratings =
      verdict_values(in.sim_verdicts, VerdictKind::InteractionRating);
  const auto pairs = aligned_pairs_for(in, pairing, human_z, ratings);

  struct Acc {
    double h = 0, s = 0;
    int n = 0;
  };
  std::map<stats::GroupKey, Acc> groups;
  for (const auto& p : pairs) {
    auto& g = groups[p.key];
    g.h += p.human;
    g.s += p.sim;
    ++g.n;
  }
  std::map<stats::GroupKey, std::pair<double, double>> out;
  for (const auto& [key, acc] : groups)
    out[key] = {acc.h / acc.n, acc.s / acc.n};
  return out;
}

EvaluationReport compute_evaluation(const EvaluationInputs& in) {
  if (!in.human || !in.sim)
    throw Error(ErrorKind::Argument, "evaluation needs both conversation sets");

  EvaluationReport report;
  report.task = in.task;

  const auto pairing = pair_conversations(*in.human, *in.sim);
  report.paired = int(pairing.pairs.size());
  report.unpaired = pairing.unpaired;

  const auto human_z = human_rating_values(in, false);
  const auto sim_ratings =
      verdict_values(in.sim_verdicts, VerdictKind::InteractionRating);
  report.interaction = stats::aggregate_levels(
      aligned_pairs_for(in, pairing, human_z, sim_ratings));

  if (in.task == TaskKind::MathTutoring) {
    const auto human_labels =
        verdict_labels(in.human_verdicts, VerdictKind::Correctness);
    const auto sim_labels =
        verdict_labels(in.sim_verdicts, VerdictKind::Correctness);
    std::vector<stats::Correctness> h, s;
    for (const auto& p : pairing.pairs) {
      auto hl = human_labels.find(p.human->id);
      auto sl = sim_labels.find(p.sim->id);
      if (hl == human_labels.end() || sl == sim_labels.end()) continue;
      h.push_back(hl->second == "Correct" ? stats::Correctness::Correct
                                          : stats::Correctness::Incorrect);
      s.push_back(sl->second == "Correct" ? stats::Correctness::Correct
                                          : stats::Correctness::Incorrect);
    }
    report.outcome_pairs = int(h.size());
    if (!h.empty()) report.outcome_math = stats::macro_f1(h, s);
  } else {
    const auto human_doc_z = human_rating_values(in, true);
    const auto sim_doc =
        verdict_values(in.sim_verdicts, VerdictKind::DocumentRating);
    const auto pairs = aligned_pairs_for(in, pairing, human_doc_z, sim_doc);
    report.outcome_pairs = int(pairs.size());
    if (!pairs.empty()) report.outcome_doc = stats::aggregate_levels(pairs);
  }

  if (in.similarity) {
    double w_sum = 0, i_sum = 0;
    int w_n = 0, i_n = 0;
    for (const auto& r : *in.similarity) {
      if (!r.verdict.numeric) continue;
      if (r.verdict.kind == VerdictKind::LikertWriting) {
        w_sum += *r.verdict.numeric;
        ++w_n;
      } else if (r.verdict.kind == VerdictKind::LikertInteraction) {
        i_sum += *r.verdict.numeric;
        ++i_n;
      }
    }
    if (w_n) report.likert_means["writing"] = w_sum / w_n;
    if (i_n) report.likert_means["interaction"] = i_sum / i_n;
  }

  if (in.turing && !in.turing->empty()) {
    int picked = 0;
    for (const auto& t : *in.turing)
      if (t.picked_real) ++picked;
    report.turing = stats::turing_deviation(picked, int(in.turing->size()));
  }

  return report;
}

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

LeaderboardReport compute_leaderboard(
    TaskKind task, const std::vector<Conversation>& conversations,
    const std::vector<VerdictRecord>& verdicts) {
  LeaderboardReport report;
  report.task = task;
  report.metric_names =
      task == TaskKind::MathTutoring
          ? std::vector<std::string>{"interaction_rating", "correct_rate"}
          : std::vector<std::string>{"interaction_rating", "document_rating"};

  std::map<std::string, std::string> conv_model;
  for (const auto& c : conversations)
    if (!evaluation_excluded(c)) conv_model[c.id] = c.assistant_model;

  struct Acc {
    double rating_sum = 0;
    int rating_n = 0;
    double doc_sum = 0;
    int doc_n = 0;
    int correct = 0;
    int labeled = 0;
  };
  std::map<std::string, Acc> per_model;
  for (const auto& r : verdicts) {
    auto it = conv_model.find(r.conversation_id);
    if (it == conv_model.end() || r.verdict.failed) continue;
    auto& acc = per_model[it->second];
    if (r.verdict.kind == VerdictKind::InteractionRating && r.verdict.numeric) {
      acc.rating_sum += *r.verdict.numeric;
      ++acc.rating_n;
    } else if (r.verdict.kind == VerdictKind::DocumentRating &&
               r.verdict.numeric) {
      acc.doc_sum += *r.verdict.numeric;
      ++acc.doc_n;
    } else if (r.verdict.kind == VerdictKind::Correctness && r.verdict.label) {
      ++acc.labeled;
      if (*r.verdict.label == "Correct") ++acc.correct;
    }
  }

  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& [model, acc] : per_model) {
    auto& metrics = table[model];
    metrics["interaction_rating"] =
        acc.rating_n ? acc.rating_sum / acc.rating_n : 0.0;
    if (task == TaskKind::MathTutoring)
      metrics["correct_rate"] =
          acc.labeled ? 100.0 * acc.correct / acc.labeled : 0.0;
    else
      metrics["document_rating"] = acc.doc_n ? acc.doc_sum / acc.doc_n : 0.0;
  }
  if (table.empty())
    throw Error(ErrorKind::Argument, "no judged conversations to rank");
  report.rows = stats::leaderboard(table, report.metric_names);
  return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(precision);
  out << v;
  return out.str();
}

json level_json(const stats::LevelResult& level) {
  json j;
  j["n"] = level.n;
  j["low_n"] = level.low_n;
  if (level.corr) {
    j["spearman"] = level.corr->spearman;
    j["pearson"] = level.corr->pearson;
    j["kendall"] = level.corr->kendall;
  } else {
    j["undefined"] = true;
  }
  return j;
}

json levels_json(const stats::LevelReport& r) {
  return {{"instance", level_json(r.instance)},
          {"intermediate", level_json(r.intermediate)},
          {"system", level_json(r.system)}};
}

void level_row(std::ostringstream& md, const char* name,
               const stats::LevelResult& level) {
  md << "| " << name << " | " << level.n << " | ";
  if (level.corr)
    md << fmt(level.corr->spearman) << " | " << fmt(level.corr->pearson)
       << " | " << fmt(level.corr->kendall);
  else
    md << "undefined | undefined | undefined";
  md << (level.low_n ? " | low-n |" : " |  |") << "\n";
}

void levels_markdown(std::ostringstream& md, const stats::LevelReport& r) {
  md << "| level | n | spearman | pearson | kendall | note |\n";
  md << "|---|---|---|---|---|---|\n";
  level_row(md, "instance", r.instance);
  level_row(md, "intermediate", r.intermediate);
  level_row(md, "system", r.system);
}

}  // namespace

json to_json(const EvaluationReport& r) {
  json j;
  j["task"] = to_string(r.task);
  j["paired"] = r.paired;
  j["unpaired"] = r.unpaired;
  j["interaction"] = levels_json(r.interaction);
  j["outcome_pairs"] = r.outcome_pairs;
  if (r.outcome_math)
    j["outcome"] = {{"f1_correct", r.outcome_math->f1_correct},
                    {"f1_incorrect", r.outcome_math->f1_incorrect},
                    {"macro_f1", r.outcome_math->macro}};
  if (r.outcome_doc) j["outcome"] = levels_json(*r.outcome_doc);
  if (!r.likert_means.empty()) j["likert_means"] = r.likert_means;
  if (r.turing)
    j["turing"] = {{"accuracy_percent", r.turing->accuracy_percent},
                   {"deviation", r.turing->deviation},
                   {"n_trials", r.turing->n_trials},
                   {"errors_excluded", r.turing_errors}};
  if (!r.significance.empty()) {
    json arr = json::array();
    for (const auto& s : r.significance)
      arr.push_back({{"comparison", s.comparison},
                     {"metric", s.metric},
                     {"statistic", s.statistic},
                     {"p_two_sided", s.p_two_sided},
                     {"n", s.n},
                     {"method", s.method}});
    j["significance"] = std::move(arr);
  }
  return j;
}

std::string to_markdown(const EvaluationReport& r) {
  std::ostringstream md;
  md << "# Evaluation report (" << to_string(r.task) << ")\n\n";
  md << "Paired conversations: " << r.paired;
  if (!r.unpaired.empty()) {
    md << " (excluded: ";
    for (std::size_t i = 0; i < r.unpaired.size(); ++i)
      md << (i ? ", " : "") << r.unpaired[i];
    md << ")";
  }
  md << "\n\n## Interaction alignment\n\n";
  levels_markdown(md, r.interaction);
  if (r.outcome_math) {
    md << "\n## Outcome alignment (answer correctness, n=" << r.outcome_pairs
       << ")\n\n";
    md << "| f1_correct | f1_incorrect | macro_f1 |\n|---|---|---|\n";
    md << "| " << fmt(r.outcome_math->f1_correct) << " | "
       << fmt(r.outcome_math->f1_incorrect) << " | "
       << fmt(r.outcome_math->macro) << " |\n";
  }
  if (r.outcome_doc) {
    md << "\n## Outcome alignment (document ratings, n=" << r.outcome_pairs
       << ")\n\n";
    levels_markdown(md, *r.outcome_doc);
  }
  if (!r.likert_means.empty()) {
    md << "\n## Message similarity (Likert 1-5)\n\n";
    for (const auto& [kind, mean] : r.likert_means)
      md << "- " << kind << " style: " << fmt(mean, 2) << "\n";
  }
  if (r.turing) {
    md << "\n## Turing test\n\n";
    md << "- judge accuracy: " << fmt(r.turing->accuracy_percent, 1)
       << "% over " << r.turing->n_trials << " trials";
    if (r.turing_errors) md << " (" << r.turing_errors << " errored, excluded)";
    md << "\n- deviation |p-50|: " << fmt(r.turing->deviation, 1) << "\n";
  }
  if (!r.significance.empty()) {
    md << "\n## Significance\n\n";
    md << "| comparison | metric | statistic | p | n | method |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& s : r.significance)
      md << "| " << s.comparison << " | " << s.metric << " | "
         << fmt(s.statistic) << " | " << fmt(s.p_two_sided) << " | " << s.n
         << " | " << s.method << " |\n";
  }
  return md.str();
}

json to_json(const LeaderboardReport& r) {
  json j;
  j["task"] = to_string(r.task);
  j["metrics"] = r.metric_names;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json rj;
    rj["model"] = row.model;
    rj["mean_z"] = row.mean_z;
    for (const auto& [name, value] : row.metrics) rj[name] = value;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  return j;
}

std::string to_markdown(const LeaderboardReport& r) {
  std::ostringstream md;
  md << "# Leaderboard (" << to_string(r.task) << ")\n\n";
  md << "| rank | model |";
  for (const auto& name : r.metric_names) md << " " << name << " |";
  md << " mean_z |\n|---|---|";
  for (std::size_t i = 0; i < r.metric_names.size(); ++i) md << "---|";
  md << "---|\n";
  int rank = 1;
  for (const auto& row : r.rows) {
    md << "| " << rank++ << " | " << row.model << " |";
    for (const auto& name : r.metric_names)
      md << " " << fmt(row.metrics.at(name), 2) << " |";
    md << " " << fmt(row.mean_z, 3) << " |\n";
  }
  return md.str();
}

json stats_to_json(const StatTable& t) {
  auto row_json = [](const StatRow& r) {
    json j;
    j["conversations"] = r.conversations;
    j["excluded_single_turn"] = r.excluded_single_turn;
    j["mean_turns"] = r.mean_turns;
    j["mean_user_words"] = r.mean_user_words;
    j["mean_assistant_words"] = r.mean_assistant_words;
    if (r.mean_cost) j["mean_cost_usd"] = *r.mean_cost;
    return j;
  };
  json j;
  json models = json::object();
  for (const auto& [model, row] : t.per_model) models[model] = row_json(row);
  j["per_model"] = std::move(models);
  j["overall"] = row_json(t.overall);
  return j;
}

std::string stats_to_markdown(const StatTable& t) {
  std::ostringstream md;
  md << "# Corpus statistics\n\n";
  md << "| model | conversations | mean turns | user words | assistant words "
        "| mean cost ($) |\n";
  md << "|---|---|---|---|---|---|\n";
  auto row_md = [&](const std::string& name, const StatRow& r) {
    md << "| " << name << " | " << r.conversations << " | "
       << fmt(r.mean_turns, 1) << " | " << fmt(r.mean_user_words, 1) << " | "
       << fmt(r.mean_assistant_words, 1) << " | "
       << (r.mean_cost ? fmt(*r.mean_cost, 2) : std::string("-")) << " |\n";
  };
  for (const auto& [model, row] : t.per_model) row_md(model, row);
  row_md("(all)", t.overall);
  if (t.overall.excluded_single_turn)
    md << "\nExcluded single-turn math conversations: "
       << t.overall.excluded_single_turn << "\n";
  return md.str();
}

json to_json(const RaterEvalReport& r) {
  json j;
  j["rater"] = r.rater_id;
  j["alignment"] = levels_json(r.alignment);
  json bias = json::array();
  for (const auto& cell : r.self_bias)
    bias.push_back({{"rater", cell.rater},
                    {"assistant", cell.assistant},
                    {"mean_rating", cell.mean_rating},
                    {"n", cell.n},
                    {"own_family", cell.own_family}});
  j["self_bias"] = std::move(bias);
  return j;
}

std::string to_markdown(const RaterEvalReport& r) {
  std::ostringstream md;
  md << "# Rater evaluation: " << r.rater_id << "\n\n## Alignment\n\n";
  levels_markdown(md, r.alignment);
  if (!r.self_bias.empty()) {
    md << "\n## Mean rating per assistant (own family marked *)\n\n";
    md << "| rater | assistant | mean rating | n |\n|---|---|---|---|\n";
    for (const auto& cell : r.self_bias)
      md << "| " << cell.rater << " | " << cell.assistant
         << (cell.own_family ? " * | " : " | ") << fmt(cell.mean_rating, 2)
         << " | " << cell.n << " |\n";
  }
  return md.str();
}

}  // namespace simarena
