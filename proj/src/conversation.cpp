#include "simarena/conversation.hpp"

#include <sstream>

namespace simarena {

using nlohmann::json;

std::string to_string(TaskKind k) {
  return k == TaskKind::MathTutoring ? "math_tutoring" : "document_creation";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "math_tutoring") return TaskKind::MathTutoring;
  if (s == "document_creation") return TaskKind::DocumentCreation;
  throw Error(ErrorKind::Validation, "unknown task kind: '" + s + "'");
}

std::string Scenario::stratum() const {
  if (kind == TaskKind::MathTutoring)
    return math ? "level-" + std::to_string(math->difficulty) : "level-?";
  return doc ? doc->doc_type : "?";
}

std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::string token;
  std::size_t n = 0;
  while (in >> token) ++n;
  return n;
}

bool single_turn_excluded(const Conversation& c) {
  return c.task == TaskKind::MathTutoring && c.turns.size() == 1;
}

const std::vector<std::string>& known_violation_codes() {
  static const std::vector<std::string> codes{
      "no_turns",
      "turn_index_not_contiguous",
      "empty_user_message",
      "empty_assistant_message",
      "rating_out_of_range",
      "document_rating_on_math_task",
      "single_turn_excluded",
      "task_fields_mismatch",
      "difficulty_out_of_range",
      "prewriting_underfilled",
  };
  return codes;
}

namespace {

void add(std::vector<Violation>& out, std::string code, std::string field,
         std::string message) {
  out.push_back({std::move(code), std::move(field), std::move(message)});
}

}  // namespace

std::vector<Violation> validate_conversation(const Conversation& c) {
  std::vector<Violation> v;

  if (c.turns.empty())
    add(v, "no_turns", "turns", "conversation has no turns");

  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    const Turn& t = c.turns[i];
    if (t.index != int(i) + 1) {
      add(v, "turn_index_not_contiguous", "turns[" + std::to_string(i) + "].index",
          "expected index " + std::to_string(i + 1) + ", found " +
              std::to_string(t.index));
      break;
    }
  }

  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    const Turn& t = c.turns[i];
    if (t.user_message.empty())
      add(v, "empty_user_message", "turns[" + std::to_string(i) + "].user",
          "user message must be non-empty");
    const bool truncated_final = i + 1 == c.turns.size() && !c.status.empty();
    if (t.assistant_message.empty() && !truncated_final)
      add(v, "empty_assistant_message",
          "turns[" + std::to_string(i) + "].assistant",
          "assistant message empty on a non-truncated turn");
  }

  auto check_rating = [&](const std::optional<double>& r, const char* field) {
    if (r && (*r < 1.0 || *r > 10.0))
      add(v, "rating_out_of_range", field, "rating out of [1,10]");
  };
  check_rating(c.interaction_rating, "interaction_rating");
  check_rating(c.document_rating, "document_rating");

  if (c.task == TaskKind::MathTutoring && c.document_rating)
    add(v, "document_rating_on_math_task", "document_rating",
        "document_rating present on a math conversation");

  if (single_turn_excluded(c))
    add(v, "single_turn_excluded", "turns",
        "single-turn math conversation excluded from evaluation aggregates");

  return v;
}

std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> v;
  const bool want_math = s.kind == TaskKind::MathTutoring;
  if (want_math != s.math.has_value() || want_math == s.doc.has_value())
    add(v, "task_fields_mismatch", want_math ? "math" : "doc",
        "math present iff math_tutoring; doc present iff document_creation");

  if (s.math && (s.math->difficulty < 3 || s.math->difficulty > 5))
    add(v, "difficulty_out_of_range", "math.difficulty",
        "difficulty must be in {3,4,5}");

  if (s.doc) {
    std::size_t answered = 0;
    for (const auto& p : s.doc->prewriting)
      if (!p.answer.empty()) ++answered;
    if (answered < 6)
      add(v, "prewriting_underfilled", "doc.prewriting",
          "human-collected document scenarios should carry >= 6 answered "
          "pre-writing entries (found " +
              std::to_string(answered) + ")");
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

const json& require(const json& j, const char* key) {
  if (!j.contains(key))
    throw Error(ErrorKind::Validation,
                std::string("record missing required field `") + key + "`");
  return j.at(key);
}

}  // namespace

json to_json(const Conversation& c) {
  json j;
  j["id"] = c.id;
  j["task"] = to_string(c.task);
  j["scenario_id"] = c.scenario_id;
  j["assistant_model"] = c.assistant_model;
  j["user_source"] = {
      {"kind", c.user_source.kind == UserSource::Kind::Human ? "human"
                                                             : "simulator"},
      {"id", c.user_source.id},
  };
  json turns = json::array();
  for (const auto& t : c.turns) {
    json tj;
    tj["index"] = t.index;
    tj["user"] = t.user_message;
    tj["assistant"] = t.assistant_message;
    if (t.thumb) tj["thumb"] = *t.thumb == Thumb::Up ? "up" : "down";
    put_optional(tj, "doc_snapshot", t.doc_snapshot);
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  put_optional(j, "interaction_rating", c.interaction_rating);
  put_optional(j, "document_rating", c.document_rating);
  put_optional(j, "final_answer", c.final_answer);
  put_optional(j, "final_document", c.final_document);
  j["usage"] = {{"prompt_tokens", c.usage.prompt_tokens},
                {"completion_tokens", c.usage.completion_tokens}};
  put_optional(j, "cost_usd", c.cost_usd);
  if (!c.status.empty()) j["status"] = c.status;
  return j;
}

Conversation conversation_from_json(const json& j) {
  Conversation c;
  c.id = require(j, "id").get<std::string>();
  c.task = task_kind_from_string(require(j, "task").get<std::string>());
  c.scenario_id = require(j, "scenario_id").get<std::string>();
  c.assistant_model = require(j, "assistant_model").get<std::string>();

  const json& src = require(j, "user_source");
  const auto kind = require(src, "kind").get<std::string>();
  if (kind == "human")
    c.user_source.kind = UserSource::Kind::Human;
  else if (kind == "simulator")
    c.user_source.kind = UserSource::Kind::Simulator;
  else
    throw Error(ErrorKind::Validation, "unknown user_source.kind: " + kind);
  c.user_source.id = require(src, "id").get<std::string>();

  for (const auto& tj : require(j, "turns")) {
    Turn t;
    t.index = require(tj, "index").get<int>();
    t.user_message = require(tj, "user").get<std::string>();
    t.assistant_message = require(tj, "assistant").get<std::string>();
    if (auto thumb = opt_string(tj, "thumb"))
      t.thumb = *thumb == "up" ? Thumb::Up : Thumb::Down;
    t.doc_snapshot = opt_string(tj, "doc_snapshot");
    c.turns.push_back(std::move(t));
  }

  c.interaction_rating = opt_number(j, "interaction_rating");
  c.document_rating = opt_number(j, "document_rating");
  c.final_answer = opt_string(j, "final_answer");
  c.final_document = opt_string(j, "final_document");
  if (j.contains("usage")) {
    c.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
    c.usage.completion_tokens =
        j["usage"].value("completion_tokens", std::int64_t{0});
  }
  c.cost_usd = opt_number(j, "cost_usd");
  c.status = j.value("status", std::string{});
  return c;
}

json to_json(const Scenario& s) {
  json j;
  j["id"] = s.id;
  j["kind"] = to_string(s.kind);
  if (s.math) {
    j["math"] = {{"statement", s.math->statement},
                 {"gold_solution", s.math->gold_solution},
                 {"gold_answer", s.math->gold_answer},
                 {"difficulty", s.math->difficulty}};
  }
  if (s.doc) {
    json pre = json::array();
    for (const auto& p : s.doc->prewriting)
      pre.push_back({{"question", p.question}, {"answer", p.answer}});
    j["doc"] = {{"doc_type", s.doc->doc_type},
                {"intent", s.doc->intent},
                {"prewriting", std::move(pre)}};
  }
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.id = require(j, "id").get<std::string>();
  s.kind = task_kind_from_string(require(j, "kind").get<std::string>());
  if (j.contains("math")) {
    const json& m = j["math"];
    MathScenario math;
    math.statement = require(m, "statement").get<std::string>();
    math.gold_solution = m.value("gold_solution", std::string{});
    math.gold_answer = m.value("gold_answer", std::string{});
    math.difficulty = m.value("difficulty", 3);
    s.math = std::move(math);
  }
  if (j.contains("doc")) {
    const json& d = j["doc"];
    DocScenario doc;
    doc.doc_type = require(d, "doc_type").get<std::string>();
    doc.intent = d.value("intent", std::string{});
    if (d.contains("prewriting"))
      for (const auto& p : d["prewriting"])
        doc.prewriting.push_back({require(p, "question").get<std::string>(),
                                  p.value("answer", std::string{})});
    s.doc = std::move(doc);
  }
  return s;
}

}  // namespace simarena
