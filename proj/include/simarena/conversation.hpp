#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simarena/error.hpp"

namespace simarena {

enum class TaskKind { MathTutoring, DocumentCreation };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct PrewritingEntry {
  std::string question;
  std::string answer;

  bool operator==(const PrewritingEntry&) const = default;
};

struct MathScenario {
  std::string statement;
  std::string gold_solution;
  std::string gold_answer;
  int difficulty = 3;  // 3..5

  bool operator==(const MathScenario&) const = default;
};

struct DocScenario {
  std::string doc_type;  // email/letter, blog post, creative writing
  std::string intent;
  std::vector<PrewritingEntry> prewriting;

  bool operator==(const DocScenario&) const = default;
};

struct Scenario {
  std::string id;
  TaskKind kind = TaskKind::MathTutoring;
  std::optional<MathScenario> math;
  std::optional<DocScenario> doc;

  bool operator==(const Scenario&) const = default;

  /// Stratum used for intermediate-level grouping: difficulty for math,
  /// doc_type for documents.
  std::string stratum() const;
};

enum class Thumb { Up, Down };

struct Turn {
  int index = 1;  // 1-based, contiguous
  std::string user_message;
  std::string assistant_message;
  std::optional<Thumb> thumb;
  std::optional<std::string> doc_snapshot;

  bool operator==(const Turn&) const = default;
};

struct UserSource {
  enum class Kind { Human, Simulator };
  Kind kind = Kind::Human;
  std::string id;  // annotator id or simulator spec id

  bool operator==(const UserSource&) const = default;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const TokenUsage&) const = default;
};

struct Conversation {
  std::string id;
  TaskKind task = TaskKind::MathTutoring;
  std::string scenario_id;
  std::string assistant_model;
  UserSource user_source;
  std::vector<Turn> turns;
  std::optional<double> interaction_rating;  // 1-10
  std::optional<double> document_rating;     // 1-10, documents only
  std::optional<std::string> final_answer;
  std::optional<std::string> final_document;
  TokenUsage usage;
  std::optional<double> cost_usd;
  std::string status;  // "", "aborted", "capped"

  bool operator==(const Conversation&) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::string code;   // stable identifier, one per documented invariant
  std::string field;  // offending field
  std::string message;
};

/// The full set of violation codes validate_conversation and
/// validate_scenario may emit. Stable identifiers; tests pin them.
const std::vector<std::string>& known_violation_codes();

std::vector<Violation> validate_conversation(const Conversation& c);
std::vector<Violation> validate_scenario(const Scenario& s);

/// Math conversations that ended after a single turn are kept in storage but
/// excluded from evaluation aggregates.
bool single_turn_excluded(const Conversation& c);

/// Whitespace-split token count.
std::size_t word_count(const std::string& text);

// ---------------------------------------------------------------------------
// JSON (field names are the on-disk contract)
// ---------------------------------------------------------------------------

nlohmann::json to_json(const Conversation& c);
Conversation conversation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace simarena
