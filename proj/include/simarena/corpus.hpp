#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simarena/conversation.hpp"
#include "simarena/gateway.hpp"

namespace simarena {

struct RecordError {
  std::string file;
  int line = 0;  // 1-based line in the source file
  std::string message;
};

struct LoadedCorpus {
  std::vector<Conversation> conversations;
  std::vector<Scenario> scenarios;  // deduplicated by id, first wins
  std::vector<RecordError> record_errors;
  std::vector<std::pair<std::string, Violation>> violations;  // conv id, v
};

/// Loads conversations (JSON-lines, one object per line, *.jsonl) and
/// scenarios (JSON arrays, *.json) from a file or a directory. Files load in
/// lexicographic order; records keep file order. Malformed records become
/// record_errors and loading continues; an unreadable path throws
/// ErrorKind::Io.
LoadedCorpus load_corpus(const std::filesystem::path& path);

std::vector<Scenario> load_scenarios(const std::filesystem::path& file);

void append_jsonl(const std::filesystem::path& file, const nlohmann::json& j);
void write_scenarios(const std::filesystem::path& file,
                     std::span<const Scenario> scenarios);

/// Backfills absent cost_usd fields from token usage priced against the
/// conversation's assistant model; conversations whose model has no price
/// entry are left untouched. Returns the number filled.
int fill_missing_costs(std::vector<Conversation>& conversations,
                       const PriceTable& prices);

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct StatRow {
  int conversations = 0;       // included (single-turn math excluded)
  int excluded_single_turn = 0;
  double mean_turns = 0.0;
  double mean_user_words = 0.0;       // per user message
  double mean_assistant_words = 0.0;  // per assistant message
  std::optional<double> mean_cost;    // over conversations carrying cost
};

struct StatTable {
  std::map<std::string, StatRow> per_model;
  StatRow overall;
};

/// Per-assistant-model corpus statistics. `source_filter`, when set, keeps
/// only matching conversations: "human", "simulator", or "<kind>:<id>".
StatTable corpus_stats(std::span<const Conversation> conversations,
                       const std::optional<std::string>& source_filter = {});

}  // namespace simarena
