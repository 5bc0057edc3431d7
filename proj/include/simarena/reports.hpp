#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simarena/corpus.hpp"
#include "simarena/judges.hpp"
#include "simarena/stats.hpp"

namespace simarena {

// ---------------------------------------------------------------------------
// Persisted verdicts
// ---------------------------------------------------------------------------

struct VerdictRecord {
  std::string conversation_id;
  std::string rater_id;
  JudgeVerdict verdict;
};

void append_verdict(const std::filesystem::path& file, const VerdictRecord& r);
std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& file);

struct TuringRecord {
  std::string real_id;
  std::string sim_id;
  bool picked_real = false;
  bool tie_broken = false;
  bool equal_confidence = false;
};

void append_turing(const std::filesystem::path& file, const TuringRecord& r);
std::vector<TuringRecord> load_turing(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct SignificanceEntry {
  std::string comparison;  // "<run> vs <other>"
  std::string metric;
  double statistic = 0.0;  // Williams' t (or 0 for McNemar)
  double p_two_sided = 1.0;
  int n = 0;
  std::string method;  // "williams_on_spearman" | "mcnemar_exact"
};

struct EvaluationReport {
  TaskKind task = TaskKind::MathTutoring;
  int paired = 0;
  std::vector<std::string> unpaired;  // excluded conversation ids
  stats::LevelReport interaction;
  std::optional<stats::MacroF1> outcome_math;
  int outcome_pairs = 0;
  std::optional<stats::LevelReport> outcome_doc;
  std::map<std::string, double> likert_means;  // writing/interaction
  std::optional<stats::TuringDeviation> turing;
  int turing_errors = 0;
  std::vector<SignificanceEntry> significance;
};

nlohmann::json to_json(const EvaluationReport& r);
std::string to_markdown(const EvaluationReport& r);

// ---------------------------------------------------------------------------
// Pure metric computation over persisted materials
// ---------------------------------------------------------------------------

struct PairedConversation {
  const Conversation* human = nullptr;
  const Conversation* sim = nullptr;
  stats::GroupKey key;
};

struct PairingResult {
  std::vector<PairedConversation> pairs;
  std::vector<std::string> unpaired;  // conversation ids on either side
};

/// Pairs human and simulator conversations by (scenario_id, assistant_model),
/// zipping k-th with k-th in id order; evaluation-excluded records (aborted,
/// single-turn math) never pair.
PairingResult pair_conversations(const std::vector<Conversation>& human,
                                 const std::vector<Conversation>& sim);

struct EvaluationInputs {
  TaskKind task = TaskKind::MathTutoring;
  const std::vector<Conversation>* human = nullptr;
  const std::vector<Conversation>* sim = nullptr;
  const std::vector<Scenario>* scenarios = nullptr;
  const std::vector<VerdictRecord>* sim_verdicts = nullptr;
  const std::vector<VerdictRecord>* human_verdicts = nullptr;  // correctness
  const std::vector<VerdictRecord>* similarity = nullptr;      // likert
  const std::vector<TuringRecord>* turing = nullptr;
  // z-score human ratings before group-averaging (the default order); false
  // correlates raw means instead.
  bool normalize_human = true;
};

/// Deterministic metric computation; no model calls. Reports regenerate
/// byte-identically from the same persisted inputs.
EvaluationReport compute_evaluation(const EvaluationInputs& in);

/// Group means of z-scored human ratings vs rater ratings, keyed by
/// (model, stratum); shared by the Williams comparison path.
std::map<stats::GroupKey, std::pair<double, double>> intermediate_means(
    const EvaluationInputs& in);

// ---------------------------------------------------------------------------
// Leaderboard report
// ---------------------------------------------------------------------------

struct LeaderboardReport {
  TaskKind task = TaskKind::MathTutoring;
  std::vector<std::string> metric_names;
  std::vector<stats::LeaderboardRow> rows;
};

/// Per-model means from run logs + verdicts: interaction_rating and
/// correct_rate (math) or document_rating (documents).
LeaderboardReport compute_leaderboard(
    TaskKind task, const std::vector<Conversation>& conversations,
    const std::vector<VerdictRecord>& verdicts);

nlohmann::json to_json(const LeaderboardReport& r);
std::string to_markdown(const LeaderboardReport& r);

// ---------------------------------------------------------------------------
// Corpus stats & rater-eval reports
// ---------------------------------------------------------------------------

nlohmann::json stats_to_json(const StatTable& t);
std::string stats_to_markdown(const StatTable& t);

struct RaterEvalReport {
  std::string rater_id;
  stats::LevelReport alignment;
  std::vector<stats::SelfBiasCell> self_bias;
};

nlohmann::json to_json(const RaterEvalReport& r);
std::string to_markdown(const RaterEvalReport& r);

/// Normalizes one rating field of the human corpus per annotator (pooling
/// small annotators) and returns conversation_id -> z.
std::map<std::string, double> normalized_human_ratings(
    const std::vector<Conversation>& human, bool document_rating);

void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace simarena
