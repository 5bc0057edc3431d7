#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "simarena/conversation.hpp"
#include "simarena/profile.hpp"
#include "simarena/roles.hpp"
#include "simarena/simulator.hpp"
#include "simarena/template_engine.hpp"

namespace simarena {

enum class VerdictKind {
  InteractionRating,
  DocumentRating,
  Correctness,
  LikertWriting,
  LikertInteraction,
  Turing,
  Fulfillment,
};

std::string to_string(VerdictKind k);

struct JudgeVerdict {
  VerdictKind kind = VerdictKind::InteractionRating;
  std::optional<double> numeric;     // rating / likert score
  std::optional<std::string> label;  // Correct/Incorrect, Match/No Match
  std::string analysis;
  std::string raw;  // full judge output, retained for audit
  bool failed = false;
  std::string failure;  // set when failed (e.g. empty document)

  nlohmann::json to_json() const;
  static JudgeVerdict from_json(const nlohmann::json& j);
};

struct TuringRun {
  int choice = 1;  // position picked as the human, 1 or 2
  double confidence = 0.0;  // 0-100
};

struct TuringTrial {
  TuringRun run_a;  // (real, sim) presentation
  TuringRun run_b;  // order swapped: (sim, real)
  bool picked_real = false;
  bool tie_broken = false;
  bool equal_confidence = false;
  std::string raw_a;
  std::string raw_b;
};

/// Pure verdict rule over the two runs: consistent identifications stand;
/// contradictions resolve to the higher-confidence run (equal confidence
/// falls back to run_a, flagged).
void resolve_turing_verdict(TuringTrial& trial);

/// "Rating: <x>" extraction: last number after the final Rating token.
double parse_rating(const std::string& raw, double lo, double hi);

/// Last fenced ```json block (or whole-text JSON) in a judge output.
nlohmann::json extract_judge_json(const std::string& raw);

// ---------------------------------------------------------------------------
// Judge operations
// ---------------------------------------------------------------------------

JudgeVerdict rate_interaction(Gateway& gateway, const TemplateStore& templates,
                              const Scenario& scenario, const Conversation& c,
                              const RaterSpec& rater);

JudgeVerdict rate_document(Gateway& gateway, const TemplateStore& templates,
                           const Scenario& scenario,
                           const std::string& final_document,
                           const std::string& preferences_block,
                           const RaterSpec& rater);

/// The sentinel "No clear final answer given" short-circuits to Incorrect
/// without a model call.
JudgeVerdict check_correct(Gateway& gateway, const TemplateStore& templates,
                           const std::string& question,
                           const std::string& gold_answer,
                           const std::string& student_answer,
                           const RaterSpec& checker);

JudgeVerdict likert_similarity(Gateway& gateway, const TemplateStore& templates,
                               AttributeCategory kind, const Scenario& scenario,
                               const Conversation& real, const Conversation& sim,
                               const AttributeRegistry& registry,
                               const RaterSpec& judge);

TuringTrial turing_trial(Gateway& gateway, const TemplateStore& templates,
                         const Scenario& scenario, const Conversation& real,
                         const Conversation& sim, const RaterSpec& judge);

JudgeVerdict attribute_fulfilled(Gateway& gateway,
                                 const TemplateStore& templates,
                                 const StyleAttribute& attribute,
                                 const std::string& profile_answer,
                                 const Conversation& c, const RaterSpec& judge);

/// Share of Match labels among fulfillment verdicts (failed verdicts and
/// other kinds are ignored).
double fulfillment_rate(std::span<const JudgeVerdict> verdicts);

inline constexpr const char* kNoAnswerSentinel = "No clear final answer given";

}  // namespace simarena
