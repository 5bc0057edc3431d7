#include "simarena/judges.hpp"

#include <cctype>

namespace simarena {

using nlohmann::json;

std::string to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::InteractionRating: return "interaction_rating";
    case VerdictKind::DocumentRating: return "document_rating";
    case VerdictKind::Correctness: return "correctness";
    case VerdictKind::LikertWriting: return "likert_writing";
    case VerdictKind::LikertInteraction: return "likert_interaction";
    case VerdictKind::Turing: return "turing";
    case VerdictKind::Fulfillment: return "fulfillment";
  }
  return "interaction_rating";
}

namespace {

VerdictKind verdict_kind_from_string(const std::string& s) {
  for (auto k : {VerdictKind::InteractionRating, VerdictKind::DocumentRating,
                 VerdictKind::Correctness, VerdictKind::LikertWriting,
                 VerdictKind::LikertInteraction, VerdictKind::Turing,
                 VerdictKind::Fulfillment})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::Validation, "unknown verdict kind: '" + s + "'");
}

}  // namespace

json JudgeVerdict::to_json() const {
  json j;
  j["kind"] = simarena::to_string(kind);
  if (numeric) j["numeric"] = *numeric;
  if (label) j["label"] = *label;
  j["analysis"] = analysis;
  j["raw"] = raw;
  if (failed) {
    j["failed"] = true;
    j["failure"] = failure;
  }
  return j;
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  JudgeVerdict v;
  v.kind = verdict_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("numeric")) v.numeric = j["numeric"].get<double>();
  if (j.contains("label")) v.label = j["label"].get<std::string>();
  v.analysis = j.value("analysis", std::string{});
  v.raw = j.value("raw", std::string{});
  v.failed = j.value("failed", false);
  v.failure = j.value("failure", std::string{});
  return v;
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

double parse_rating(const std::string& raw, double lo, double hi) {
  const auto pos = raw.rfind("Rating:");
  if (pos == std::string::npos)
    throw Error(ErrorKind::Parse, "no 'Rating:' line in judge output");
  std::size_t i = pos + 7;
  while (i < raw.size() &&
         !(std::isdigit((unsigned char)raw[i]) || raw[i] == '-' ||
           raw[i] == '+'))
    ++i;
  if (i >= raw.size())
    throw Error(ErrorKind::Parse, "no number after the final 'Rating:'");
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(raw.substr(i), &consumed);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, "unparseable rating value");
  }
  if (value < lo || value > hi)
    throw Error(ErrorKind::Parse,
                "rating " + std::to_string(value) + " outside [" +
                    std::to_string(int(lo)) + "," + std::to_string(int(hi)) +
                    "]");
  return value;
}

json extract_judge_json(const std::string& raw) {
  // last fenced block wins; judges often restate the format first
  std::vector<std::size_t> fences;
  for (std::size_t pos = raw.find("```"); pos != std::string::npos;
       pos = raw.find("```", pos + 3))
    fences.push_back(pos);
  for (std::size_t i = fences.size(); i >= 2; i -= 2) {
    const std::size_t open = fences[i - 2], close = fences[i - 1];
    std::size_t body_start = open + 3;
    if (raw.compare(body_start, 4, "json") == 0) body_start += 4;
    try {
      return json::parse(raw.substr(body_start, close - body_start));
    } catch (const json::exception&) {
    }
    if (i == 2) break;
  }
  // fall back to the widest brace span, then the whole text
  const auto first = raw.find_first_of("{[");
  const auto last = raw.find_last_of("}]");
  if (first != std::string::npos && last != std::string::npos && last > first) {
    try {
      return json::parse(raw.substr(first, last - first + 1));
    } catch (const json::exception&) {
    }
  }
  try {
    return json::parse(raw);
  } catch (const json::exception&) {
    throw Error(ErrorKind::Parse, "no parseable JSON in judge output");
  }
}

namespace {

std::string analysis_before_marker(const std::string& raw,
                                   const std::string& marker) {
  const auto pos = raw.rfind(marker);
  if (pos == std::string::npos) return raw;
  std::string head = raw.substr(0, pos);
  while (!head.empty() && (head.back() == '\n' || head.back() == ' ' ||
                           head.back() == '*'))
    head.pop_back();
  return head;
}

ChatRequest single_user_message(std::string text) {
  ChatRequest req;
  req.messages.push_back({"user", std::move(text)});
  return req;
}

std::string complete_with_retry(Gateway& gateway, const RaterSpec& rater,
                                const ChatRequest& req) {
  return gateway.complete(rater.provider, rater.sampling, req).text;
}

/// Runs the judge, letting `parse` validate; one refreshed retry on a parse
/// error, after which the error propagates.
template <typename Parse>
JudgeVerdict judged(Gateway& gateway, const RaterSpec& rater,
                    const ChatRequest& req, Parse&& parse) {
  std::string raw = complete_with_retry(gateway, rater, req);
  try {
    return parse(raw);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Parse) throw;
  }
  raw = gateway.complete(rater.provider, rater.sampling, req, {true}).text;
  return parse(raw);
}

}  // namespace

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

JudgeVerdict rate_interaction(Gateway& gateway, const TemplateStore& templates,
                              const Scenario& scenario, const Conversation& c,
                              const RaterSpec& rater) {
  if (c.status == "aborted")
    throw Error(ErrorKind::Argument,
                "conversation '" + c.id + "' is aborted and cannot be rated");

  std::map<std::string, std::string> values;
  std::string rel = rater.template_override;
  if (scenario.kind == TaskKind::MathTutoring) {
    if (rel.empty()) rel = "judging/math_interaction_rating.txt";
    values["problem"] = scenario.math ? scenario.math->statement : "";
  } else {
    if (rel.empty()) rel = "judging/doc_interaction_rating.txt";
  }
  values["conversation"] = render_history(scenario.kind, c.turns);

  const auto req = single_user_message(templates.render(rel, values));
  return judged(gateway, rater, req, [&](const std::string& raw) {
    JudgeVerdict v;
    v.kind = VerdictKind::InteractionRating;
    v.numeric = parse_rating(raw, 1.0, 10.0);
    v.analysis = analysis_before_marker(raw, "Rating:");
    v.raw = raw;
    return v;
  });
}

JudgeVerdict rate_document(Gateway& gateway, const TemplateStore& templates,
                           const Scenario& scenario,
                           const std::string& final_document,
                           const std::string& preferences_block,
                           const RaterSpec& rater) {
  if (final_document.empty()) {
    JudgeVerdict v;
    v.kind = VerdictKind::DocumentRating;
    v.failed = true;
    v.failure = "empty final document";
    return v;
  }
  std::map<std::string, std::string> values;
  values["document_type"] = scenario.doc ? scenario.doc->doc_type : "";
  values["intent"] = scenario.doc ? scenario.doc->intent : "";
  values["document_preferences"] = preferences_block;
  values["final_document"] = final_document;
  const std::string rel = rater.template_override.empty()
                              ? "judging/document_rating.txt"
                              : rater.template_override;
  const auto req = single_user_message(templates.render(rel, values));
  return judged(gateway, rater, req, [&](const std::string& raw) {
    JudgeVerdict v;
    v.kind = VerdictKind::DocumentRating;
    v.numeric = parse_rating(raw, 1.0, 10.0);
    v.analysis = analysis_before_marker(raw, "Rating:");
    v.raw = raw;
    return v;
  });
}

JudgeVerdict check_correct(Gateway& gateway, const TemplateStore& templates,
                           const std::string& question,
                           const std::string& gold_answer,
                           const std::string& student_answer,
                           const RaterSpec& checker) {
  JudgeVerdict v;
  v.kind = VerdictKind::Correctness;
  if (student_answer == kNoAnswerSentinel) {
    v.label = "Incorrect";
    v.analysis = "no clear final answer given";
    return v;
  }

  std::map<std::string, std::string> values{{"question", question},
                                            {"correct_answer", gold_answer},
                                            {"student_answer", student_answer}};
  const std::string rel = checker.template_override.empty()
                              ? "judging/answer_correctness.txt"
                              : checker.template_override;
  const auto req = single_user_message(templates.render(rel, values));
  const std::string raw = complete_with_retry(gateway, checker, req);

  const auto correct = raw.rfind("Correct");
  const auto incorrect = raw.rfind("Incorrect");
  if (correct == std::string::npos && incorrect == std::string::npos)
    throw Error(ErrorKind::Parse,
                "neither Correct nor Incorrect in checker output");
  // "Incorrect" contains "Correct": the later *start* wins, with Incorrect
  // taking the span when both point at the same token.
  if (incorrect != std::string::npos &&
      (correct == std::string::npos || correct <= incorrect + 2))
    v.label = "Incorrect";
  else
    v.label = "Correct";
  v.analysis = raw;
  v.raw = raw;
  return v;
}

JudgeVerdict likert_similarity(Gateway& gateway, const TemplateStore& templates,
                               AttributeCategory kind, const Scenario& scenario,
                               const Conversation& real, const Conversation& sim,
                               const AttributeRegistry& registry,
                               const RaterSpec& judge) {
  if (real.scenario_id != sim.scenario_id)
    throw Error(ErrorKind::Argument,
                "similarity judging needs conversations on the same scenario");

  const bool math = scenario.kind == TaskKind::MathTutoring;
  const bool writing = kind == AttributeCategory::Writing;
  const std::string rel = std::string("judging/likert_") +
                          (writing ? "writing_" : "interaction_") +
                          (math ? "math.txt" : "document.txt");

  std::map<std::string, std::string> values;
  values["task"] = math ? "math tutoring" : "document creation";
  if (math)
    values["math_problem"] = scenario.math ? scenario.math->statement : "";
  else {
    values["document_type"] = scenario.doc ? scenario.doc->doc_type : "";
    values["intent"] = scenario.doc ? scenario.doc->intent : "";
  }
  std::string features;
  for (const auto& a : writing ? registry.writing : registry.interaction)
    features += "- " + a.name + ": " + a.question + "\n";
  values["features"] = features;
  if (writing) {
    values["real_user_queries"] = render_user_messages(real.turns);
    values["simulated_queries"] = render_user_messages(sim.turns);
  } else {
    values["real_conversation"] = render_history(scenario.kind, real.turns);
    values["simulated_conversation"] = render_history(scenario.kind, sim.turns);
  }

  const auto req = single_user_message(templates.render(rel, values));
  return judged(gateway, judge, req, [&](const std::string& raw) {
    const json j = extract_judge_json(raw);
    if (!j.contains("similarity_score"))
      throw Error(ErrorKind::Parse, "no similarity_score in judge JSON");
    double score = 0.0;
    if (j["similarity_score"].is_string())
      score = std::stod(j["similarity_score"].get<std::string>());
    else
      score = j["similarity_score"].get<double>();
    if (score < 1.0 || score > 5.0)
      throw Error(ErrorKind::Parse,
                  "similarity score " + std::to_string(score) +
                      " outside [1,5]");
    JudgeVerdict v;
    v.kind = writing ? VerdictKind::LikertWriting
                     : VerdictKind::LikertInteraction;
    v.numeric = score;
    if (j.contains("key_differences")) v.analysis = j["key_differences"].dump();
    v.raw = raw;
    return v;
  });
}

void resolve_turing_verdict(TuringTrial& trial) {
  // run_a shows (real, sim): choice 1 means "real picked".
  // run_b shows (sim, real): choice 2 means "real picked".
  const bool a_picked_real = trial.run_a.choice == 1;
  const bool b_picked_real = trial.run_b.choice == 2;
  if (a_picked_real == b_picked_real) {
    trial.picked_real = a_picked_real;
    trial.tie_broken = false;
    trial.equal_confidence = false;
    return;
  }
  trial.tie_broken = true;
  if (trial.run_a.confidence == trial.run_b.confidence) {
    trial.equal_confidence = true;
    trial.picked_real = a_picked_real;
  } else {
    trial.picked_real = trial.run_a.confidence > trial.run_b.confidence
                            ? a_picked_real
                            : b_picked_real;
  }
}

namespace {

TuringRun parse_turing_run(const std::string& raw) {
  const json j = extract_judge_json(raw);
  if (!j.contains("conversation_with_human_user") ||
      !j.contains("confidence_rating"))
    throw Error(ErrorKind::Parse, "turing decision JSON missing fields");
  TuringRun run;
  const auto& pick = j["conversation_with_human_user"];
  if (pick.is_string())
    run.choice = std::stoi(pick.get<std::string>());
  else
    run.choice = pick.get<int>();
  if (run.choice != 1 && run.choice != 2)
    throw Error(ErrorKind::Parse, "turing choice must be 1 or 2");
  run.confidence = j["confidence_rating"].get<double>();
  if (run.confidence < 0.0 || run.confidence > 100.0)
    throw Error(ErrorKind::Parse, "turing confidence outside [0,100]");
  return run;
}

}  // namespace

TuringTrial turing_trial(Gateway& gateway, const TemplateStore& templates,
                         const Scenario& scenario, const Conversation& real,
                         const Conversation& sim, const RaterSpec& judge) {
  if (real.scenario_id != sim.scenario_id)
    throw Error(ErrorKind::Argument,
                "turing trial needs conversations on the same scenario");

  const bool math = scenario.kind == TaskKind::MathTutoring;
  const std::string rel =
      math ? "judging/turing_test_math.txt" : "judging/turing_test_document.txt";

  auto request_for = [&](const Conversation& first, const Conversation& second) {
    std::map<std::string, std::string> values;
    values["task"] = math ? "math tutoring" : "document creation";
    if (math)
      values["math_problem"] = scenario.math ? scenario.math->statement : "";
    else {
      values["document_type"] = scenario.doc ? scenario.doc->doc_type : "";
      values["intent"] = scenario.doc ? scenario.doc->intent : "";
    }
    values["conversation_1"] = render_history(scenario.kind, first.turns);
    values["conversation_2"] = render_history(scenario.kind, second.turns);
    return single_user_message(templates.render(rel, values));
  };

  TuringTrial trial;
  trial.raw_a =
      complete_with_retry(gateway, judge, request_for(real, sim));
  trial.run_a = parse_turing_run(trial.raw_a);
  trial.raw_b =
      complete_with_retry(gateway, judge, request_for(sim, real));
  trial.run_b = parse_turing_run(trial.raw_b);
  resolve_turing_verdict(trial);
  return trial;
}

JudgeVerdict attribute_fulfilled(Gateway& gateway,
                                 const TemplateStore& templates,
                                 const StyleAttribute& attribute,
                                 const std::string& profile_answer,
                                 const Conversation& c, const RaterSpec& judge) {
  std::map<std::string, std::string> values;
  values["feature_description"] = attribute.name + " — " +
                                  attribute.question + "\nProfile answer: " +
                                  profile_answer;
  values["feature_category"] =
      attribute.category == AttributeCategory::Writing ? "writing style"
                                                       : "interaction style";
  values["conversation_text"] = render_history(c.task, c.turns);

  const auto req = single_user_message(
      templates.render("judging/attribute_fulfillment.txt", values));
  const std::string raw = complete_with_retry(gateway, judge, req);

  const auto match = raw.rfind("Match");
  const auto no_match = raw.rfind("No Match");
  if (match == std::string::npos && no_match == std::string::npos)
    throw Error(ErrorKind::Parse,
                "neither Match nor No Match in fulfillment output");
  JudgeVerdict v;
  v.kind = VerdictKind::Fulfillment;
  if (no_match != std::string::npos &&
      (match == std::string::npos || match <= no_match + 3))
    v.label = "No Match";
  else
    v.label = "Match";
  v.analysis = raw;
  v.raw = raw;
  return v;
}

double fulfillment_rate(std::span<const JudgeVerdict> verdicts) {
  int matches = 0, total = 0;
  for (const auto& v : verdicts) {
    if (v.kind != VerdictKind::Fulfillment || v.failed || !v.label) continue;
    ++total;
    if (*v.label == "Match") ++matches;
  }
  if (total == 0)
    throw Error(ErrorKind::Argument, "no fulfillment verdicts to aggregate");
  return double(matches) / double(total);
}

}  // namespace simarena
