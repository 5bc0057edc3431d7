#include "simarena/simulator.hpp"

#include <algorithm>
#include <cctype>

namespace simarena {

// ---------------------------------------------------------------------------
// Strategy
// ---------------------------------------------------------------------------

void validate_strategy(const SimulatorStrategy& s) {
  const bool needs_cot =
      !s.profile_parts.empty() || s.two_stage_refine || s.length_control;
  if (needs_cot && s.base != SimulatorBase::ZeroShotCoT)
    throw Error(ErrorKind::Config,
                "profile, refinement, and length-control prompts extend the "
                "zero-shot CoT templates; base must be zero-shot-cot");
}

std::string strategy_template_dir(const SimulatorStrategy& s) {
  validate_strategy(s);
  if (s.base == SimulatorBase::ZeroShot) return "zero_shot";
  if (!s.profile_parts.empty()) return "zero_shot_cot_user_profile";
  if (s.length_control) return "zero_shot_cot_length_control";
  return "zero_shot_cot";
}

std::string strategy_label(const SimulatorStrategy& s) {
  std::string label =
      s.base == SimulatorBase::ZeroShot ? "zero-shot" : "zero-shot-cot";
  if (!s.profile_parts.empty()) {
    label += "+profile(";
    std::string parts;
    if (s.profile_parts.count(ProfilePart::InherentKnowledge)) parts += "IK,";
    if (s.profile_parts.count(ProfilePart::WritingStyle)) parts += "WS,";
    if (s.profile_parts.count(ProfilePart::InteractionStyle)) parts += "IS,";
    parts.pop_back();
    label += parts + ")";
  }
  if (s.length_control) label += "+lc";
  if (s.two_stage_refine) label += "+refine";
  return label;
}

SimulatorStrategy strategy_from_label(const std::string& label) {
  SimulatorStrategy s;
  if (label.rfind("zero-shot-cot", 0) == 0)
    s.base = SimulatorBase::ZeroShotCoT;
  else if (label.rfind("zero-shot", 0) == 0)
    s.base = SimulatorBase::ZeroShot;
  else
    throw Error(ErrorKind::Config, "unknown strategy label: '" + label + "'");
  if (auto open = label.find("+profile("); open != std::string::npos) {
    const auto close = label.find(')', open);
    if (close == std::string::npos)
      throw Error(ErrorKind::Config, "unclosed profile list in: " + label);
    std::string parts = label.substr(open + 9, close - open - 9);
    for (std::size_t i = 0; i < parts.size();) {
      auto comma = parts.find(',', i);
      if (comma == std::string::npos) comma = parts.size();
      const std::string part = parts.substr(i, comma - i);
      if (part == "IK")
        s.profile_parts.insert(ProfilePart::InherentKnowledge);
      else if (part == "WS")
        s.profile_parts.insert(ProfilePart::WritingStyle);
      else if (part == "IS")
        s.profile_parts.insert(ProfilePart::InteractionStyle);
      else
        throw Error(ErrorKind::Config, "unknown profile part: '" + part + "'");
      i = comma + 1;
    }
  }
  if (label.find("+lc") != std::string::npos) s.length_control = true;
  if (label.find("+refine") != std::string::npos) s.two_stage_refine = true;
  validate_strategy(s);
  return s;
}

// ---------------------------------------------------------------------------
// Length rule
// ---------------------------------------------------------------------------

LengthRange derive_length_range(std::span<const int> word_counts) {
  if (word_counts.empty())
    throw Error(ErrorKind::Argument, "length range needs at least one count");
  int lo = word_counts[0], hi = word_counts[0];
  for (int c : word_counts) {
    if (c <= 0)
      throw Error(ErrorKind::Argument, "word counts must be positive");
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  LengthRange r;
  r.lo = std::max(1, lo / 5 * 5);
  r.hi = (hi + 4) / 5 * 5;
  return r;
}

std::string length_control_phrase(const LengthRange& range) {
  return "between " + std::to_string(range.lo) + " and " +
         std::to_string(range.hi) + " words";
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string collapse_lower(const std::string& s) {
  std::string out;
  bool in_space = false;
  for (char c : trim(s)) {
    if (std::isspace((unsigned char)c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += char(std::tolower((unsigned char)c));
  }
  return out;
}

bool is_terminate_phrase(const std::string& s) {
  return collapse_lower(s) == "terminate conversation";
}

constexpr const char* kMarkers[] = {"Query:", "Response:", "Message:",
                                    "Refined Message:"};

}  // namespace

ParsedSimulatorOutput parse_simulator_output(const std::string& text,
                                             bool expects_cot) {
  ParsedSimulatorOutput out;
  if (!expects_cot) {
    out.message = trim(text);
    if (is_terminate_phrase(out.message)) {
      out.terminate = true;
      out.message.clear();
    }
    return out;
  }

  // Terminate-only outputs carry no marker by instruction.
  if (is_terminate_phrase(text)) {
    out.terminate = true;
    return out;
  }

  std::size_t content_start = std::string::npos;
  for (const char* marker : kMarkers) {
    const std::size_t len = std::string(marker).size();
    std::size_t pos = text.rfind(marker);
    if (pos == std::string::npos) continue;
    if (content_start == std::string::npos || pos + len > content_start)
      content_start = pos + len;
  }
  if (content_start == std::string::npos)
    throw Error(ErrorKind::Parse,
                "no Query:/Response:/Message: marker in simulator output: '" +
                    text + "'");

  out.message = trim(text.substr(content_start));

  const std::size_t thought_pos = text.find("Thought:");
  if (thought_pos != std::string::npos && thought_pos + 8 <= content_start) {
    // strip the marker token itself off the thought span (longest first:
    // "Refined Message:" ends in "Message:")
    std::string span = text.substr(thought_pos + 8, content_start - thought_pos - 8);
    const char* longest[] = {"Refined Message:", "Response:", "Message:",
                             "Query:"};
    for (const char* marker : longest) {
      const std::string m(marker);
      if (auto cut = span.rfind(m); cut != std::string::npos &&
                                    cut + m.size() == span.size()) {
        span = span.substr(0, cut);
        break;
      }
    }
    out.thought = trim(span);
  }

  if (is_terminate_phrase(out.message)) {
    out.terminate = true;
    out.message.clear();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string render_history(TaskKind task, std::span<const Turn> history) {
  const char* assistant_label =
      task == TaskKind::MathTutoring ? "AI Tutor" : "AI Assistant";
  std::string out;
  for (const auto& t : history) {
    out += "User Turn " + std::to_string(t.index) + ": " + t.user_message +
           "\n\n";
    if (!t.assistant_message.empty())
      out += std::string(assistant_label) + " Turn " + std::to_string(t.index) +
             ": " + t.assistant_message + "\n\n";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_user_messages(std::span<const Turn> history) {
  std::string out;
  for (const auto& t : history)
    out += "Turn " + std::to_string(t.index) + ": " + t.user_message + "\n\n";
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_prewriting(std::span<const PrewritingEntry> entries) {
  std::string out;
  for (const auto& e : entries) {
    out += "- Question: " + e.question + "\n";
    out += "  Answer: " + e.answer + "\n";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

namespace {

void append_values(std::string& out, const std::vector<AttributeValue>& values) {
  for (const auto& v : values)
    out += "- " + v.name + " — " + v.question + ": " + v.answer + "\n";
}

}  // namespace

std::string render_profile_block(const SimulatorStrategy& strategy,
                                 const UserProfile& profile, TaskKind task) {
  std::string out;

  if (strategy.profile_parts.count(ProfilePart::InherentKnowledge)) {
    if (task == TaskKind::MathTutoring) {
      out += "## Inherent Knowledge\n";
      out += "Your initial understanding of the concepts involved in the "
             "problem:\n";
      if (profile.knowledge)
        for (const auto& k : *profile.knowledge)
          out += "- " + k.name + ": " + to_string(k.status) + "\n";
      out += "\n";
    } else {
      out += "## Document Preferences\n";
      if (profile.preferences) {
        std::string values;
        append_values(values, *profile.preferences);
        out += values;
      }
      out += "\n";
    }
  }

  if (strategy.profile_parts.count(ProfilePart::WritingStyle)) {
    out += "## Writing Style\n";
    append_values(out, profile.writing_style);
    out += "\n";
  }

  const bool wants_interaction =
      strategy.profile_parts.count(ProfilePart::InteractionStyle) > 0;
  const bool wants_length = strategy.length_control;
  if (wants_interaction || wants_length) {
    out += "## Interaction Style\n";
    if (wants_interaction) append_values(out, profile.interaction_style);
    if (wants_length) {
      if (!profile.length_range)
        throw Error(ErrorKind::Argument,
                    "length control requires a profile length range");
      out += "- Message Length — What is the range of the length of the "
             "user's queries?: Keep each message " +
             length_control_phrase(*profile.length_range) + ".\n";
    }
    out += "\n";
  }

  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_style_block(const UserProfile& profile) {
  std::string out;
  out += "## Writing Style\n";
  append_values(out, profile.writing_style);
  out += "\n## Interaction Style\n";
  append_values(out, profile.interaction_style);
  if (profile.length_range)
    out += "- Message Length — What is the range of the length of the "
           "user's queries?: Keep each message " +
           length_control_phrase(*profile.length_range) + ".\n";
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

namespace {

std::map<std::string, std::string> scenario_values(const Scenario& scenario) {
  std::map<std::string, std::string> values;
  if (scenario.kind == TaskKind::MathTutoring) {
    if (!scenario.math)
      throw Error(ErrorKind::Argument,
                  "math scenario '" + scenario.id + "' has no math fields");
    values["math_problem"] = scenario.math->statement;
  } else {
    if (!scenario.doc)
      throw Error(ErrorKind::Argument,
                  "document scenario '" + scenario.id + "' has no doc fields");
    values["document_type"] = scenario.doc->doc_type;
    values["intent"] = scenario.doc->intent;
    values["pre_writing_materials"] = render_prewriting(scenario.doc->prewriting);
  }
  return values;
}

}  // namespace

ChatRequest build_simulator_prompt(const TemplateStore& templates,
                                   const Scenario& scenario,
                                   const SimulatorStrategy& strategy,
                                   const UserProfile* profile,
                                   std::span<const Turn> history) {
  validate_strategy(strategy);
  const bool needs_profile =
      !strategy.profile_parts.empty() || strategy.length_control;
  if (needs_profile && !profile)
    throw Error(ErrorKind::Argument,
                "strategy selects profile parts but no profile was supplied");
  if (!needs_profile && profile)
    throw Error(ErrorKind::Argument,
                "profile supplied but the strategy uses none of it");

  const std::string rel = to_string(scenario.kind) + "/" +
                          strategy_template_dir(strategy) + "/" +
                          (history.empty() ? "initial.txt" : "followup.txt");

  auto values = scenario_values(scenario);
  if (!history.empty())
    values["conversation_history"] = render_history(scenario.kind, history);
  if (strategy.length_control && strategy.profile_parts.empty()) {
    if (!profile->length_range)
      throw Error(ErrorKind::Argument,
                  "length control requires a profile length range");
    values["length_control"] = length_control_phrase(*profile->length_range);
  }
  if (!strategy.profile_parts.empty())
    values["user_profile"] =
        render_profile_block(strategy, *profile, scenario.kind);

  ChatRequest req;
  req.messages.push_back({"user", templates.render(rel, values)});
  return req;
}

ChatRequest build_refinement_prompt(const TemplateStore& templates,
                                    const Scenario& scenario,
                                    const SimulatorStrategy& strategy,
                                    const UserProfile* profile,
                                    std::span<const Turn> history,
                                    const std::string& original_message) {
  if (!profile)
    throw Error(ErrorKind::Argument, "refinement requires a profile");
  const std::string rel = to_string(scenario.kind) +
                          "/zero_shot_cot_user_profile/refine.txt";

  auto values = scenario_values(scenario);
  values.erase("pre_writing_materials");  // the refine templates carry none
  values["conversation_history"] = render_history(scenario.kind, history);
  values["original_user_message"] = original_message;
  if (scenario.kind == TaskKind::MathTutoring)
    values["user_profile"] = render_profile_block(strategy, *profile,
                                                  scenario.kind);
  else
    values["user_message_style"] = render_style_block(*profile);

  ChatRequest req;
  req.messages.push_back({"user", templates.render(rel, values)});
  return req;
}

ParsedSimulatorOutput next_user_message(Gateway& gateway,
                                        const TemplateStore& templates,
                                        const SimulatorSpec& spec,
                                        const Scenario& scenario,
                                        const UserProfile* profile,
                                        std::span<const Turn> history) {
  const bool cot = spec.strategy.base == SimulatorBase::ZeroShotCoT;
  const ChatRequest req =
      build_simulator_prompt(templates, scenario, spec.strategy, profile,
                             history);

  auto ask = [&](const ChatRequest& request) {
    try {
      return parse_simulator_output(
          gateway.complete(spec.provider, spec.sampling, request).text, cot);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Parse) throw;
      // one re-ask, bypassing the cache so the provider samples afresh
      return parse_simulator_output(
          gateway.complete(spec.provider, spec.sampling, request, {true}).text,
          cot);
    }
  };

  ParsedSimulatorOutput draft = ask(req);
  if (!spec.strategy.two_stage_refine || draft.terminate) return draft;

  const ChatRequest refine = build_refinement_prompt(
      templates, scenario, spec.strategy, profile, history, draft.message);
  ParsedSimulatorOutput refined = ask(refine);
  return refined;
}

}  // namespace simarena
