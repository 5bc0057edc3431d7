#pragma once

#include <span>
#include <string>

#include "simarena/conversation.hpp"
#include "simarena/profile.hpp"
#include "simarena/roles.hpp"
#include "simarena/template_engine.hpp"

namespace simarena {

/// Widens [min, max] of observed word counts to multiples of five: hi is the
/// smallest multiple of 5 >= max, lo the largest multiple of 5 <= min,
/// clamped to >= 1 (so 3..43 widens to 1..45).
LengthRange derive_length_range(std::span<const int> word_counts);

struct ParsedSimulatorOutput {
  std::optional<std::string> thought;
  std::string message;  // empty iff terminate
  bool terminate = false;
};

/// Recovers the message (and thought, for CoT grammars) from raw simulator
/// text. The message is the content after the LAST of the markers "Query:",
/// "Response:", "Message:", "Refined Message:"; the terminate phrase is
/// matched exactly, case-insensitively, with whitespace runs collapsed.
ParsedSimulatorOutput parse_simulator_output(const std::string& text,
                                             bool expects_cot);

/// "between {lo} and {hi} words"
std::string length_control_phrase(const LengthRange& range);

/// The profile block substituted into {user_profile}: only the selected
/// parts, knowledge/preferences first, then writing style, then interaction
/// style, one "name — question: answer" line per attribute. Length control
/// appends a Message Length entry to the interaction-style section.
std::string render_profile_block(const SimulatorStrategy& strategy,
                                 const UserProfile& profile, TaskKind task);

/// Style-only block for the document refinement prompt's
/// {user_message_style}.
std::string render_style_block(const UserProfile& profile);

/// Transcript renderings (frozen formats; goldens pin them).
std::string render_history(TaskKind task, std::span<const Turn> history);
std::string render_user_messages(std::span<const Turn> history);
std::string render_prewriting(std::span<const PrewritingEntry> entries);

/// Renders the strategy's initial/follow-up template into a single-message
/// chat request. `profile` is required iff the strategy selects profile
/// parts or length control.
ChatRequest build_simulator_prompt(const TemplateStore& templates,
                                   const Scenario& scenario,
                                   const SimulatorStrategy& strategy,
                                   const UserProfile* profile,
                                   std::span<const Turn> history);

/// The second-stage refinement request for `original_message`.
ChatRequest build_refinement_prompt(const TemplateStore& templates,
                                    const Scenario& scenario,
                                    const SimulatorStrategy& strategy,
                                    const UserProfile* profile,
                                    std::span<const Turn> history,
                                    const std::string& original_message);

/// One simulator step: build, complete (simulator sampling defaults), parse;
/// re-asks once on a parse error; when the strategy refines, issues the
/// second-stage call unless the draft already terminated.
ParsedSimulatorOutput next_user_message(Gateway& gateway,
                                        const TemplateStore& templates,
                                        const SimulatorSpec& spec,
                                        const Scenario& scenario,
                                        const UserProfile* profile,
                                        std::span<const Turn> history);

}  // namespace simarena
