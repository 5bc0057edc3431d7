#pragma once

#include <functional>
#include <optional>

#include "simarena/conversation.hpp"
#include "simarena/judges.hpp"
#include "simarena/roles.hpp"
#include "simarena/simulator.hpp"

namespace simarena {

struct SessionLimits {
  int max_turns = 20;
  std::optional<std::int64_t> max_total_tokens;
};

struct SessionSetup {
  Scenario scenario;
  SimulatorSpec simulator;
  AssistantSpec assistant;
  std::optional<AssistantSpec> doc_updater;  // required for DocumentCreation
  const UserProfile* profile = nullptr;
  SessionLimits limits;
  std::string conversation_id;
  const PriceTable* prices = nullptr;  // optional per-conversation cost
};

using ConversationSink = std::function<void(const Conversation&)>;

/// Runs the simulator<->assistant loop to completion. The conversation is
/// handed to `persist` before returning, including partial conversations
/// aborted by a mid-session failure (status "aborted") and conversations cut
/// by a cap (status "capped"). The assistant only ever sees the user
/// messages and its own replies.
Conversation run_session(Gateway& gateway, const TemplateStore& templates,
                         const SessionSetup& setup,
                         const ConversationSink& persist = {});

/// Re-extracts the current document from the history so far via the
/// extraction prompt; empty string is a legal document. One retry on
/// unusable JSON, then ErrorKind::Extraction.
std::string document_update(Gateway& gateway, const TemplateStore& templates,
                            std::span<const Turn> history,
                            const AssistantSpec& updater);

struct TruncationResult {
  Conversation conversation;
  int ending_turn = 0;
  std::string reason;
  bool truncated = false;
};

/// Runs the termination judge over the user messages of a document
/// conversation and drops turns after the returned ending turn; the final
/// document rolls back to that turn's snapshot.
TruncationResult post_hoc_truncate(Gateway& gateway,
                                   const TemplateStore& templates,
                                   const Scenario& scenario,
                                   const Conversation& c,
                                   const RaterSpec& judge);

}  // namespace simarena
