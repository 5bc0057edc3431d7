#include "simarena/session.hpp"

namespace simarena {

using nlohmann::json;

namespace {

bool abortable(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Transport:
    case ErrorKind::Provider:
    case ErrorKind::ScriptedGap:
    case ErrorKind::Parse:
    case ErrorKind::Extraction:
      return true;
    default:
      return false;
  }
}

std::string assistant_system_prompt(const TemplateStore& templates,
                                    const Scenario& scenario,
                                    const AssistantSpec& assistant) {
  std::string rel = assistant.system_template;
  if (rel.empty()) rel = to_string(scenario.kind) + "/assistant_system.txt";
  std::map<std::string, std::string> values;
  if (scenario.kind == TaskKind::MathTutoring && scenario.math)
    values["math_problem"] = scenario.math->statement;
  return templates.render(rel, values);
}

}  // namespace

std::string document_update(Gateway& gateway, const TemplateStore& templates,
                            std::span<const Turn> history,
                            const AssistantSpec& updater) {
  std::map<std::string, std::string> values;
  values["conversation"] = render_history(TaskKind::DocumentCreation, history);
  ChatRequest req;
  req.messages.push_back(
      {"user", templates.render("extraction/final_document.txt", values)});

  auto attempt = [&](bool refresh) -> std::optional<std::string> {
    const auto reply =
        gateway.complete(updater.provider, updater.sampling, req, {refresh});
    try {
      const json j = extract_judge_json(reply.text);
      if (!j.contains("Final Document")) return std::nullopt;
      return j["Final Document"].get<std::string>();
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  if (auto doc = attempt(false)) return *doc;
  if (auto doc = attempt(true)) return *doc;
  throw Error(ErrorKind::Extraction,
              "document updater produced unusable JSON twice");
}

Conversation run_session(Gateway& gateway, const TemplateStore& templates,
                         const SessionSetup& setup,
                         const ConversationSink& persist) {
  const Scenario& scenario = setup.scenario;
  if (scenario.kind == TaskKind::DocumentCreation && !setup.doc_updater)
    throw Error(ErrorKind::Config,
                "document sessions need a doc_updater spec");
  if (setup.limits.max_turns < 1)
    throw Error(ErrorKind::Config, "max_turns must be >= 1");

  Conversation c;
  c.id = setup.conversation_id.empty()
             ? scenario.id + ":" + setup.assistant.id
             : setup.conversation_id;
  c.task = scenario.kind;
  c.scenario_id = scenario.id;
  c.assistant_model = setup.assistant.id;
  c.user_source = {UserSource::Kind::Simulator, setup.simulator.id};

  const std::string system =
      assistant_system_prompt(templates, scenario, setup.assistant);

  auto account = [&](const ChatResponse& r, const std::string& model) {
    c.usage.prompt_tokens += r.prompt_tokens;
    c.usage.completion_tokens += r.completion_tokens;
    if (setup.prices && setup.prices->count(model)) {
      const double cost = estimate_cost(
          {r.prompt_tokens, r.completion_tokens}, model, *setup.prices);
      c.cost_usd = c.cost_usd.value_or(0.0) + (r.from_cache ? 0.0 : cost);
    }
  };

  bool terminated = false;
  try {
    while (int(c.turns.size()) < setup.limits.max_turns) {
      ParsedSimulatorOutput user = next_user_message(
          gateway, templates, setup.simulator, scenario, setup.profile,
          c.turns);
      if (user.terminate) {
        terminated = true;
        break;
      }

      ChatRequest assistant_req;
      assistant_req.system = system;
      for (const auto& t : c.turns) {
        assistant_req.messages.push_back({"user", t.user_message});
        assistant_req.messages.push_back({"assistant", t.assistant_message});
      }
      assistant_req.messages.push_back({"user", user.message});
      const ChatResponse reply = gateway.complete(
          setup.assistant.provider, setup.assistant.sampling, assistant_req);
      account(reply, setup.assistant.provider.model_id);

      Turn turn;
      turn.index = int(c.turns.size()) + 1;
      turn.user_message = user.message;
      turn.assistant_message = reply.text;
      c.turns.push_back(std::move(turn));

      if (scenario.kind == TaskKind::DocumentCreation) {
        const std::string snapshot =
            document_update(gateway, templates, c.turns, *setup.doc_updater);
        c.turns.back().doc_snapshot = snapshot;
        c.final_document = snapshot;
      }

      if (setup.limits.max_total_tokens &&
          c.usage.prompt_tokens + c.usage.completion_tokens >=
              *setup.limits.max_total_tokens) {
        c.status = "capped";
        break;
      }
    }
  } catch (const Error& e) {
    if (!abortable(e.kind())) throw;
    c.status = "aborted";
    if (persist) persist(c);
    return c;
  }

  if (!terminated && c.status.empty()) c.status = "capped";
  if (terminated && c.turns.empty()) c.status = "aborted";  // degenerate

  if (persist) persist(c);
  return c;
}

TruncationResult post_hoc_truncate(Gateway& gateway,
                                   const TemplateStore& templates,
                                   const Scenario& scenario,
                                   const Conversation& c,
                                   const RaterSpec& judge) {
  if (c.task != TaskKind::DocumentCreation)
    throw Error(ErrorKind::Argument,
                "post-hoc truncation applies to document conversations");

  std::map<std::string, std::string> values;
  values["document_type"] = scenario.doc ? scenario.doc->doc_type : "";
  values["intent"] = scenario.doc ? scenario.doc->intent : "";
  values["user_messages"] = render_user_messages(c.turns);
  ChatRequest req;
  req.messages.push_back(
      {"user", templates.render("extraction/termination_judge.txt", values)});

  const std::string raw =
      gateway.complete(judge.provider, judge.sampling, req).text;
  const json j = extract_judge_json(raw);
  if (!j.contains("Ending Turn Number") ||
      !j["Ending Turn Number"].is_number_integer())
    throw Error(ErrorKind::Parse,
                "termination judge returned no integer Ending Turn Number");

  TruncationResult result;
  result.conversation = c;
  result.ending_turn = j["Ending Turn Number"].get<int>();
  result.reason = j.value("Termination Reason", std::string{});

  const int total = int(c.turns.size());
  if (result.ending_turn > total || result.ending_turn < 1) {
    result.truncated = false;  // out-of-range verdicts leave the log intact
    return result;
  }
  if (result.ending_turn < total) {
    result.conversation.turns.resize(std::size_t(result.ending_turn));
    result.truncated = true;
    const auto& snapshot = result.conversation.turns.back().doc_snapshot;
    result.conversation.final_document = snapshot.value_or("");
  }
  return result;
}

}  // namespace simarena
