#include "simarena/miner.hpp"

#include <algorithm>

#include "simarena/judges.hpp"
#include "simarena/simulator.hpp"

namespace simarena {

using nlohmann::json;

namespace {

std::string task_phrase(TaskKind task) {
  return task == TaskKind::MathTutoring ? "math tutoring" : "document creation";
}

ChatRequest user_message(std::string text) {
  ChatRequest req;
  req.messages.push_back({"user", std::move(text)});
  return req;
}

json ask_json(Gateway& gateway, const RaterSpec& spec, const ChatRequest& req,
              bool retry_once) {
  const std::string raw =
      gateway.complete(spec.provider, spec.sampling, req).text;
  try {
    return extract_judge_json(raw);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Parse || !retry_once) throw;
  }
  const std::string again =
      gateway.complete(spec.provider, spec.sampling, req, {true}).text;
  try {
    return extract_judge_json(again);
  } catch (const Error&) {
    throw Error(ErrorKind::Extraction,
                "extraction prompt produced unusable JSON twice");
  }
}

}  // namespace

std::string render_attribute_list(std::span<const StyleAttribute> attrs) {
  std::string out;
  for (const auto& a : attrs) out += "- " + a.name + ": " + a.question + "\n";
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::vector<NamedConcept> extract_concepts(Gateway& gateway,
                                           const TemplateStore& templates,
                                           const std::string& problem,
                                           const std::string& solution,
                                           const RaterSpec& extractor) {
  const auto req = user_message(templates.render(
      "extraction/math_concepts.txt",
      {{"math_problem", problem}, {"solution", solution}}));
  const json j = ask_json(gateway, extractor, req, /*retry_once=*/true);
  if (!j.is_array())
    throw Error(ErrorKind::Extraction, "concept extraction expects an array");
  std::vector<NamedConcept> out;
  for (const auto& e : j)
    out.push_back({e.at("Concept Name").get<std::string>(),
                   e.value("Concept Explanation", std::string{})});
  return out;
}

std::vector<ConceptStatus> classify_understanding(
    Gateway& gateway, const TemplateStore& templates,
    std::span<const NamedConcept> concepts, const std::string& problem,
    const Conversation& conversation, const RaterSpec& extractor) {
  if (concepts.empty())
    throw Error(ErrorKind::Argument, "no concepts to classify");

  std::string concept_list;
  for (const auto& c : concepts)
    concept_list += "- " + c.name + ": " + c.explanation + "\n";

  const auto req = user_message(templates.render(
      "extraction/understanding_state.txt",
      {{"concepts", concept_list},
       {"problem", problem},
       {"conversation",
        render_history(TaskKind::MathTutoring, conversation.turns)}}));
  const json j = ask_json(gateway, extractor, req, /*retry_once=*/false);

  std::vector<ConceptStatus> out;
  std::vector<std::string> offenders;
  for (const auto& e : j) {
    const auto name = e.at("Concept Name").get<std::string>();
    const auto status_text = e.at("Status").get<std::string>();
    const bool known = std::any_of(
        concepts.begin(), concepts.end(),
        [&](const NamedConcept& c) { return same_attribute_name(c.name, name); });
    if (!known) {
      offenders.push_back("unexpected concept '" + name + "'");
      continue;
    }
    try {
      ConceptStatus cs;
      cs.name = name;
      cs.status = understanding_status_from_string(status_text);
      for (const auto& c : concepts)
        if (same_attribute_name(c.name, name)) cs.explanation = c.explanation;
      out.push_back(std::move(cs));
    } catch (const Error&) {
      offenders.push_back("invalid status '" + status_text + "' for '" + name +
                          "'");
    }
  }
  for (const auto& c : concepts) {
    const bool covered =
        std::any_of(out.begin(), out.end(), [&](const ConceptStatus& s) {
          return same_attribute_name(s.name, c.name);
        });
    if (!covered) offenders.push_back("missing concept '" + c.name + "'");
  }
  if (!offenders.empty()) {
    std::string joined;
    for (const auto& o : offenders) joined += (joined.empty() ? "" : "; ") + o;
    throw Error(ErrorKind::Validation,
                "understanding classification rejected: " + joined);
  }
  return out;
}

DiscoveryResult discover_preference_attributes(
    Gateway& gateway, const TemplateStore& templates,
    const std::string& doc_type, std::span<const StyleAttribute> existing,
    std::span<const Conversation> batch, const RaterSpec& miner) {
  std::string user_messages;
  for (const auto& c : batch) {
    user_messages += render_user_messages(c.turns);
    user_messages += "\n\n";
  }

  const auto req = user_message(templates.render(
      "extraction/preference_discovery.txt",
      {{"document_type", doc_type},
       {"existing_preferences", render_attribute_list(existing)},
       {"user_messages", user_messages}}));
  const json j = ask_json(gateway, miner, req, /*retry_once=*/true);

  DiscoveryResult result;
  for (const auto& e : j) {
    StyleAttribute attr;
    attr.category = AttributeCategory::Writing;  // preferences live doc-side
    attr.name = e.at("Preference Name").get<std::string>();
    attr.question = e.value("Preference Question", std::string{});
    const bool dup =
        std::any_of(existing.begin(), existing.end(),
                    [&](const StyleAttribute& a) {
                      return same_attribute_name(a.name, attr.name);
                    }) ||
        std::any_of(result.added.begin(), result.added.end(),
                    [&](const StyleAttribute& a) {
                      return same_attribute_name(a.name, attr.name);
                    });
    if (dup)
      result.warnings.push_back("dropped duplicate preference '" + attr.name +
                                "'");
    else
      result.added.push_back(std::move(attr));
  }
  return result;
}

std::vector<AttributeValue> extract_preference_values(
    Gateway& gateway, const TemplateStore& templates,
    std::span<const StyleAttribute> attrs, const Scenario& scenario,
    const Conversation& conversation, const RaterSpec& extractor) {
  if (!scenario.doc)
    throw Error(ErrorKind::Argument, "preference values need a doc scenario");

  const auto req = user_message(templates.render(
      "extraction/preference_values.txt",
      {{"document_type", scenario.doc->doc_type},
       {"intent", scenario.doc->intent},
       {"pre_writing_materials", render_prewriting(scenario.doc->prewriting)},
       {"conversation",
        render_history(TaskKind::DocumentCreation, conversation.turns)},
       {"existing_preferences", render_attribute_list(attrs)}}));
  const json j = ask_json(gateway, extractor, req, /*retry_once=*/true);

  std::vector<AttributeValue> out;
  for (const auto& e : j) {
    AttributeValue v;
    v.name = e.at("Preference Name").get<std::string>();
    v.question = e.value("Preference Question", std::string{});
    v.answer = e.value("Preference Question Answer", std::string{});
    const bool known = std::any_of(
        attrs.begin(), attrs.end(), [&](const StyleAttribute& a) {
          return same_attribute_name(a.name, v.name);
        });
    if (!known)
      throw Error(ErrorKind::Validation,
                  "extractor invented preference '" + v.name + "'");
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

int append_novel(AttributeRegistry& registry, AttributeCategory category,
                 const json& features) {
  auto& list = category == AttributeCategory::Writing ? registry.writing
                                                      : registry.interaction;
  int added = 0;
  for (const auto& e : features) {
    StyleAttribute attr;
    attr.category = category;
    attr.name = e.at("Feature Name").get<std::string>();
    attr.question = e.value("Feature Question", std::string{});
    if (registry.contains(AttributeCategory::Writing, attr.name) ||
        registry.contains(AttributeCategory::Interaction, attr.name))
      continue;  // per-round case-insensitive dedup
    list.push_back(std::move(attr));
    ++added;
  }
  return added;
}

}  // namespace

AttributeRegistry mine_style_attributes(Gateway& gateway,
                                        const TemplateStore& templates,
                                        TaskKind task,
                                        std::span<const Conversation> real,
                                        std::span<const Conversation> simulated,
                                        AttributeRegistry registry,
                                        int iterations, const RaterSpec& miner) {
  if (real.empty() || real.size() != simulated.size())
    throw Error(ErrorKind::Argument,
                "mining needs equal, non-empty real/simulated conversation "
                "lists");
  for (std::size_t i = 0; i < real.size(); ++i)
    if (real[i].scenario_id != simulated[i].scenario_id)
      throw Error(ErrorKind::Argument,
                  "mining pairs must share scenarios (mismatch at index " +
                      std::to_string(i) + ")");

  registry.task = task;
  registry.provenance = RegistryProvenance::Mined;

  for (int round = 0; round < iterations; ++round) {
    const auto& real_conv = real[std::size_t(round) % real.size()];
    const auto& sim_conv = simulated[std::size_t(round) % simulated.size()];

    const auto writing_req = user_message(templates.render(
        "extraction/writing_attribute_mining.txt",
        {{"task", task_phrase(task)},
         {"existing_features", render_attribute_list(registry.writing)},
         {"real_human_queries", render_user_messages(real_conv.turns)},
         {"simulated_user_queries", render_user_messages(sim_conv.turns)}}));
    append_novel(registry, AttributeCategory::Writing,
                 ask_json(gateway, miner, writing_req, /*retry_once=*/true));

    const auto interaction_req = user_message(templates.render(
        "extraction/interaction_attribute_mining.txt",
        {{"task", task_phrase(task)},
         {"existing_features", render_attribute_list(registry.interaction)},
         {"real_human_conversation", render_history(task, real_conv.turns)},
         {"simulated_user_conversation",
          render_history(task, sim_conv.turns)}}));
    append_novel(registry, AttributeCategory::Interaction,
                 ask_json(gateway, miner, interaction_req, /*retry_once=*/true));
  }
  return registry;
}

AttributeRegistry finalize_attributes(Gateway& gateway,
                                      const TemplateStore& templates,
                                      const AttributeRegistry& mined,
                                      const RaterSpec& finalizer) {
  if (mined.writing.empty() && mined.interaction.empty())
    throw Error(ErrorKind::Argument, "cannot finalize an empty registry");

  auto streamline = [&](AttributeCategory category) {
    const bool writing = category == AttributeCategory::Writing;
    const auto& input = writing ? mined.writing : mined.interaction;
    const auto& opposite = writing ? mined.interaction : mined.writing;
    const auto req = user_message(templates.render(
        writing ? "extraction/writing_attribute_finalize.txt"
                : "extraction/interaction_attribute_finalize.txt",
        {{"task", task_phrase(mined.task)},
         {"feature_list", render_attribute_list(input)}}));
    const json j = ask_json(gateway, finalizer, req, /*retry_once=*/true);

    std::vector<StyleAttribute> out;
    for (const auto& e : j) {
      StyleAttribute attr;
      attr.category = category;
      attr.name = e.at("Feature Name").get<std::string>();
      attr.question = e.value("Feature Question", std::string{});
      const bool contaminated = std::any_of(
          opposite.begin(), opposite.end(), [&](const StyleAttribute& a) {
            return same_attribute_name(a.name, attr.name);
          });
      if (contaminated)
        throw Error(ErrorKind::Validation,
                    std::string("finalized ") +
                        (writing ? "writing" : "interaction") +
                        " list kept the opposite-category attribute '" +
                        attr.name + "'");
      const bool dup =
          std::any_of(out.begin(), out.end(), [&](const StyleAttribute& a) {
            return same_attribute_name(a.name, attr.name);
          });
      if (!dup) out.push_back(std::move(attr));
    }
    return out;
  };

  AttributeRegistry final_registry;
  final_registry.task = mined.task;
  final_registry.provenance = RegistryProvenance::Finalized;
  final_registry.writing = streamline(AttributeCategory::Writing);
  final_registry.interaction = streamline(AttributeCategory::Interaction);
  return final_registry;
}

std::vector<AttributeValue> extract_style_values(
    Gateway& gateway, const TemplateStore& templates,
    const AttributeRegistry& registry, AttributeCategory category,
    const Conversation& conversation, const RaterSpec& extractor) {
  const bool writing = category == AttributeCategory::Writing;
  const auto& attrs = writing ? registry.writing : registry.interaction;
  const std::string input =
      writing ? render_user_messages(conversation.turns)
              : render_history(registry.task, conversation.turns);

  const auto req = user_message(templates.render(
      writing ? "extraction/writing_style_values.txt"
              : "extraction/interaction_style_values.txt",
      {{"task", task_phrase(registry.task)},
       {"features", render_attribute_list(attrs)},
       {"input", input}}));
  const json j = ask_json(gateway, extractor, req, /*retry_once=*/true);

  std::vector<AttributeValue> out;
  for (const auto& e : j) {
    AttributeValue v;
    v.name = e.at("Feature Name").get<std::string>();
    v.question = e.value("Feature Question", std::string{});
    v.answer = e.value("Feature Question Answer", std::string{});
    const bool known =
        std::any_of(attrs.begin(), attrs.end(), [&](const StyleAttribute& a) {
          return same_attribute_name(a.name, v.name);
        });
    if (!known)
      throw Error(ErrorKind::Validation,
                  "extractor invented attribute '" + v.name + "'");
    out.push_back(std::move(v));
  }
  for (const auto& a : attrs) {
    const bool answered =
        std::any_of(out.begin(), out.end(), [&](const AttributeValue& v) {
          return same_attribute_name(v.name, a.name);
        });
    if (!answered)
      throw Error(ErrorKind::Validation,
                  "extractor left attribute '" + a.name + "' unanswered");
  }
  return out;
}

std::string extract_student_answer(Gateway& gateway,
                                   const TemplateStore& templates,
                                   const std::string& problem,
                                   const Conversation& conversation,
                                   const RaterSpec& extractor) {
  const auto req = user_message(templates.render(
      "extraction/student_answer.txt",
      {{"problem", problem},
       {"conversation",
        render_history(TaskKind::MathTutoring, conversation.turns)}}));
  const std::string raw =
      gateway.complete(extractor.provider, extractor.sampling, req).text;

  static const std::string marker = "Extracted Student's Answer:";
  const auto pos = raw.rfind(marker);
  if (pos == std::string::npos)
    throw Error(ErrorKind::Parse,
                "no 'Extracted Student's Answer:' marker in output");
  std::string answer = raw.substr(pos + marker.size());
  const auto begin = answer.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = answer.find_last_not_of(" \t\r\n");
  return answer.substr(begin, end - begin + 1);
}

std::vector<PrewritingEntry> extract_background_facts(
    Gateway& gateway, const TemplateStore& templates, const Scenario& scenario,
    const Conversation& conversation, const RaterSpec& extractor) {
  if (!scenario.doc)
    throw Error(ErrorKind::Argument, "background facts need a doc scenario");

  const auto req = user_message(templates.render(
      "extraction/background_facts.txt",
      {{"document_type", scenario.doc->doc_type},
       {"intent", scenario.doc->intent},
       {"pre_writing_materials", render_prewriting(scenario.doc->prewriting)},
       {"conversation",
        render_history(TaskKind::DocumentCreation, conversation.turns)}}));

  json j;
  try {
    j = ask_json(gateway, extractor, req, /*retry_once=*/false);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Parse) throw;
    throw Error(ErrorKind::Extraction,
                std::string("background extraction failed: ") + e.what());
  }
  std::vector<PrewritingEntry> out;
  for (const auto& e : j)
    out.push_back({e.at("question").get<std::string>(),
                   e.value("answer", std::string{})});
  return out;
}

}  // namespace simarena
