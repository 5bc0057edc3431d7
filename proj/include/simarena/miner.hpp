#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simarena/conversation.hpp"
#include "simarena/profile.hpp"
#include "simarena/roles.hpp"
#include "simarena/template_engine.hpp"

namespace simarena {

struct NamedConcept {
  std::string name;
  std::string explanation;
};

/// Concepts needed to solve the problem, per the extraction prompt (basic
/// arithmetic excluded by instruction). One retry on malformed JSON.
std::vector<NamedConcept> extract_concepts(Gateway& gateway,
                                           const TemplateStore& templates,
                                           const std::string& problem,
                                           const std::string& solution,
                                           const RaterSpec& extractor);

/// Initial understanding state per concept; total over the input list.
std::vector<ConceptStatus> classify_understanding(
    Gateway& gateway, const TemplateStore& templates,
    std::span<const NamedConcept> concepts, const std::string& problem,
    const Conversation& conversation, const RaterSpec& extractor);

struct DiscoveryResult {
  std::vector<StyleAttribute> added;
  std::vector<std::string> warnings;  // dropped duplicates
};

/// New preference attributes mined from user messages of a 5-conversation
/// batch; names overlapping `existing` are dropped with a warning.
DiscoveryResult discover_preference_attributes(
    Gateway& gateway, const TemplateStore& templates,
    const std::string& doc_type, std::span<const StyleAttribute> existing,
    std::span<const Conversation> batch, const RaterSpec& miner);

/// The user's explicitly stated preference values; silent attributes are
/// omitted, names outside the registry are a validation error.
std::vector<AttributeValue> extract_preference_values(
    Gateway& gateway, const TemplateStore& templates,
    std::span<const StyleAttribute> attrs, const Scenario& scenario,
    const Conversation& conversation, const RaterSpec& extractor);

/// Contrastive mining: `iterations` rounds over paired real/simulated
/// conversations (writing template sees user queries, interaction template
/// full conversations), accumulating novel attributes into the registry.
AttributeRegistry mine_style_attributes(Gateway& gateway,
                                        const TemplateStore& templates,
                                        TaskKind task,
                                        std::span<const Conversation> real,
                                        std::span<const Conversation> simulated,
                                        AttributeRegistry registry,
                                        int iterations, const RaterSpec& miner);

/// Streamlines a mined registry with the finalize prompts. Category
/// contamination (a writing attribute carrying an interaction name, or vice
/// versa) is a validation error.
AttributeRegistry finalize_attributes(Gateway& gateway,
                                      const TemplateStore& templates,
                                      const AttributeRegistry& mined,
                                      const RaterSpec& finalizer);

/// Style values for every attribute of one category; a missing attribute is
/// a validation error naming it.
std::vector<AttributeValue> extract_style_values(
    Gateway& gateway, const TemplateStore& templates,
    const AttributeRegistry& registry, AttributeCategory category,
    const Conversation& conversation, const RaterSpec& extractor);

/// Verbatim final answer, or the "No clear final answer given" sentinel.
std::string extract_student_answer(Gateway& gateway,
                                   const TemplateStore& templates,
                                   const std::string& problem,
                                   const Conversation& conversation,
                                   const RaterSpec& extractor);

/// Grounding question/answer pairs (style and tone filtered by the prompt,
/// not re-validated here).
std::vector<PrewritingEntry> extract_background_facts(
    Gateway& gateway, const TemplateStore& templates, const Scenario& scenario,
    const Conversation& conversation, const RaterSpec& extractor);

/// "- Name: Question" rendering shared by mining and judging prompts.
std::string render_attribute_list(std::span<const StyleAttribute> attrs);

}  // namespace simarena
