#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simarena/conversation.hpp"

namespace simarena {

enum class UnderstandingStatus {
  KnowsWell,
  PartialUnderstanding,
  Struggling,
  NotIntroduced,
};

std::string to_string(UnderstandingStatus s);
UnderstandingStatus understanding_status_from_string(const std::string& s);

struct ConceptStatus {
  std::string name;
  std::string explanation;
  UnderstandingStatus status = UnderstandingStatus::NotIntroduced;

  bool operator==(const ConceptStatus&) const = default;
};

enum class AttributeCategory { Writing, Interaction };

struct StyleAttribute {
  AttributeCategory category = AttributeCategory::Writing;
  std::string name;
  std::string question;

  bool operator==(const StyleAttribute&) const = default;
};

enum class RegistryProvenance { Seed, Mined, Finalized };

struct AttributeRegistry {
  TaskKind task = TaskKind::MathTutoring;
  std::vector<StyleAttribute> writing;
  std::vector<StyleAttribute> interaction;
  RegistryProvenance provenance = RegistryProvenance::Seed;

  /// Case-insensitive name membership within one category.
  bool contains(AttributeCategory category, const std::string& name) const;
};

/// Case-insensitive exact comparison used for attribute-name deduplication.
bool same_attribute_name(const std::string& a, const std::string& b);

/// Loads `seed_writing.json` + `seed_interaction.json` below `dir`.
AttributeRegistry load_seed_registry(const std::filesystem::path& dir,
                                     TaskKind task);

/// Loads the finalized per-task lists, `<task>/writing.json` etc.
AttributeRegistry load_finalized_registry(const std::filesystem::path& dir,
                                          TaskKind task);

nlohmann::json to_json(const AttributeRegistry& r);
AttributeRegistry registry_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// User profile
// ---------------------------------------------------------------------------

struct AttributeValue {
  std::string name;
  std::string question;
  std::string answer;

  bool operator==(const AttributeValue&) const = default;
};

struct LengthRange {
  int lo = 1;
  int hi = 1;

  bool operator==(const LengthRange&) const = default;
};

struct UserProfile {
  std::optional<std::vector<ConceptStatus>> knowledge;   // math
  std::optional<std::vector<AttributeValue>> preferences; // documents
  std::vector<AttributeValue> writing_style;
  std::vector<AttributeValue> interaction_style;
  std::optional<LengthRange> length_range;

  bool operator==(const UserProfile&) const = default;
};

std::vector<Violation> validate_profile(const UserProfile& p);

nlohmann::json to_json(const UserProfile& p);
UserProfile profile_from_json(const nlohmann::json& j);

}  // namespace simarena
