#include "simarena/profile.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace simarena {

using nlohmann::json;

std::string to_string(UnderstandingStatus s) {
  switch (s) {
    case UnderstandingStatus::KnowsWell: return "Knows well";
    case UnderstandingStatus::PartialUnderstanding: return "Partial understanding";
    case UnderstandingStatus::Struggling: return "Struggling";
    case UnderstandingStatus::NotIntroduced: return "Not introduced";
  }
  return "Not introduced";
}

UnderstandingStatus understanding_status_from_string(const std::string& s) {
  if (s == "Knows well") return UnderstandingStatus::KnowsWell;
  if (s == "Partial understanding") return UnderstandingStatus::PartialUnderstanding;
  if (s == "Struggling") return UnderstandingStatus::Struggling;
  if (s == "Not introduced") return UnderstandingStatus::NotIntroduced;
  throw Error(ErrorKind::Validation,
              "unknown understanding status: '" + s + "'");
}

bool same_attribute_name(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower((unsigned char)a[i]) != std::tolower((unsigned char)b[i]))
      return false;
  return true;
}

bool AttributeRegistry::contains(AttributeCategory category,
                                 const std::string& name) const {
  const auto& list = category == AttributeCategory::Writing ? writing
                                                            : interaction;
  return std::any_of(list.begin(), list.end(), [&](const StyleAttribute& a) {
    return same_attribute_name(a.name, name);
  });
}

namespace {

std::vector<StyleAttribute> load_attribute_file(
    const std::filesystem::path& file, AttributeCategory category) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Io,
                "cannot open attribute list '" + file.string() + "'");
  json arr;
  in >> arr;
  std::vector<StyleAttribute> attrs;
  for (const auto& j : arr)
    attrs.push_back({category, j.at("name").get<std::string>(),
                     j.at("question").get<std::string>()});
  return attrs;
}

}  // namespace

AttributeRegistry load_seed_registry(const std::filesystem::path& dir,
                                     TaskKind task) {
  AttributeRegistry r;
  r.task = task;
  r.provenance = RegistryProvenance::Seed;
  r.writing = load_attribute_file(dir / "seed_writing.json",
                                  AttributeCategory::Writing);
  r.interaction = load_attribute_file(dir / "seed_interaction.json",
                                      AttributeCategory::Interaction);
  return r;
}

AttributeRegistry load_finalized_registry(const std::filesystem::path& dir,
                                          TaskKind task) {
  AttributeRegistry r;
  r.task = task;
  r.provenance = RegistryProvenance::Finalized;
  const auto base = dir / to_string(task);
  r.writing =
      load_attribute_file(base / "writing.json", AttributeCategory::Writing);
  r.interaction = load_attribute_file(base / "interaction.json",
                                      AttributeCategory::Interaction);
  return r;
}

json to_json(const AttributeRegistry& r) {
  auto list = [](const std::vector<StyleAttribute>& attrs) {
    json arr = json::array();
    for (const auto& a : attrs)
      arr.push_back({{"name", a.name}, {"question", a.question}});
    return arr;
  };
  const char* provenance = r.provenance == RegistryProvenance::Seed ? "seed"
                           : r.provenance == RegistryProvenance::Mined
                               ? "mined"
                               : "finalized";
  return {{"task", to_string(r.task)},
          {"provenance", provenance},
          {"writing", list(r.writing)},
          {"interaction", list(r.interaction)}};
}

AttributeRegistry registry_from_json(const json& j) {
  AttributeRegistry r;
  r.task = task_kind_from_string(j.at("task").get<std::string>());
  const auto provenance = j.value("provenance", std::string("seed"));
  r.provenance = provenance == "seed"
                     ? RegistryProvenance::Seed
                     : provenance == "mined" ? RegistryProvenance::Mined
                                             : RegistryProvenance::Finalized;
  for (const auto& a : j.at("writing"))
    r.writing.push_back({AttributeCategory::Writing,
                         a.at("name").get<std::string>(),
                         a.at("question").get<std::string>()});
  for (const auto& a : j.at("interaction"))
    r.interaction.push_back({AttributeCategory::Interaction,
                             a.at("name").get<std::string>(),
                             a.at("question").get<std::string>()});
  return r;
}

std::vector<Violation> validate_profile(const UserProfile& p) {
  std::vector<Violation> v;
  if (p.length_range) {
    if (p.length_range->lo < 1 || p.length_range->lo > p.length_range->hi)
      v.push_back({"length_range_invalid", "length_range",
                   "length range must satisfy 1 <= lo <= hi"});
  }
  return v;
}

namespace {

json values_json(const std::vector<AttributeValue>& values) {
  json arr = json::array();
  for (const auto& v : values)
    arr.push_back(
        {{"name", v.name}, {"question", v.question}, {"answer", v.answer}});
  return arr;
}

std::vector<AttributeValue> values_from_json(const json& arr) {
  std::vector<AttributeValue> out;
  for (const auto& j : arr)
    out.push_back({j.at("name").get<std::string>(),
                   j.value("question", std::string{}),
                   j.value("answer", std::string{})});
  return out;
}

}  // namespace

json to_json(const UserProfile& p) {
  json j;
  if (p.knowledge) {
    json arr = json::array();
    for (const auto& k : *p.knowledge)
      arr.push_back({{"concept", k.name},
                     {"explanation", k.explanation},
                     {"status", to_string(k.status)}});
    j["knowledge"] = std::move(arr);
  }
  if (p.preferences) j["preferences"] = values_json(*p.preferences);
  j["writing_style"] = values_json(p.writing_style);
  j["interaction_style"] = values_json(p.interaction_style);
  if (p.length_range)
    j["length_range"] = {{"lo", p.length_range->lo}, {"hi", p.length_range->hi}};
  return j;
}

UserProfile profile_from_json(const json& j) {
  UserProfile p;
  if (j.contains("knowledge")) {
    std::vector<ConceptStatus> ks;
    for (const auto& k : j["knowledge"])
      ks.push_back({k.at("concept").get<std::string>(),
                    k.value("explanation", std::string{}),
                    understanding_status_from_string(
                        k.at("status").get<std::string>())});
    p.knowledge = std::move(ks);
  }
  if (j.contains("preferences"))
    p.preferences = values_from_json(j["preferences"]);
  if (j.contains("writing_style"))
    p.writing_style = values_from_json(j["writing_style"]);
  if (j.contains("interaction_style"))
    p.interaction_style = values_from_json(j["interaction_style"]);
  if (j.contains("length_range"))
    p.length_range = LengthRange{j["length_range"].at("lo").get<int>(),
                                 j["length_range"].at("hi").get<int>()};
  return p;
}

}  // namespace simarena

