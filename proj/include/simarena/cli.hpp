#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simarena/roles.hpp"
#include "simarena/session.hpp"

namespace simarena::cli {

// Exit codes: 0 success, 1 partial failures, 2 configuration error.
inline constexpr int kOk = 0;
inline constexpr int kPartial = 1;
inline constexpr int kConfigError = 2;

struct RunConfig {
  TaskKind task = TaskKind::MathTutoring;
  std::filesystem::path base_dir;  // config file directory; anchors paths
  std::filesystem::path templates_dir;
  std::filesystem::path attributes_dir;
  std::filesystem::path scenario_set;
  std::string profiles;  // path or "from-corpus"
  std::filesystem::path corpus;
  std::filesystem::path cache_dir;
  std::filesystem::path price_table;
  SimulatorSpec simulator;
  std::vector<AssistantSpec> assistants;
  std::optional<RaterSpec> rater;
  std::optional<AssistantSpec> doc_updater;
  SessionLimits limits;
  int parallelism = 1;
  unsigned seed = 0;
  bool similarity = true;       // run likert/turing judges during evaluate
  bool normalize_human = true;  // z-score human ratings before averaging
  bool post_hoc_truncate = false;  // truncate doc runs before judging
  std::map<std::string, std::vector<std::string>> rater_families;
  nlohmann::json raw;  // verbatim snapshot for the run manifest
};

RunConfig load_run_config(const std::filesystem::path& file);

/// Rejects configs referencing missing templates, price entries, or auth
/// variables before any network activity.
void preflight(const RunConfig& config, bool offline);

/// Full CLI entry point; argv-style arguments without the program name.
int run(const std::vector<std::string>& args);

}  // namespace simarena::cli
