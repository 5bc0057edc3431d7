#pragma once

#include <set>
#include <string>

#include "simarena/gateway.hpp"

namespace simarena {

enum class SimulatorBase { ZeroShot, ZeroShotCoT };
enum class ProfilePart { InherentKnowledge, WritingStyle, InteractionStyle };

struct SimulatorStrategy {
  SimulatorBase base = SimulatorBase::ZeroShotCoT;
  std::set<ProfilePart> profile_parts;
  bool length_control = false;
  bool two_stage_refine = false;
};

/// Profile or refinement prompts extend the CoT templates; the dedicated
/// length-control templates are CoT too. Throws ErrorKind::Config when the
/// combination has no template.
void validate_strategy(const SimulatorStrategy& s);

/// Directory name under templates/<task>/ serving this strategy.
std::string strategy_template_dir(const SimulatorStrategy& s);

/// Short human-readable label ("zero-shot-cot+profile(IS)+lc").
std::string strategy_label(const SimulatorStrategy& s);
SimulatorStrategy strategy_from_label(const std::string& label);

struct SimulatorSpec {
  std::string id;
  ProviderSpec provider;
  SamplingParams sampling = simulator_sampling();
  SimulatorStrategy strategy;
};

struct AssistantSpec {
  std::string id;  // reported model label
  ProviderSpec provider;
  SamplingParams sampling = assistant_sampling();
  std::string system_template;  // templates/ relative path; may be empty
};

struct RaterSpec {
  std::string id;
  ProviderSpec provider;
  SamplingParams sampling = rater_sampling();
  std::string template_override;  // templates/ relative path; empty = default
};

}  // namespace simarena
