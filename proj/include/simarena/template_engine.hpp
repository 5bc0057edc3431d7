#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "simarena/error.hpp"

namespace simarena {

/// Substitutes `{name}` placeholders; `{{` and `}}` are escapes for literal
/// braces. A placeholder without a value throws ErrorKind::Template naming
/// it; a stray unmatched brace throws too.
std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& values);

/// Names of the placeholders a template mentions, in order of appearance.
std::vector<std::string> template_placeholders(std::string_view text);

/// Loads prompt templates below a root directory, cached by relative path.
class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path root);

  const std::string& get(const std::string& relative_path) const;
  std::string render(const std::string& relative_path,
                     const std::map<std::string, std::string>& values) const;

  const std::filesystem::path& root() const { return root_; }

  /// FNV-1a content hash per template, for run manifests.
  std::string content_hash(const std::string& relative_path) const;

 private:
  std::filesystem::path root_;
  mutable std::map<std::string, std::string> cache_;
};

}  // namespace simarena
