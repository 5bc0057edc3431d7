#include "simarena/template_engine.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace simarena {

namespace {

bool placeholder_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

template <typename OnPlaceholder>
void scan(std::string_view text, std::string& out, OnPlaceholder&& on) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        out += '{';
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < text.size() && placeholder_char(text[j])) ++j;
      if (j >= text.size() || text[j] != '}' || j == i + 1)
        throw Error(ErrorKind::Template,
                    "stray '{' at offset " + std::to_string(i) +
                        " (use '{{' for a literal brace)");
      on(std::string(text.substr(i + 1, j - i - 1)), out);
      i = j;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        out += '}';
        ++i;
        continue;
      }
      throw Error(ErrorKind::Template,
                  "stray '}' at offset " + std::to_string(i) +
                      " (use '}}' for a literal brace)");
    } else {
      out += c;
    }
  }
}

}  // namespace

std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  scan(text, out, [&](const std::string& name, std::string& acc) {
    auto it = values.find(name);
    if (it == values.end())
      throw Error(ErrorKind::Template,
                  "no value for placeholder '{" + name + "}'");
    acc += it->second;
  });
  return out;
}

std::vector<std::string> template_placeholders(std::string_view text) {
  std::vector<std::string> names;
  std::string sink;
  scan(text, sink, [&](const std::string& name, std::string&) {
    names.push_back(name);
  });
  return names;
}

TemplateStore::TemplateStore(std::filesystem::path root)
    : root_(std::move(root)) {
  if (!std::filesystem::is_directory(root_))
    throw Error(ErrorKind::Config,
                "template root is not a directory: '" + root_.string() + "'");
}

const std::string& TemplateStore::get(const std::string& relative_path) const {
  auto it = cache_.find(relative_path);
  if (it != cache_.end()) return it->second;

  const auto full = root_ / relative_path;
  std::ifstream in(full, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::Config,
                "missing template '" + full.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return cache_.emplace(relative_path, buf.str()).first->second;
}

std::string TemplateStore::render(
    const std::string& relative_path,
    const std::map<std::string, std::string>& values) const {
  try {
    return render_template(get(relative_path), values);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Template) throw;
    throw Error(ErrorKind::Template,
                std::string(e.what()) + " in template '" + relative_path + "'");
  }
}

std::string TemplateStore::content_hash(const std::string& relative_path) const {
  const std::string& text = get(relative_path);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

}  // namespace simarena
