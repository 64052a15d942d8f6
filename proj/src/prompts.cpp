#include "qbench/prompts.hpp"

#include "qbench/errors.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <vector>

namespace qbench {

namespace detail {
const std::map<std::string, std::string>& builtin_prompt_texts();
}

namespace {

bool is_placeholder_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Returns the placeholder name if text[pos] opens one, advancing end past '}'.
std::optional<std::string> parse_placeholder(const std::string& text, std::size_t pos,
                                             std::size_t& end) {
  if (pos + 1 >= text.size() || !is_placeholder_start(text[pos + 1])) {
    return std::nullopt;
  }
  std::size_t i = pos + 1;
  while (i < text.size() && is_placeholder_char(text[i])) {
    ++i;
  }
  if (i >= text.size() || text[i] != '}') {
    return std::nullopt;
  }
  end = i + 1;
  return text.substr(pos + 1, i - pos - 1);
}

}  // namespace

PromptTemplate make_prompt_template(std::string name, std::string text) {
  PromptTemplate tmpl;
  tmpl.name = std::move(name);
  tmpl.text = std::move(text);
  for (std::size_t i = 0; i < tmpl.text.size(); ++i) {
    if (tmpl.text[i] != '{') {
      continue;
    }
    std::size_t end = 0;
    if (auto placeholder = parse_placeholder(tmpl.text, i, end)) {
      tmpl.placeholders.insert(*placeholder);
      i = end - 1;
    }
  }
  return tmpl;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(tmpl.text.size());
  for (std::size_t i = 0; i < tmpl.text.size(); ++i) {
    if (tmpl.text[i] == '{') {
      std::size_t end = 0;
      if (auto placeholder = parse_placeholder(tmpl.text, i, end)) {
        auto it = bindings.find(*placeholder);
        if (it == bindings.end()) {
          throw ConfigError("unbound placeholder " + *placeholder + " in template " + tmpl.name);
        }
        out += it->second;
        i = end - 1;
        continue;
      }
    }
    out.push_back(tmpl.text[i]);
  }
  return out;
}

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  for (const auto& [name, text] : detail::builtin_prompt_texts()) {
    lib.put(make_prompt_template(name, text));
  }
  return lib;
}

PromptLibrary PromptLibrary::with_overrides(const std::filesystem::path& dir) {
  PromptLibrary lib = builtin();
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("template directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    lib.put(make_prompt_template(file.stem().string(), util::read_file(file)));
  }
  return lib;
}

bool PromptLibrary::has(const std::string& name) const {
  return templates_.count(name) > 0;
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw ConfigError("unknown prompt template: " + name);
  }
  return it->second;
}

void PromptLibrary::put(PromptTemplate tmpl) {
  templates_[tmpl.name] = std::move(tmpl);
}

}  // namespace qbench
