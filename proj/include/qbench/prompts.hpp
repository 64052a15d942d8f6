#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace qbench {

// Template text with {name} placeholders. Every placeholder appearing in the
// text is required at render time.
struct PromptTemplate {
  std::string name;
  std::string text;
  std::set<std::string> placeholders;
};

PromptTemplate make_prompt_template(std::string name, std::string text);

// Verbatim substitution, single pass, no other transformation. Unbound
// placeholder -> ConfigError naming it.
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& bindings);

class PromptLibrary {
 public:
  // Compiled-in copies of the assets/prompts directory.
  static PromptLibrary builtin();
  // Builtin set with *.txt files from dir layered on top (file stem = name).
  static PromptLibrary with_overrides(const std::filesystem::path& dir);

  bool has(const std::string& name) const;
  const PromptTemplate& get(const std::string& name) const;
  void put(PromptTemplate tmpl);

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace qbench
