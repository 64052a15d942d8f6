#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qbench {

class PromptLibrary;

enum class Difficulty { Easy, Medium, Hard };
enum class Split { Train, Test };

std::string to_string(Difficulty d);
std::string to_string(Split s);
Difficulty difficulty_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct TestCase {
  int index = 0;  // 1-based, contiguous
  std::string source_invocation;
  std::optional<std::string> target_invocation;
  std::string expected_output;  // derived from the source reference solution
};

struct Problem {
  std::string id;
  std::string title;
  std::string description;
  Difficulty difficulty = Difficulty::Easy;
  std::vector<std::string> tags;
  std::string source_solution;
  std::optional<std::string> target_solution;
  std::vector<TestCase> test_cases;
  Split split = Split::Train;
  // Unknown fields from the input record, preserved on round-trip.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct Dataset {
  std::vector<Problem> problems;

  std::size_t size() const { return problems.size(); }
  std::size_t count_split(Split s) const;
  const Problem* find(const std::string& id) const;
};

// Optional mapping layer for externally produced files: keys are the field
// names found in the file, values are the canonical names used here.
using FieldMap = std::map<std::string, std::string>;

Problem problem_from_json(const nlohmann::ordered_json& record, std::size_t line_no,
                          const FieldMap* field_map = nullptr);
nlohmann::ordered_json problem_to_json(const Problem& problem);

// One problem object per line. Malformed records and duplicate ids raise
// DatasetError naming the offending line(s).
Dataset load_dataset(const std::filesystem::path& path, const FieldMap* field_map = nullptr);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct DatasetFilter {
  std::optional<Split> split;
  std::optional<Difficulty> difficulty;
  std::optional<std::string> tag;
};

// Subset preserving order; the input is unchanged.
Dataset filter_dataset(const Dataset& dataset, const DatasetFilter& filter);

enum class SftTask { DescToTarget, SourceToTarget, TargetToSource, HarnessTranslation };
enum class SftVariant { Solution, Harness };

std::string to_string(SftTask t);
std::string to_string(SftVariant v);

struct SftSample {
  std::string problem_id;
  SftTask task = SftTask::DescToTarget;
  SftVariant variant = SftVariant::Solution;
  std::string prompt;
  std::string completion;
};

// Exactly 8 samples: 4 tasks x 2 variants. Requires source_solution,
// target_solution, and test cases with target invocations.
std::vector<SftSample> expand_sft(const Problem& problem, const PromptLibrary& prompts);

nlohmann::ordered_json sft_sample_to_json(const SftSample& sample);
void write_sft_samples(const std::vector<SftSample>& samples, const std::filesystem::path& path);

// Executable harness snippets for one test case. Bare invocations are wrapped
// in the language's assign-and-show / print idiom; snippets that already print
// are used as stored.
std::string source_harness_snippet(const TestCase& test_case);
std::string target_harness_snippet(const TestCase& test_case);

}  // namespace qbench
