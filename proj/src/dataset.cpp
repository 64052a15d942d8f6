#include "qbench/dataset.hpp"

#include "qbench/errors.hpp"
#include "qbench/prompts.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

namespace qbench {

namespace {

using ojson = nlohmann::ordered_json;

const char* const kKnownFields[] = {"id",          "title",           "description",
                                    "difficulty",  "tags",            "source_solution",
                                    "target_solution", "test_cases",  "split"};

bool is_known_field(const std::string& key) {
  for (const char* field : kKnownFields) {
    if (key == field) {
      return true;
    }
  }
  return false;
}

[[noreturn]] void record_error(std::size_t line_no, const std::string& field,
                               const std::string& detail) {
  std::ostringstream msg;
  msg << "malformed record at line " << line_no << ", field '" << field << "': " << detail;
  throw DatasetError(msg.str());
}

std::string require_string(const ojson& record, const std::string& key, std::size_t line_no) {
  if (!record.contains(key)) {
    record_error(line_no, key, "missing");
  }
  if (!record.at(key).is_string()) {
    record_error(line_no, key, "expected a string");
  }
  return record.at(key).get<std::string>();
}

TestCase test_case_from_json(const ojson& node, std::size_t line_no, std::size_t ordinal) {
  if (!node.is_object()) {
    record_error(line_no, "test_cases", "case entries must be objects");
  }
  TestCase tc;
  if (!node.contains("index") || !node.at("index").is_number_integer()) {
    record_error(line_no, "test_cases.index", "missing or not an integer");
  }
  tc.index = node.at("index").get<int>();
  if (tc.index != static_cast<int>(ordinal)) {
    record_error(line_no, "test_cases.index",
                 "indices must be contiguous starting at 1 (expected " +
                     std::to_string(ordinal) + ", got " + std::to_string(tc.index) + ")");
  }
  if (!node.contains("source_invocation") || !node.at("source_invocation").is_string()) {
    record_error(line_no, "test_cases.source_invocation", "missing or not a string");
  }
  tc.source_invocation = node.at("source_invocation").get<std::string>();
  if (node.contains("target_invocation") && !node.at("target_invocation").is_null()) {
    if (!node.at("target_invocation").is_string()) {
      record_error(line_no, "test_cases.target_invocation", "expected a string");
    }
    tc.target_invocation = node.at("target_invocation").get<std::string>();
  }
  if (!node.contains("expected_output") || !node.at("expected_output").is_string()) {
    record_error(line_no, "test_cases.expected_output", "missing or not a string");
  }
  tc.expected_output = node.at("expected_output").get<std::string>();
  return tc;
}

ojson test_case_to_json(const TestCase& tc) {
  ojson node;
  node["index"] = tc.index;
  node["source_invocation"] = tc.source_invocation;
  if (tc.target_invocation) {
    node["target_invocation"] = *tc.target_invocation;
  }
  node["expected_output"] = tc.expected_output;
  return node;
}

ojson apply_field_map(const ojson& record, const FieldMap& field_map) {
  ojson mapped = ojson::object();
  for (const auto& item : record.items()) {
    auto it = field_map.find(item.key());
    mapped[it != field_map.end() ? it->second : item.key()] = item.value();
  }
  return mapped;
}

}  // namespace

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy:
      return "Easy";
    case Difficulty::Medium:
      return "Medium";
    case Difficulty::Hard:
      return "Hard";
  }
  return "Easy";
}

std::string to_string(Split s) {
  return s == Split::Train ? "train" : "test";
}

Difficulty difficulty_from_string(const std::string& s) {
  const std::string lower = util::to_lower(s);
  if (lower == "easy") return Difficulty::Easy;
  if (lower == "medium") return Difficulty::Medium;
  if (lower == "hard") return Difficulty::Hard;
  throw DatasetError("invalid difficulty: '" + s + "' (expected Easy, Medium, or Hard)");
}

Split split_from_string(const std::string& s) {
  const std::string lower = util::to_lower(s);
  if (lower == "train") return Split::Train;
  if (lower == "test") return Split::Test;
  throw DatasetError("invalid split: '" + s + "' (expected train or test)");
}

std::size_t Dataset::count_split(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(problems.begin(), problems.end(),
                    [s](const Problem& p) { return p.split == s; }));
}

const Problem* Dataset::find(const std::string& id) const {
  for (const auto& p : problems) {
    if (p.id == id) {
      return &p;
    }
  }
  return nullptr;
}

Problem problem_from_json(const ojson& record, std::size_t line_no, const FieldMap* field_map) {
  if (!record.is_object()) {
    record_error(line_no, "<record>", "expected a JSON object");
  }
  const ojson& src = field_map ? apply_field_map(record, *field_map) : record;
  const ojson& rec = field_map ? src : record;

  Problem p;
  p.id = require_string(rec, "id", line_no);
  if (p.id.empty()) {
    record_error(line_no, "id", "must be non-empty");
  }
  p.title = rec.contains("title") && rec.at("title").is_string()
                ? rec.at("title").get<std::string>()
                : "";
  p.description = require_string(rec, "description", line_no);
  try {
    p.difficulty = difficulty_from_string(require_string(rec, "difficulty", line_no));
  } catch (const DatasetError& e) {
    record_error(line_no, "difficulty", e.what());
  }
  if (rec.contains("tags")) {
    if (!rec.at("tags").is_array()) {
      record_error(line_no, "tags", "expected an array of strings");
    }
    for (const auto& tag : rec.at("tags")) {
      if (!tag.is_string()) {
        record_error(line_no, "tags", "expected an array of strings");
      }
      p.tags.push_back(tag.get<std::string>());
    }
  }
  p.source_solution = require_string(rec, "source_solution", line_no);
  if (rec.contains("target_solution") && !rec.at("target_solution").is_null()) {
    if (!rec.at("target_solution").is_string()) {
      record_error(line_no, "target_solution", "expected a string or null");
    }
    p.target_solution = rec.at("target_solution").get<std::string>();
  }
  if (!rec.contains("test_cases") || !rec.at("test_cases").is_array()) {
    record_error(line_no, "test_cases", "missing or not an array");
  }
  std::size_t ordinal = 1;
  for (const auto& node : rec.at("test_cases")) {
    p.test_cases.push_back(test_case_from_json(node, line_no, ordinal));
    ++ordinal;
  }
  try {
    p.split = split_from_string(require_string(rec, "split", line_no));
  } catch (const DatasetError& e) {
    record_error(line_no, "split", e.what());
  }
  for (const auto& item : rec.items()) {
    if (!is_known_field(item.key())) {
      p.extra[item.key()] = item.value();
    }
  }
  return p;
}

ojson problem_to_json(const Problem& problem) {
  ojson record;
  record["id"] = problem.id;
  record["title"] = problem.title;
  record["description"] = problem.description;
  record["difficulty"] = to_string(problem.difficulty);
  record["tags"] = problem.tags;
  record["source_solution"] = problem.source_solution;
  if (problem.target_solution) {
    record["target_solution"] = *problem.target_solution;
  } else {
    record["target_solution"] = nullptr;
  }
  ojson cases = ojson::array();
  for (const auto& tc : problem.test_cases) {
    cases.push_back(test_case_to_json(tc));
  }
  record["test_cases"] = std::move(cases);
  record["split"] = to_string(problem.split);
  for (const auto& item : problem.extra.items()) {
    record[item.key()] = item.value();
  }
  return record;
}

Dataset load_dataset(const std::filesystem::path& path, const FieldMap* field_map) {
  if (!std::filesystem::exists(path)) {
    throw DatasetError("dataset file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DatasetError("cannot open dataset file: " + path.string());
  }

  Dataset dataset;
  std::unordered_map<std::string, std::size_t> first_line_of_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) {
      continue;
    }
    ojson record;
    try {
      record = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      record_error(line_no, "<record>", std::string("invalid JSON: ") + e.what());
    }
    Problem problem = problem_from_json(record, line_no, field_map);
    auto [it, inserted] = first_line_of_id.emplace(problem.id, line_no);
    if (!inserted) {
      std::ostringstream msg;
      msg << "duplicate id '" << problem.id << "' at lines " << it->second << " and " << line_no;
      throw DatasetError(msg.str());
    }
    dataset.problems.push_back(std::move(problem));
  }

  if (dataset.problems.empty()) {
    std::cerr << "warning: dataset " << path.string() << " contains no problems\n";
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  for (const auto& problem : dataset.problems) {
    out += problem_to_json(problem).dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

Dataset filter_dataset(const Dataset& dataset, const DatasetFilter& filter) {
  Dataset result;
  for (const auto& p : dataset.problems) {
    if (filter.split && p.split != *filter.split) {
      continue;
    }
    if (filter.difficulty && p.difficulty != *filter.difficulty) {
      continue;
    }
    if (filter.tag &&
        std::find(p.tags.begin(), p.tags.end(), *filter.tag) == p.tags.end()) {
      continue;
    }
    result.problems.push_back(p);
  }
  return result;
}

std::string to_string(SftTask t) {
  switch (t) {
    case SftTask::DescToTarget:
      return "desc_to_target";
    case SftTask::SourceToTarget:
      return "source_to_target";
    case SftTask::TargetToSource:
      return "target_to_source";
    case SftTask::HarnessTranslation:
      return "harness_translation";
  }
  return "desc_to_target";
}

std::string to_string(SftVariant v) {
  return v == SftVariant::Solution ? "solution" : "harness";
}

std::string source_harness_snippet(const TestCase& tc) {
  if (tc.source_invocation.find("print(") != std::string::npos) {
    return tc.source_invocation;
  }
  return "print(" + tc.source_invocation + ")";
}

std::string target_harness_snippet(const TestCase& tc) {
  if (!tc.target_invocation) {
    throw DatasetError("test case " + std::to_string(tc.index) + " has no target invocation");
  }
  const std::string& inv = *tc.target_invocation;
  if (inv.find("show") != std::string::npos) {
    return inv;
  }
  std::string snippet = "result:" + inv;
  if (snippet.empty() || snippet.back() != ';') {
    snippet += ';';
  }
  snippet += "\nshow result;";
  return snippet;
}

namespace {

std::string joined_source_harness(const Problem& p) {
  std::vector<std::string> lines;
  lines.reserve(p.test_cases.size());
  for (const auto& tc : p.test_cases) {
    lines.push_back(source_harness_snippet(tc));
  }
  return util::join(lines, "\n");
}

std::string joined_target_harness(const Problem& p) {
  std::vector<std::string> lines;
  lines.reserve(p.test_cases.size());
  for (const auto& tc : p.test_cases) {
    lines.push_back(target_harness_snippet(tc));
  }
  return util::join(lines, "\n");
}

}  // namespace

std::vector<SftSample> expand_sft(const Problem& problem, const PromptLibrary& prompts) {
  if (!problem.target_solution) {
    throw DatasetError("problem not yet solved: " + problem.id);
  }
  if (problem.test_cases.empty()) {
    throw DatasetError("problem has no test cases: " + problem.id);
  }
  for (const auto& tc : problem.test_cases) {
    if (!tc.target_invocation) {
      throw DatasetError("problem " + problem.id + " test case " + std::to_string(tc.index) +
                         " has no target invocation");
    }
  }

  const std::string source_tests = joined_source_harness(problem);
  const std::string target_tests = joined_target_harness(problem);

  std::vector<SftSample> samples;
  samples.reserve(8);
  auto add = [&](SftTask task, SftVariant variant, const std::string& template_name,
                 const std::map<std::string, std::string>& bindings,
                 const std::string& completion) {
    SftSample s;
    s.problem_id = problem.id;
    s.task = task;
    s.variant = variant;
    s.prompt = render_prompt(prompts.get(template_name), bindings);
    s.completion = completion;
    samples.push_back(std::move(s));
  };

  add(SftTask::DescToTarget, SftVariant::Solution, "sft_desc_to_target",
      {{"desc", problem.description}}, *problem.target_solution);
  add(SftTask::DescToTarget, SftVariant::Harness, "sft_desc_to_target_harness",
      {{"desc", problem.description}}, target_tests);

  add(SftTask::SourceToTarget, SftVariant::Solution, "sft_source_to_target",
      {{"py_code", problem.source_solution}}, *problem.target_solution);
  add(SftTask::SourceToTarget, SftVariant::Harness, "sft_source_to_target_harness",
      {{"py_tests", source_tests}}, target_tests);

  add(SftTask::TargetToSource, SftVariant::Solution, "sft_target_to_source",
      {{"q_code", *problem.target_solution}}, problem.source_solution);
  add(SftTask::TargetToSource, SftVariant::Harness, "sft_target_to_source_harness",
      {{"q_tests", target_tests}}, source_tests);

  add(SftTask::HarnessTranslation, SftVariant::Solution, "sft_harness_to_target",
      {{"source_tests", source_tests}}, target_tests);
  add(SftTask::HarnessTranslation, SftVariant::Harness, "sft_harness_to_source",
      {{"target_tests", target_tests}}, source_tests);

  return samples;
}

ojson sft_sample_to_json(const SftSample& sample) {
  ojson record;
  record["problem_id"] = sample.problem_id;
  record["task"] = to_string(sample.task);
  record["variant"] = to_string(sample.variant);
  record["prompt"] = sample.prompt;
  record["completion"] = sample.completion;
  return record;
}

void write_sft_samples(const std::vector<SftSample>& samples,
                       const std::filesystem::path& path) {
  std::string out;
  for (const auto& sample : samples) {
    out += sft_sample_to_json(sample).dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

}  // namespace qbench
