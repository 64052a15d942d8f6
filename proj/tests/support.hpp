// Shared helpers for the unit and acceptance suites: an independent
// combinatorial oracle for the pass@k estimator, a deterministic stub-world
// dataset builder, temp-dir RAII, and a CLI runner.
#pragma once

#include "qbench/dataset.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace testsupport {

// Exhaustive definition of pass@k: enumerate every k-subset of n samples and
// count the subsets containing at least one of the c correct samples. This is
// a deliberately different computation from the product-form estimator.
inline double pass_at_k_enumeration(int n, int c, int k) {
  // Mask with k chosen positions; iterate all combinations.
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  for (int i = 0; i < k; ++i) {
    pick[static_cast<std::size_t>(n - 1 - i)] = true;  // start: lexicographically first
  }
  unsigned long long total = 0;
  unsigned long long hits = 0;
  // std::next_permutation over bool mask enumerates each combination once.
  std::sort(pick.begin(), pick.end());
  do {
    ++total;
    bool hit = false;
    for (int i = 0; i < c && !hit; ++i) {
      hit = pick[static_cast<std::size_t>(i)];  // samples 0..c-1 are the correct ones
    }
    hits += hit ? 1 : 0;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& prefix = "qbench-test-")
      : path(qbench::util::make_temp_dir(prefix)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// A dataset graded entirely by the stub interpreter. Per problem and case:
//   source_invocation  solve(pNNN, j)
//   target_invocation  result:solve[pNNN-case-j]; show result
//   expected_output    pNNN-out-j
//   target_solution    one "stub:on solve[pNNN-case-j] => pNNN-out-j" line per case
// so the stored solution passes all canonical cases under the stub profile.
inline qbench::Dataset make_stub_world(int problem_count, int cases_per_problem,
                                       qbench::Split split = qbench::Split::Train) {
  using namespace qbench;
  Dataset dataset;
  for (int p = 1; p <= problem_count; ++p) {
    char id[16];
    std::snprintf(id, sizeof(id), "p%03d", p);
    Problem problem;
    problem.id = id;
    problem.title = std::string("Stub problem ") + id;
    problem.description =
        "Map the fixed inputs of problem " + std::string(id) + " to its expected outputs.";
    problem.difficulty = static_cast<Difficulty>((p - 1) % 3);
    problem.tags = (p % 3 == 0)   ? std::vector<std::string>{"math", "array"}
                   : (p % 3 == 1) ? std::vector<std::string>{"array"}
                                  : std::vector<std::string>{"string"};
    problem.source_solution =
        "def solve(x):\n    return table_" + std::string(id) + "[x]  # reference " + id;
    std::string target;
    for (int j = 1; j <= cases_per_problem; ++j) {
      TestCase tc;
      tc.index = j;
      tc.source_invocation = "solve(" + std::string(id) + ", " + std::to_string(j) + ")";
      tc.target_invocation = "result:solve[" + std::string(id) + "-case-" + std::to_string(j) +
                             "]; show result";
      tc.expected_output = std::string(id) + "-out-" + std::to_string(j);
      target += "stub:on solve[" + std::string(id) + "-case-" + std::to_string(j) + "] => " +
                tc.expected_output + "\n";
      problem.test_cases.push_back(std::move(tc));
    }
    problem.target_solution = target;
    problem.split = split;
    dataset.problems.push_back(std::move(problem));
  }
  return dataset;
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

// Runs the qbench binary (path via QBENCH_BIN) with pre-quoted arguments.
inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string command = QBENCH_BIN;
  for (const auto& arg : args) {
    command += " '" + arg + "'";
  }
  command += " 2>&1";
  CliResult result;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) {
    result.output = "popen failed";
    return result;
  }
  char buffer[4096];
  std::size_t got = 0;
  while ((got = std::fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
    result.output.append(buffer, got);
  }
  const int status = ::pclose(pipe);
  if (status >= 0 && WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  }
  return result;
}

}  // namespace testsupport
