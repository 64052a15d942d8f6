#pragma once

#include "qbench/dataset.hpp"

#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

namespace qbench {

// One evaluated problem: n samples drawn, c of them correct.
struct ProblemOutcome {
  std::string problem_id;
  int n = 0;
  int c = 0;
  Difficulty difficulty = Difficulty::Easy;
  std::vector<std::string> tags;
};

// Descriptive run fields carried inside the report. Timing lives in a separate
// sidecar so reports stay byte-identical across runs and worker counts.
struct RunMetadata {
  std::string task;
  std::string protocol;
  std::string model;
  nlohmann::ordered_json generation_params = nlohmann::ordered_json::object();
  long long total_completions = 0;
  long long total_case_executions = 0;
  long long infrastructure_failures = 0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct EvalReport {
  std::vector<ProblemOutcome> outcomes;
  std::vector<int> ks;
  std::map<int, double> pass_at_k_values;
  double overall_pass = 0.0;  // fraction of problems with c >= 1
  RunMetadata meta;
};

// Unbiased estimator 1 - C(n-c,k)/C(n,k) in the numerically stable product
// form: 1 when n-c < k, else 1 - prod_{i=n-c+1..n} (1 - k/i).
// k outside [1, n] is an error, never clamped.
double pass_at_k(int n, int c, int k);

// Mean of per-problem pass@k for each requested k, plus overall pass.
// Errors on an empty outcome list and on any k exceeding a problem's n.
EvalReport aggregate(const std::vector<ProblemOutcome>& outcomes, const std::vector<int>& ks);

enum class BreakdownAxis { Difficulty, Tag };

struct BreakdownRow {
  std::string key;
  int problem_count = 0;
  std::map<int, double> pass_at_k_values;
  int miss_count = 0;  // problems in the group with c = 0
};

// Partitions problems by difficulty or tag (multi-tag problems appear in every
// tag group) and aggregates within each group. Rows sorted by key.
std::vector<BreakdownRow> breakdown(const EvalReport& report, BreakdownAxis axis);

// JSON document for one run: outcomes, per-k means, overall pass, breakdowns,
// metadata. schema_version marks the layout.
nlohmann::ordered_json report_to_json(const EvalReport& report);

// Flat per-problem table: problem_id,n,c plus one pass@k column per requested k.
std::string report_to_csv(const EvalReport& report);

}  // namespace qbench
