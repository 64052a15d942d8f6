#include "qbench/metrics.hpp"

#include "qbench/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace qbench {

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::map<int, double> mean_pass_at_k(const std::vector<const ProblemOutcome*>& group,
                                     const std::vector<int>& ks) {
  std::map<int, double> means;
  for (int k : ks) {
    double sum = 0.0;
    for (const ProblemOutcome* o : group) {
      sum += pass_at_k(o->n, o->c, k);
    }
    means[k] = sum / static_cast<double>(group.size());
  }
  return means;
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1) {
    throw Error("pass@k requires n >= 1 (got n=" + std::to_string(n) + ")");
  }
  if (c < 0 || c > n) {
    throw Error("pass@k requires 0 <= c <= n (got c=" + std::to_string(c) +
                ", n=" + std::to_string(n) + ")");
  }
  if (k < 1 || k > n) {
    throw Error("pass@k requires 1 <= k <= n (got k=" + std::to_string(k) +
                ", n=" + std::to_string(n) + ")");
  }
  if (n - c < k) {
    return 1.0;
  }
  double product = 1.0;
  for (int i = n - c + 1; i <= n; ++i) {
    product *= 1.0 - static_cast<double>(k) / i;
  }
  return 1.0 - product;
}

EvalReport aggregate(const std::vector<ProblemOutcome>& outcomes, const std::vector<int>& ks) {
  if (outcomes.empty()) {
    throw Error("empty report: no problem outcomes to aggregate");
  }
  for (const auto& o : outcomes) {
    if (o.n < 1 || o.c < 0 || o.c > o.n) {
      throw Error("invalid outcome for problem '" + o.problem_id + "': n=" +
                  std::to_string(o.n) + ", c=" + std::to_string(o.c));
    }
    for (int k : ks) {
      if (k < 1 || k > o.n) {
        throw Error("requested k=" + std::to_string(k) + " exceeds n=" + std::to_string(o.n) +
                    " for problem '" + o.problem_id + "'");
      }
    }
  }

  EvalReport report;
  report.outcomes = outcomes;
  report.ks = ks;
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());

  std::vector<const ProblemOutcome*> all;
  all.reserve(outcomes.size());
  for (const auto& o : report.outcomes) {
    all.push_back(&o);
  }
  report.pass_at_k_values = mean_pass_at_k(all, report.ks);

  std::size_t solved = 0;
  for (const auto& o : outcomes) {
    if (o.c >= 1) {
      ++solved;
    }
  }
  report.overall_pass = static_cast<double>(solved) / outcomes.size();
  return report;
}

std::vector<BreakdownRow> breakdown(const EvalReport& report, BreakdownAxis axis) {
  if (report.outcomes.empty()) {
    throw Error("empty report: nothing to break down");
  }
  std::map<std::string, std::vector<const ProblemOutcome*>> groups;
  for (const auto& o : report.outcomes) {
    if (axis == BreakdownAxis::Difficulty) {
      groups[to_string(o.difficulty)].push_back(&o);
    } else {
      for (const auto& tag : o.tags) {
        groups[tag].push_back(&o);
      }
    }
  }

  std::vector<BreakdownRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    BreakdownRow row;
    row.key = key;
    row.problem_count = static_cast<int>(members.size());
    row.pass_at_k_values = mean_pass_at_k(members, report.ks);
    for (const ProblemOutcome* o : members) {
      if (o->c == 0) {
        ++row.miss_count;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  nlohmann::ordered_json meta;
  meta["task"] = report.meta.task;
  meta["protocol"] = report.meta.protocol;
  meta["model"] = report.meta.model;
  meta["generation_params"] = report.meta.generation_params;
  meta["total_completions"] = report.meta.total_completions;
  meta["total_case_executions"] = report.meta.total_case_executions;
  meta["infrastructure_failures"] = report.meta.infrastructure_failures;
  for (const auto& item : report.meta.extra.items()) {
    meta[item.key()] = item.value();
  }
  doc["run"] = std::move(meta);

  doc["problem_count"] = report.outcomes.size();
  nlohmann::ordered_json passes;
  for (const auto& [k, v] : report.pass_at_k_values) {
    passes["pass@" + std::to_string(k)] = v;
  }
  doc["pass_at_k"] = std::move(passes);
  doc["overall_pass"] = report.overall_pass;

  for (auto axis : {BreakdownAxis::Difficulty, BreakdownAxis::Tag}) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : breakdown(report, axis)) {
      nlohmann::ordered_json r;
      r["group"] = row.key;
      r["problems"] = row.problem_count;
      nlohmann::ordered_json pk;
      for (const auto& [k, v] : row.pass_at_k_values) {
        pk["pass@" + std::to_string(k)] = v;
      }
      r["pass_at_k"] = std::move(pk);
      r["misses"] = row.miss_count;
      rows.push_back(std::move(r));
    }
    doc[axis == BreakdownAxis::Difficulty ? "by_difficulty" : "by_tag"] = std::move(rows);
  }

  nlohmann::ordered_json outcomes = nlohmann::ordered_json::array();
  for (const auto& o : report.outcomes) {
    nlohmann::ordered_json node;
    node["problem_id"] = o.problem_id;
    node["n"] = o.n;
    node["c"] = o.c;
    node["difficulty"] = to_string(o.difficulty);
    node["tags"] = o.tags;
    outcomes.push_back(std::move(node));
  }
  doc["outcomes"] = std::move(outcomes);
  return doc;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "problem_id,n,c";
  for (int k : report.ks) {
    out << ",pass@" << k;
  }
  out << "\n";
  for (const auto& o : report.outcomes) {
    out << o.problem_id << "," << o.n << "," << o.c;
    for (int k : report.ks) {
      out << "," << format_number(pass_at_k(o.n, o.c, k));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace qbench
