#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ba/distributed.hpp"
#include "ba/optimizer.hpp"

namespace ba {

struct RunReport {
  std::string command;
  std::map<std::string, std::string> config;  // flag echo
  std::string mode;
  std::string linear_solver;
  int num_cameras = 0;
  int num_points = 0;
  int num_observations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::string termination;
  std::vector<IterationReport> iterations;
  // Distributed runs only.
  int partitions = 0;
  double final_gap = 0.0;
  std::vector<DistributedIterationReport> consensus;
  double wall_time_s = 0.0;
};

RunReport make_report(const SolveSummary& summary);
RunReport make_report(const DistributedSummary& summary, int partitions);

// JSON; non-finite costs are written as null and read back as +inf.
std::string to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

// Drops every "wall_time_s" member, for comparing runs.
std::string strip_wall_times(const std::string& json_text);

// Columns: iteration,cost,lambda,linear_iters,step_norm_c,step_norm_p,accepted.
// Conventional runs: one row per attempted step, cost after the attempt.
// Distributed runs: one row per consensus iteration; lambda holds rho and
// linear_iters the summed inner LM attempts.
void write_csv(std::ostream& out, const RunReport& report);

}  // namespace ba
