#include "ba/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace ba {

using nlohmann::json;

namespace {

json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double real(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json iteration_json(const IterationReport& r) {
  return {{"iteration", r.iteration},
          {"cost_before", real(r.cost_before)},
          {"cost_after", real(r.cost_after)},
          {"lambda", r.lambda},
          {"linear_iterations", r.linear_iterations},
          {"linear_relative_residual", real(r.linear_relative_residual)},
          {"linear_converged", r.linear_converged},
          {"linear_failed", r.linear_failed},
          {"predicted_decrease", real(r.predicted_decrease)},
          {"step_norm_camera", real(r.step_norm_camera)},
          {"step_norm_point", real(r.step_norm_point)},
          {"accepted", r.accepted},
          {"wall_time_s", r.wall_time_s}};
}

IterationReport iteration_from(const json& j) {
  IterationReport r;
  r.iteration = j.at("iteration").get<int>();
  r.cost_before = real(j.at("cost_before"));
  r.cost_after = real(j.at("cost_after"));
  r.lambda = j.at("lambda").get<double>();
  r.linear_iterations = j.at("linear_iterations").get<int>();
  r.linear_relative_residual = real(j.at("linear_relative_residual"));
  r.linear_converged = j.at("linear_converged").get<bool>();
  r.linear_failed = j.at("linear_failed").get<bool>();
  r.predicted_decrease = real(j.at("predicted_decrease"));
  r.step_norm_camera = real(j.at("step_norm_camera"));
  r.step_norm_point = real(j.at("step_norm_point"));
  r.accepted = j.at("accepted").get<bool>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

json consensus_json(const DistributedIterationReport& r) {
  return {{"iteration", r.iteration},         {"rho", r.rho},
          {"cost", real(r.cost)},             {"gap", r.gap},
          {"inner_iterations", r.inner_iterations}, {"wall_time_s", r.wall_time_s}};
}

DistributedIterationReport consensus_from(const json& j) {
  DistributedIterationReport r;
  r.iteration = j.at("iteration").get<int>();
  r.rho = j.at("rho").get<double>();
  r.cost = real(j.at("cost"));
  r.gap = j.at("gap").get<double>();
  r.inner_iterations = j.at("inner_iterations").get<int>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

void strip(json& j) {
  if (j.is_object()) {
    j.erase("wall_time_s");
    for (auto& [key, value] : j.items()) strip(value);
  } else if (j.is_array()) {
    for (auto& value : j) strip(value);
  }
}

}  // namespace

RunReport make_report(const SolveSummary& summary) {
  RunReport r;
  r.initial_cost = summary.initial_cost;
  r.final_cost = summary.final_cost;
  r.termination = to_string(summary.termination);
  r.iterations = summary.iterations;
  for (const auto& it : summary.iterations) r.wall_time_s += it.wall_time_s;
  return r;
}

RunReport make_report(const DistributedSummary& summary, int partitions) {
  RunReport r;
  r.initial_cost = summary.initial_cost;
  r.final_cost = summary.final_cost;
  r.termination = summary.converged ? "converged" : "max_iterations";
  r.partitions = partitions;
  r.final_gap = summary.final_gap;
  r.consensus = summary.iterations;
  for (const auto& it : summary.iterations) r.wall_time_s += it.wall_time_s;
  return r;
}

std::string to_json(const RunReport& report) {
  json doc;
  doc["command"] = report.command;
  doc["config"] = report.config;
  doc["mode"] = report.mode;
  doc["linear_solver"] = report.linear_solver;
  doc["problem"] = {{"cameras", report.num_cameras},
                    {"points", report.num_points},
                    {"observations", report.num_observations}};
  doc["initial_cost"] = real(report.initial_cost);
  doc["final_cost"] = real(report.final_cost);
  doc["termination"] = report.termination;
  json its = json::array();
  for (const auto& it : report.iterations) its.push_back(iteration_json(it));
  doc["iterations"] = std::move(its);
  if (report.partitions > 0) {
    json cons = json::array();
    for (const auto& it : report.consensus) cons.push_back(consensus_json(it));
    doc["distributed"] = {{"partitions", report.partitions},
                          {"final_gap", report.final_gap},
                          {"iterations", std::move(cons)}};
  }
  doc["wall_time_s"] = report.wall_time_s;
  return doc.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  RunReport r;
  r.command = doc.at("command").get<std::string>();
  r.config = doc.at("config").get<std::map<std::string, std::string>>();
  r.mode = doc.at("mode").get<std::string>();
  r.linear_solver = doc.at("linear_solver").get<std::string>();
  r.num_cameras = doc.at("problem").at("cameras").get<int>();
  r.num_points = doc.at("problem").at("points").get<int>();
  r.num_observations = doc.at("problem").at("observations").get<int>();
  r.initial_cost = real(doc.at("initial_cost"));
  r.final_cost = real(doc.at("final_cost"));
  r.termination = doc.at("termination").get<std::string>();
  for (const auto& it : doc.at("iterations")) r.iterations.push_back(iteration_from(it));
  if (doc.contains("distributed")) {
    const json& d = doc.at("distributed");
    r.partitions = d.at("partitions").get<int>();
    r.final_gap = d.at("final_gap").get<double>();
    for (const auto& it : d.at("iterations")) r.consensus.push_back(consensus_from(it));
  }
  r.wall_time_s = doc.at("wall_time_s").get<double>();
  return r;
}

std::string strip_wall_times(const std::string& json_text) {
  json doc = json::parse(json_text);
  strip(doc);
  return doc.dump(2);
}

void write_csv(std::ostream& out, const RunReport& report) {
  char buf[256];
  out << "iteration,cost,lambda,linear_iters,step_norm_c,step_norm_p,accepted\n";
  if (report.partitions > 0) {
    for (const auto& it : report.consensus) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,0,0,1\n", it.iteration, it.cost, it.rho,
                    it.inner_iterations);
      out << buf;
    }
    return;
  }
  for (const auto& it : report.iterations) {
    const double cost = it.accepted ? it.cost_after : it.cost_before;
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%.17g,%.17g,%d\n", it.iteration, cost,
                  it.lambda, it.linear_iterations, it.step_norm_camera, it.step_norm_point,
                  it.accepted ? 1 : 0);
    out << buf;
  }
}

}  // namespace ba
