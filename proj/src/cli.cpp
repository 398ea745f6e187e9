#include "ba/cli.hpp"

#include <Eigen/Geometry>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "ba/distributed.hpp"
#include "ba/io.hpp"
#include "ba/optimizer.hpp"
#include "ba/report.hpp"

namespace ba {
namespace {

struct Flags {
  std::string input;
  std::string format;
  std::string bal_convention = "positive-depth";
  std::string mode = "lm";
  std::string linear_solver = "explicit-direct";
  double eta = 0.1;
  double omega = 1.0;
  double lambda0 = 1e-4;
  std::string loss = "trivial";
  int max_iters = -1;
  std::uint64_t seed = 1;
  std::string report;
  std::string csv;
  std::string output;
  // Synthetic problem when no input is given.
  int cameras = 10;
  int points = 100;
  double noise = 1.0;
  bool distortion = false;
  std::string layout = "bal9";
  bool no_perturb = false;
  // Distributed.
  int partitions = 2;
  std::string rho = "auto";
  int inner_iters = 5;
  // check-jacobians
  int samples = 100;
};

std::string loss_check(const std::string& s) {
  if (s == "trivial") return {};
  if (s.rfind("huber:", 0) == 0) {
    char* end = nullptr;
    const double d = std::strtod(s.c_str() + 6, &end);
    if (*end == '\0' && end != s.c_str() + 6 && d > 0.0) return {};
  }
  return "loss must be 'trivial' or 'huber:<delta>' with delta > 0";
}

LossFunction parse_loss(const std::string& s) {
  if (s == "trivial") return LossFunction::trivial();
  return LossFunction::huber(std::strtod(s.c_str() + 6, nullptr));
}

std::string rho_check(const std::string& s) {
  if (s == "auto" || s == "default") return {};
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (*end == '\0' && end != s.c_str() && v > 0.0) return {};
  return "rho must be 'auto', 'default' or a positive number";
}

CameraLayout parse_layout(const std::string& s) {
  return s == "full15" ? CameraLayout::Full15 : CameraLayout::Bal9;
}

std::string format_of(const Flags& f, const std::string& path) {
  if (!f.format.empty()) return f.format;
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0 ? "native" : "bal";
}

BalConvention convention_of(const Flags& f) {
  return f.bal_convention == "negative-z" ? BalConvention::NegativeZ : BalConvention::PositiveDepth;
}

SyntheticSpec synthetic_spec(const Flags& f) {
  SyntheticSpec spec;
  spec.num_cameras = f.cameras;
  spec.num_points = f.points;
  spec.noise_sigma = f.noise;
  spec.distortion = f.distortion;
  spec.seed = f.seed;
  spec.layout = parse_layout(f.layout);
  return spec;
}

Problem load_problem(const Flags& f) {
  if (f.input.empty()) {
    Problem p = generate_synthetic(synthetic_spec(f)).problem;
    if (!f.no_perturb) perturb(p, Perturbation{}, derive_seed(f.seed, 100));
    return p;
  }
  if (format_of(f, f.input) == "native") return read_native_file(f.input);
  return read_bal_file(f.input, convention_of(f));
}

void save_problem(const Flags& f, const Problem& p) {
  if (f.output.empty()) return;
  std::ofstream out(f.output);
  if (!out) throw Error("cannot write " + f.output);
  if (format_of(f, f.output) == "native") {
    write_native(out, p);
  } else {
    write_bal(out, p, convention_of(f));
  }
}

SolverOptions solver_options(const Flags& f) {
  SolverOptions o;
  o.mode = f.mode == "gn" ? OptimizerMode::GaussNewton : OptimizerMode::LevenbergMarquardt;
  o.linear_solver = *parse_linear_solver(f.linear_solver);
  o.cg.eta = f.eta;
  o.omega = f.omega;
  o.lambda0 = f.lambda0;
  o.loss = parse_loss(f.loss);
  return o;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::string> echo(const Flags& f) {
  std::map<std::string, std::string> c;
  c["input"] = f.input;
  c["mode"] = f.mode;
  c["linear_solver"] = f.linear_solver;
  c["eta"] = num(f.eta);
  c["omega"] = num(f.omega);
  c["lambda0"] = num(f.lambda0);
  c["loss"] = f.loss;
  c["seed"] = std::to_string(f.seed);
  if (f.max_iters >= 0) c["max_iters"] = std::to_string(f.max_iters);
  if (f.input.empty()) {
    c["cameras"] = std::to_string(f.cameras);
    c["points"] = std::to_string(f.points);
    c["noise"] = num(f.noise);
    c["distortion"] = f.distortion ? "true" : "false";
    c["layout"] = f.layout;
  }
  return c;
}

void fill_header(RunReport& r, const std::string& command, const Flags& f, const Problem& p) {
  r.command = command;
  r.config = echo(f);
  r.mode = f.mode;
  r.linear_solver = f.linear_solver;
  r.num_cameras = p.num_cameras();
  r.num_points = p.num_points();
  r.num_observations = p.num_observations();
}

void emit(const Flags& f, const RunReport& r) {
  if (!f.report.empty()) {
    std::ofstream out(f.report);
    if (!out) throw Error("cannot write " + f.report);
    out << to_json(r);
  }
  if (!f.csv.empty()) {
    std::ofstream out(f.csv);
    if (!out) throw Error("cannot write " + f.csv);
    write_csv(out, r);
  }
}

Problem with_solution(Problem p, const CameraVector& cameras, const PointVector& points) {
  p.set_cameras(cameras);
  p.set_points(points);
  return p;
}

int cmd_solve(const Flags& f, std::ostream& out) {
  const Problem p = load_problem(f);
  SolverOptions o = solver_options(f);
  if (f.max_iters >= 0) o.max_outer_iterations = f.max_iters;
  const SolveSummary s = solve(p, o);
  RunReport r = make_report(s);
  fill_header(r, "solve", f, p);
  emit(f, r);
  save_problem(f, with_solution(p, s.cameras, s.points));
  out << "initial cost " << num(s.initial_cost) << "\n"
      << "final cost " << num(s.final_cost) << "\n"
      << "iterations " << s.outer_iterations << "\n"
      << "termination " << to_string(s.termination) << "\n";
  return 0;
}

int cmd_solve_distributed(const Flags& f, std::ostream& out) {
  const Problem p = load_problem(f);
  const std::vector<Partition> parts = partition_cameras(p, f.partitions);
  RhoSchedule rho;
  if (f.rho == "auto") {
    rho = auto_rho(p, parts);
  } else if (f.rho == "default") {
    rho.rho0 = default_rho(p);
  } else {
    rho.rho0 = std::strtod(f.rho.c_str(), nullptr);
  }
  DistributedOptions d;
  d.inner = solver_options(f);
  d.inner_iterations = f.inner_iters;
  if (f.max_iters >= 0) d.max_iterations = f.max_iters;
  const DistributedSummary s = solve_distributed(p, f.partitions, rho, d);
  RunReport r = make_report(s, f.partitions);
  fill_header(r, "solve-distributed", f, p);
  r.config["partitions"] = std::to_string(f.partitions);
  r.config["rho"] = f.rho;
  r.config["inner_iters"] = std::to_string(f.inner_iters);
  emit(f, r);
  save_problem(f, with_solution(p, s.cameras, s.points));
  out << "initial cost " << num(s.initial_cost) << "\n"
      << "final cost " << num(s.final_cost) << "\n"
      << "consensus gap " << num(s.final_gap) << "\n"
      << "iterations " << s.iterations.size() << "\n"
      << "termination " << r.termination << "\n";
  return 0;
}

int cmd_generate(const Flags& f, std::ostream& out) {
  if (f.output.empty()) throw Error("generate needs --output");
  Problem p = load_problem(f);
  save_problem(f, p);
  out << "cameras " << p.num_cameras() << "\npoints " << p.num_points() << "\nobservations "
      << p.num_observations() << "\n";
  return 0;
}

int cmd_check_jacobians(const Flags& f, std::ostream& out) {
  const double bal = check_jacobians(f.seed, f.samples, CameraLayout::Bal9);
  const double full = check_jacobians(derive_seed(f.seed, 1), f.samples, CameraLayout::Full15);
  const double worst = std::max(bal, full);
  out << "max relative error bal9 " << num(bal) << "\n"
      << "max relative error full15 " << num(full) << "\n"
      << "max relative error " << num(worst) << "\n";
  return worst <= 1e-5 ? 0 : 1;
}

int cmd_bench(const Flags& f, std::ostream& out) {
  using Clock = std::chrono::steady_clock;
  const Problem p = load_problem(f);
  std::ostringstream table;
  table << "linear_solver,final_cost,outer_iterations,attempts,linear_iters,termination,time_s\n";
  char buf[256];
  for (LinearSolverType t : kAllLinearSolvers) {
    Flags g = f;
    g.linear_solver = to_string(t);
    SolverOptions o = solver_options(g);
    if (f.max_iters >= 0) o.max_outer_iterations = f.max_iters;
    const auto start = Clock::now();
    const SolveSummary s = solve(p, o);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    int linear = 0;
    for (const auto& it : s.iterations) linear += it.linear_iterations;
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%zu,%d,%s,%.3f\n", g.linear_solver.c_str(),
                  s.final_cost, s.outer_iterations, s.iterations.size(), linear,
                  to_string(s.termination).c_str(), secs);
    table << buf;
  }
  out << table.str();
  if (!f.csv.empty()) {
    std::ofstream csv(f.csv);
    if (!csv) throw Error("cannot write " + f.csv);
    csv << table.str();
  }
  return 0;
}

void add_problem_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--input", f.input, "problem file (synthetic problem when omitted)");
  sub->add_option("--format", f.format, "input/output format")
      ->check(CLI::IsMember({"bal", "native"}));
  sub->add_option("--bal-convention", f.bal_convention, "BAL camera sign convention")
      ->check(CLI::IsMember({"positive-depth", "negative-z"}));
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--cameras", f.cameras, "synthetic cameras")->check(CLI::PositiveNumber);
  sub->add_option("--points", f.points, "synthetic points")->check(CLI::PositiveNumber);
  sub->add_option("--noise", f.noise, "synthetic pixel noise sigma")->check(CLI::NonNegativeNumber);
  sub->add_flag("--distortion", f.distortion, "synthetic cameras with distortion");
  sub->add_option("--layout", f.layout, "synthetic camera layout")
      ->check(CLI::IsMember({"bal9", "full15"}));
  sub->add_flag("--no-perturb", f.no_perturb, "keep synthetic parameters at ground truth");
}

void add_solver_flags(CLI::App* sub, Flags& f) {
  std::vector<std::string> names;
  for (LinearSolverType t : kAllLinearSolvers) names.push_back(to_string(t));
  sub->add_option("--mode", f.mode, "gn or lm")->check(CLI::IsMember({"gn", "lm"}));
  sub->add_option("--linear-solver", f.linear_solver, "linear solver")
      ->check(CLI::IsMember(names));
  sub->add_option("--eta", f.eta, "CG forcing term")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--omega", f.omega, "SSOR relaxation")->check(CLI::Range(0.0, 1.999999));
  sub->add_option("--lambda0", f.lambda0, "initial damping")->check(CLI::PositiveNumber);
  sub->add_option("--loss", f.loss, "trivial or huber:<delta>")
      ->check(CLI::Validator(loss_check, "LOSS"));
  sub->add_option("--max-iters", f.max_iters, "outer iteration limit")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--report", f.report, "JSON run report");
  sub->add_option("--csv", f.csv, "cost per iteration CSV");
  sub->add_option("--output", f.output, "write the refined problem");
}

}  // namespace

double check_jacobians(std::uint64_t seed, int samples, CameraLayout layout) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    CameraParams<double> cam;
    cam.layout = layout;
    Eigen::Vector3d axis(uni(-1, 1), uni(-1, 1), uni(-1, 1));
    if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitX();
    cam.pose.rotation = axis.normalized() * uni(0.0, 3.0);
    cam.pose.translation = {uni(-1, 1), uni(-1, 1), uni(-1, 1)};
    cam.intrinsics.fx = uni(300, 800);
    cam.intrinsics.fy = layout == CameraLayout::Full15 ? uni(300, 800) : cam.intrinsics.fx;
    if (layout == CameraLayout::Full15) {
      cam.intrinsics.cx = uni(-50, 50);
      cam.intrinsics.cy = uni(-50, 50);
      cam.distortion = {uni(-0.1, 0.1), uni(-0.1, 0.1), uni(-0.05, 0.05), uni(-0.1, 0.1),
                        uni(-0.1, 0.1)};
    } else {
      cam.distortion.k1 = uni(-0.1, 0.1);
      cam.distortion.k2 = uni(-0.1, 0.1);
    }
    // Point in front of the camera, inside the unit normalized disc.
    const double z = uni(1.0, 6.0);
    const Eigen::Vector3d xc(uni(-0.7, 0.7) * z, uni(-0.7, 0.7) * z, z);
    const Eigen::Matrix3d r = rotation_matrix<double>(cam.pose.rotation);
    const Eigen::Vector3d xw = r.transpose() * (xc - cam.pose.translation);

    const ProjectionJacobian jac = reproject_with_jacobian(cam, xw);
    const Eigen::VectorXd c0 = cam.to_vector();
    Eigen::MatrixXd fd_cam(2, c0.size());
    for (int k = 0; k < c0.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(c0(k)));
      Eigen::VectorXd cp = c0, cm = c0;
      cp(k) += h;
      cm(k) -= h;
      fd_cam.col(k) = (reproject(cam.with_vector(cp), xw) - reproject(cam.with_vector(cm), xw)) / (2 * h);
    }
    Eigen::Matrix<double, 2, 3> fd_pt;
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(xw(k)));
      Eigen::Vector3d xp = xw, xm = xw;
      xp(k) += h;
      xm(k) -= h;
      fd_pt.col(k) = (reproject(cam, xp) - reproject(cam, xm)) / (2 * h);
    }
    worst = std::max(worst, (jac.camera - fd_cam).norm() / std::max(fd_cam.norm(), 1e-12));
    worst = std::max(worst, (jac.point - fd_pt).norm() / std::max(fd_pt.norm(), 1e-12));
  }
  return worst;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bundle adjustment solver", "ba"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* solve_cmd = app.add_subcommand("solve", "conventional bundle adjustment");
  add_problem_flags(solve_cmd, f);
  add_solver_flags(solve_cmd, f);

  CLI::App* dist_cmd = app.add_subcommand("solve-distributed", "consensus bundle adjustment");
  add_problem_flags(dist_cmd, f);
  add_solver_flags(dist_cmd, f);
  dist_cmd->add_option("--partitions", f.partitions, "camera partitions")
      ->check(CLI::PositiveNumber);
  dist_cmd->add_option("--rho", f.rho, "auto, default or a constant")
      ->check(CLI::Validator(rho_check, "RHO"));
  dist_cmd->add_option("--inner-iters", f.inner_iters, "LM iterations per partition solve")
      ->check(CLI::PositiveNumber);

  CLI::App* gen_cmd = app.add_subcommand("generate", "write a synthetic problem");
  add_problem_flags(gen_cmd, f);
  gen_cmd->add_option("--output", f.output, "output file")->required();

  CLI::App* jac_cmd = app.add_subcommand("check-jacobians", "compare Jacobians with differences");
  jac_cmd->add_option("--seed", f.seed, "random seed");
  jac_cmd->add_option("--samples", f.samples, "configurations per layout")
      ->check(CLI::PositiveNumber);

  CLI::App* bench_cmd = app.add_subcommand("bench-solvers", "run every linear solver");
  add_problem_flags(bench_cmd, f);
  add_solver_flags(bench_cmd, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  try {
    if (*solve_cmd) return cmd_solve(f, out);
    if (*dist_cmd) return cmd_solve_distributed(f, out);
    if (*gen_cmd) return cmd_generate(f, out);
    if (*jac_cmd) return cmd_check_jacobians(f, out);
    if (*bench_cmd) return cmd_bench(f, out);
  } catch (const InvalidPartitionCount& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ba
