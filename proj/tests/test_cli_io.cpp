#include <Eigen/Geometry>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ba/cli.hpp"
#include "ba/io.hpp"
#include "ba/report.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ba;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ba_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ba");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string bal_text(const Problem& p, BalConvention c = BalConvention::PositiveDepth) {
  std::ostringstream out;
  write_bal(out, p, c);
  return out.str();
}

}  // namespace

TEST_CASE("minimal BAL file") {
  std::istringstream in("1 1 1\n0 0 0.0 0.0\n0 0 0 0 0 0 1 0 0\n0 0 1\n");
  const Problem p = parse_bal(in);
  CHECK(p.layout() == CameraLayout::Bal9);
  CHECK(p.num_cameras() == 1);
  CHECK(p.num_points() == 1);
  CHECK(p.num_observations() == 1);
  const auto& cam = p.cameras()[0];
  CHECK(cam.intrinsics.fx == 1.0);
  CHECK(cam.intrinsics.fy == 1.0);
  CHECK(cam.intrinsics.cx == 0.0);
  CHECK(cam.distortion.k3 == 0.0);
  CHECK(p.points()[0] == Eigen::Vector3d(0, 0, 1));
  CHECK(p.weights()[0] == WeightMatrix::Identity());
  CHECK(total_cost(p) == 0.0);
}

TEST_CASE("BAL round trips are stable") {
  const Problem p = oracle::synthetic(31, 6, 50, 1.0, CameraLayout::Bal9, true);
  const std::string once = bal_text(p);
  std::istringstream in(once);
  const Problem q = parse_bal(in);
  CHECK(bal_text(q) == once);
  for (int j = 0; j < p.num_cameras(); ++j) CHECK(q.cameras()[j].to_vector() == p.cameras()[j].to_vector());
  for (int i = 0; i < p.num_points(); ++i) CHECK(q.points()[i] == p.points()[i]);
  for (int k = 0; k < p.num_observations(); ++k) CHECK(q.observations()[k].pixel == p.observations()[k].pixel);
}

TEST_CASE("truncated BAL files name the missing section") {
  const std::string full = bal_text(oracle::synthetic(32, 3, 10, 0.5));
  std::istringstream in(full);
  std::string header_line;
  std::getline(in, header_line);
  const auto cut = [&](std::size_t lines) {
    std::istringstream src(full);
    std::string line, text;
    for (std::size_t k = 0; k < lines && std::getline(src, line); ++k) text += line + "\n";
    return text;
  };
  std::istringstream h(header_line);
  int m = 0, n = 0, nobs = 0;
  h >> m >> n >> nobs;
  const std::vector<std::pair<std::size_t, std::string>> cases = {
      {0, "header"},
      {1 + nobs / 2, "observations"},
      {1 + nobs + 5, "cameras"},
      {1 + nobs + 9 * m + 1, "points"},
  };
  for (const auto& [lines, section] : cases) {
    CAPTURE(section);
    std::istringstream t(cut(lines));
    try {
      parse_bal(t);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(section) != std::string::npos);
    }
  }
  std::istringstream bad("1 1 1\n0 0 x 0.0\n");
  CHECK_THROWS_AS(parse_bal(bad), ParseError);
}

TEST_CASE("BAL indices out of range") {
  std::istringstream in("1 1 1\n0 3 0.0 0.0\n0 0 0 0 0 0 1 0 0\n0 0 1\n");
  CHECK_THROWS_AS(parse_bal(in), IndexOutOfRange);
}

TEST_CASE("negative-z BAL convention") {
  // Hand projection of the original dataset model: P = R X + t, p = -P / P.z,
  // u = f (1 + k1 |p|^2 + k2 |p|^4) p, with the point at negative depth.
  const Eigen::Vector3d w(0.1, -0.2, 0.05);
  const Eigen::Vector3d t(0.2, -0.1, -5.0);
  const double f = 400.0, k1 = -0.05, k2 = 0.01;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
  const std::vector<Eigen::Vector3d> pts = {{0.3, 0.2, 0.1}, {-0.4, 0.1, -0.3}};
  std::ostringstream file;
  file.precision(17);
  file << "1 2 2\n";
  for (int i = 0; i < 2; ++i) {
    const Eigen::Vector3d pc = r * pts[i] + t;
    REQUIRE(pc.z() < 0.0);
    const Eigen::Vector2d p = -pc.head<2>() / pc.z();
    const double r2 = p.squaredNorm();
    const Eigen::Vector2d u = f * (1.0 + k1 * r2 + k2 * r2 * r2) * p;
    file << "0 " << i << " " << u.x() << " " << u.y() << "\n";
  }
  file << w.x() << " " << w.y() << " " << w.z() << " " << t.x() << " " << t.y() << " " << t.z()
       << " " << f << " " << k1 << " " << k2 << "\n";
  for (const auto& x : pts) file << x.x() << " " << x.y() << " " << x.z() << "\n";

  std::istringstream in(file.str());
  const Problem p = parse_bal(in, BalConvention::NegativeZ);
  CHECK(total_cost(p) < 1e-18);

  std::istringstream again(bal_text(p, BalConvention::NegativeZ));
  const Problem q = parse_bal(again, BalConvention::NegativeZ);
  std::istringstream original(file.str());
  const Problem literal = parse_bal(original);
  CHECK((q.cameras()[0].to_vector() - p.cameras()[0].to_vector()).norm() < 1e-12);
  std::istringstream written(bal_text(p, BalConvention::NegativeZ));
  const Problem back = parse_bal(written);
  CHECK((back.cameras()[0].to_vector() - literal.cameras()[0].to_vector()).norm() < 1e-12);
  CHECK((back.observations()[1].pixel - literal.observations()[1].pixel).norm() < 1e-12);
}

TEST_CASE("native format carries the full layout and weights") {
  const Problem p = oracle::with_random_weights(
      oracle::synthetic(33, 4, 30, 1.0, CameraLayout::Full15, true), 2);
  std::ostringstream once;
  write_native(once, p);
  std::istringstream in(once.str());
  const Problem q = parse_native(in);
  CHECK(q.layout() == CameraLayout::Full15);
  for (int j = 0; j < p.num_cameras(); ++j) CHECK(q.cameras()[j].to_vector() == p.cameras()[j].to_vector());
  for (int i = 0; i < p.num_points(); ++i) CHECK(q.points()[i] == p.points()[i]);
  for (int k = 0; k < p.num_observations(); ++k) {
    CHECK(q.weights()[k] == p.weights()[k]);
    CHECK(q.observations()[k].pixel == p.observations()[k].pixel);
  }
  std::ostringstream twice;
  write_native(twice, q);
  CHECK(twice.str() == once.str());

  std::istringstream junk("{\"format\": \"other\"}");
  CHECK_THROWS_AS(parse_native(junk), ParseError);
  std::istringstream broken("{\"format\": ");
  CHECK_THROWS_AS(parse_native(broken), ParseError);
  std::ostringstream bal;
  CHECK_THROWS_AS(write_bal(bal, p), Error);
}

TEST_CASE("synthetic generation") {
  SyntheticSpec spec;
  spec.num_cameras = 8;
  spec.num_points = 200;
  spec.noise_sigma = 0.5;
  spec.seed = 41;
  const SyntheticScene a = generate_synthetic(spec);
  const SyntheticScene b = generate_synthetic(spec);
  CHECK(bal_text(a.problem) == bal_text(b.problem));
  spec.seed = 42;
  CHECK(bal_text(generate_synthetic(spec).problem) != bal_text(a.problem));

  CHECK(a.scene_diameter == 1.0);
  for (const auto& x : a.true_points) CHECK(x.norm() <= 0.5);
  for (int i = 0; i < a.problem.num_points(); ++i) CHECK(a.problem.observations_of_point(i).size() >= 2);
  for (int j = 0; j < a.problem.num_cameras(); ++j) CHECK(!a.problem.observations_of_camera(j).empty());

  spec.noise_sigma = 0.0;
  spec.distortion = true;
  spec.layout = CameraLayout::Full15;
  CHECK(total_cost(generate_synthetic(spec).problem) < 1e-18);

  spec.num_cameras = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), InfeasibleSpec);
  spec.num_cameras = 4;
  spec.num_points = 3;
  CHECK_THROWS_AS(generate_synthetic(spec), InfeasibleSpec);
}

TEST_CASE("synthetic noise matches its chi-square expectation") {
  SyntheticSpec spec;
  spec.num_cameras = 20;
  spec.num_points = 500;
  spec.noise_sigma = 1.0;
  spec.seed = 43;
  const Problem p = generate_synthetic(spec).problem;
  REQUIRE(p.num_observations() >= 1000);
  const double expected = 2.0 * p.num_observations();
  CHECK(std::abs(total_cost(p) - expected) <= 0.15 * expected);
}

TEST_CASE("perturbation and seeds") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  Problem p = generate_synthetic(SyntheticSpec{}).problem;
  const Problem truth = p;
  perturb(p, Perturbation{}, 5);
  for (int i = 0; i < p.num_points(); ++i) CHECK((p.points()[i] - truth.points()[i]).norm() <= 0.01 + 1e-15);
  for (int j = 0; j < p.num_cameras(); ++j) {
    const Eigen::Matrix3d d = rotation_matrix(p.cameras()[j].pose.rotation) *
                              rotation_matrix(truth.cameras()[j].pose.rotation).transpose();
    CHECK(Eigen::AngleAxisd(d).angle() <= 0.05 + 1e-12);
  }
}

TEST_CASE("reports round trip through JSON") {
  const Problem p = oracle::synthetic(34, 6, 60, 1.0);
  RunReport r = make_report(solve(p, SolverOptions{}));
  r.command = "solve";
  r.config["seed"] = "34";
  const std::string text = to_json(r);
  const RunReport back = report_from_json(text);
  CHECK(to_json(back) == text);
  CHECK(back.iterations.size() == r.iterations.size());
  CHECK(back.final_cost == r.final_cost);
  CHECK(text.find("wall_time_s") != std::string::npos);
  CHECK(strip_wall_times(text).find("wall_time_s") == std::string::npos);

  DistributedOptions opts;
  opts.threads = 1;
  opts.max_iterations = 5;
  const DistributedSummary d = solve_distributed(p, 2, auto_rho(p, partition_cameras(p, 2)), opts);
  const RunReport dr = make_report(d, 2);
  const std::string dtext = to_json(dr);
  CHECK(to_json(report_from_json(dtext)) == dtext);
  CHECK(report_from_json(dtext).consensus.size() == d.iterations.size());

  RunReport inf = r;
  inf.iterations.front().cost_after = std::numeric_limits<double>::infinity();
  CHECK(std::isinf(report_from_json(to_json(inf)).iterations.front().cost_after));
}

TEST_CASE("CSV report") {
  const Problem p = oracle::synthetic(35, 6, 60, 1.0);
  const RunReport r = make_report(solve(p, SolverOptions{}));
  std::ostringstream out;
  write_csv(out, r);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,cost,lambda,linear_iters,step_norm_c,step_norm_p,accepted");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == r.iterations.size());
}

TEST_CASE("command line exit codes") {
  const CliResult unknown = cli({"solve", "--no-such-flag"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"solve", "--linear-solver", "magic"}).code == 2);
  CHECK(cli({"solve", "--loss", "huber:-1"}).code == 2);
  CHECK(cli({"solve-distributed", "--partitions", "0"}).code == 2);
  CHECK(cli({"solve-distributed", "--cameras", "4", "--partitions", "9"}).code == 2);
  CHECK(cli({"solve", "--input", temp_path("missing.bal")}).code == 1);

  const CliResult jac = cli({"check-jacobians", "--seed", "7", "--samples", "20"});
  CHECK(jac.code == 0);
  const auto pos = jac.out.find("max relative error ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::strtod(jac.out.c_str() + jac.out.rfind(' ') + 1, nullptr) < 1e-5);
}

TEST_CASE("solve from a BAL file") {
  const std::string bal = temp_path("input.bal");
  const std::string report = temp_path("report.json");
  const std::string csv = temp_path("costs.csv");
  const std::string refined = temp_path("refined.bal");
  REQUIRE(cli({"generate", "--cameras", "6", "--points", "60", "--seed", "3", "--output", bal}).code == 0);
  const CliResult r = cli({"solve", "--input", bal, "--linear-solver", "explicit-direct", "--report", report,
                           "--csv", csv, "--output", refined});
  REQUIRE(r.code == 0);
  const RunReport rep = report_from_json(slurp(report));
  CHECK(rep.command == "solve");
  CHECK(rep.linear_solver == "explicit-direct");
  CHECK(rep.num_cameras == 6);
  double cost = rep.initial_cost;
  for (const IterationReport& it : rep.iterations) {
    if (!it.accepted) continue;
    CHECK(it.cost_after < cost);
    cost = it.cost_after;
  }
  CHECK(rep.final_cost == cost);
  CHECK(slurp(csv).rfind("iteration,cost,lambda,linear_iters,step_norm_c,step_norm_p,accepted\n", 0) == 0);
  CHECK(total_cost(read_bal_file(refined)) == doctest::Approx(rep.final_cost).epsilon(1e-9));

  const std::string native = temp_path("input.json");
  REQUIRE(cli({"generate", "--layout", "full15", "--distortion", "--cameras", "4", "--points", "30",
               "--output", native})
              .code == 0);
  CHECK(read_native_file(native).layout() == CameraLayout::Full15);
  CHECK(cli({"solve", "--input", native, "--format", "native", "--max-iters", "3"}).code == 0);
  for (const auto& f : {bal, report, csv, refined, native}) std::filesystem::remove(f);
}

TEST_CASE("identical invocations give identical reports") {
  setenv("BA_THREADS", "4", 1);
  const std::string a = temp_path("det_a.json");
  const std::string b = temp_path("det_b.json");
  for (const std::string cmd : {"solve", "solve-distributed"}) {
    CAPTURE(cmd);
    const std::vector<std::string> base = {cmd, "--cameras", "8", "--points", "80", "--seed", "9",
                                           "--max-iters", "10"};
    auto args = base;
    args.insert(args.end(), {"--report", a});
    REQUIRE(cli(args).code == 0);
    args = base;
    args.insert(args.end(), {"--report", b});
    REQUIRE(cli(args).code == 0);
    CHECK(strip_wall_times(slurp(a)) == strip_wall_times(slurp(b)));
  }
  unsetenv("BA_THREADS");
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}
