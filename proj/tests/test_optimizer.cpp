#include <Eigen/Dense>
#include <algorithm>

#include "ba/optimizer.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ba;

namespace {

SolverOptions options(LinearSolverType type) {
  SolverOptions o;
  o.linear_solver = type;
  o.max_outer_iterations = 100;
  return o;
}

double median_inlier_residual(const Problem& p, const SolveSummary& s, const std::vector<char>& outlier) {
  Problem q = p;
  q.set_cameras(s.cameras);
  q.set_points(s.points);
  std::vector<double> norms;
  for (int k = 0; k < q.num_observations(); ++k) {
    if (!outlier[k]) norms.push_back(observation_residual(q, k).norm());
  }
  std::nth_element(norms.begin(), norms.begin() + norms.size() / 2, norms.end());
  return norms[norms.size() / 2];
}

}  // namespace

TEST_CASE("damping schedule") {
  SolverOptions o;
  CHECK(update_damping(1e-4, false, o) == doctest::Approx(2e-4));
  CHECK(update_damping(1e-4, true, o) == doctest::Approx(1e-4 / 3.0));
  CHECK(update_damping(4e31, false, o) == doctest::Approx(8e31));
  CHECK_THROWS_AS(update_damping(6e31, false, o), DampingOverflow);
}

TEST_CASE("every linear solver reaches zero cost without noise") {
  const Problem p = oracle::synthetic(1, 6, 60, 0.0);
  for (LinearSolverType t : kAllLinearSolvers) {
    CAPTURE(to_string(t));
    const SolveSummary s = solve(p, options(t));
    CHECK(s.initial_cost > 1.0);
    CHECK(s.final_cost <= 1e-10);
  }
}

TEST_CASE("linear solvers agree on a noisy problem") {
  const Problem p = oracle::synthetic(2, 10, 100, 1.0);
  std::vector<double> costs;
  for (LinearSolverType t : kAllLinearSolvers) {
    CAPTURE(to_string(t));
    const SolveSummary s = solve(p, options(t));
    costs.push_back(s.final_cost);
    CHECK(s.termination != TerminationReason::MaxIterations);
  }
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  CHECK((*hi - *lo) <= 1e-6 * *lo);
}

TEST_CASE("accepted costs decrease monotonically") {
  const Problem p = oracle::synthetic(3, 10, 100, 1.0, CameraLayout::Full15, true);
  for (LinearSolverType t : {LinearSolverType::ExplicitDirect, LinearSolverType::ImplicitSsor}) {
    const SolveSummary s = solve(p, options(t));
    REQUIRE_FALSE(s.iterations.empty());
    CHECK(s.iterations.front().cost_before == s.initial_cost);
    double cost = s.initial_cost;
    for (const IterationReport& r : s.iterations) {
      CHECK(r.cost_before == cost);
      if (r.accepted) {
        CHECK(r.cost_after < cost);
        cost = r.cost_after;
      }
    }
    CHECK(s.final_cost == cost);
    CHECK(s.final_cost == doctest::Approx(oracle::naive_cost([&] {
            Problem q = p;
            q.set_cameras(s.cameras);
            q.set_points(s.points);
            return q;
          }())));
  }
}

TEST_CASE("Gauss-Newton mode") {
  const Problem p = oracle::synthetic(4, 6, 60, 0.0);
  SolverOptions o = options(LinearSolverType::ExplicitDirect);
  o.mode = OptimizerMode::GaussNewton;
  const SolveSummary s = solve(p, o);
  CHECK(s.final_cost <= 1e-10);
}

TEST_CASE("iteration cap") {
  const Problem p = oracle::synthetic(5, 6, 60, 1.0);
  SolverOptions o;
  o.max_outer_iterations = 1;
  const SolveSummary s = solve(p, o);
  CHECK(s.outer_iterations == 1);
  CHECK(s.termination == TerminationReason::MaxIterations);
  CHECK(s.final_cost < s.initial_cost);
}

TEST_CASE("a single step equals the dense damped solution") {
  const Problem p = oracle::with_random_weights(oracle::synthetic(6, 5, 40, 1.0, CameraLayout::Full15, true), 1);
  const JacobianBlocks jb = jacobian_blocks(p);
  const Eigen::VectorXd r = residual_vector(p);
  const BlockNormalEquations ne = assemble(p, jb);
  const Eigen::MatrixXd j = oracle::dense_jacobian(p, jb);
  const Eigen::MatrixXd w = oracle::dense_weights(p);
  const double lambda = 1e-2;
  const Eigen::MatrixXd h = j.transpose() * w * j;
  const Eigen::VectorXd b = j.transpose() * w * r;
  const Eigen::VectorXd exact =
      (h + lambda * Eigen::MatrixXd::Identity(h.rows(), h.cols())).ldlt().solve(b);
  const Linearization lin{p, jb, r, ne, nullptr};
  for (LinearSolverType t : kAllLinearSolvers) {
    CAPTURE(to_string(t));
    SolverOptions o;
    o.linear_solver = t;
    o.cg.eta = 1e-12;
    o.cg.max_iterations = 5000;
    const LinearStep step = lm_step(lin, lambda, o);
    Eigen::VectorXd dx(exact.size());
    dx << step.camera, step.point;
    CHECK((dx - exact).norm() <= 1e-6 * exact.norm());
    CHECK(step.predicted_decrease ==
          doctest::Approx(2.0 * dx.dot(b) - dx.dot(h * dx)).epsilon(1e-8));
  }
}

TEST_CASE("applied steps keep rotations canonical") {
  Problem p = oracle::synthetic(7, 3, 20, 0.0, CameraLayout::Bal9, false, false);
  const int d = p.camera_block_size();
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(3 * d);
  dc.segment<3>(0) = 7.0 * Eigen::Vector3d::UnitZ();
  const Eigen::VectorXd dp = Eigen::VectorXd::Constant(3 * p.num_points(), 0.5);
  const Eigen::Vector3d before = p.points()[0];
  apply_step(p, dc, dp);
  CHECK(p.cameras()[0].pose.rotation.norm() <= 3.14159265358979323846 + 1e-12);
  CHECK(p.points()[0] == before + Eigen::Vector3d::Constant(0.5));
}

TEST_CASE("point prior enters the objective") {
  const Problem p = oracle::synthetic(8, 5, 40, 1.0);
  PointPrior prior;
  prior.weight = 2.5;
  prior.anchors = p.points();
  for (auto& a : prior.anchors) a += Eigen::Vector3d(0.0, 0.1, 0.0);
  CHECK(objective(p, &prior) == doctest::Approx(total_cost(p) + 2.5 * 0.01 * p.num_points()));
  CHECK(objective(p, nullptr) == total_cost(p));

  // A stiff prior holds the points at the anchors.
  prior.anchors = p.points();
  prior.weight = 1e10;
  for (LinearSolverType t : {LinearSolverType::ExplicitDirect, LinearSolverType::BlockQr}) {
    const SolveSummary s = solve(p, options(t), &prior);
    for (int i = 0; i < p.num_points(); ++i) CHECK((s.points[i] - prior.anchors[i]).norm() < 1e-6);
    CHECK(s.final_cost < s.initial_cost);
  }
}

TEST_CASE("prior-regularized solvers agree") {
  const Problem p = oracle::synthetic(9, 10, 100, 1.0);
  PointPrior prior;
  prior.weight = 50.0;
  prior.anchors = p.points();
  for (auto& a : prior.anchors) a += Eigen::Vector3d(0.01, 0.0, -0.01);
  std::vector<double> costs;
  for (LinearSolverType t : kAllLinearSolvers) {
    const SolveSummary s = solve(p, options(t), &prior);
    costs.push_back(s.final_cost);
  }
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  CHECK((*hi - *lo) <= 1e-6 * *lo);
}

TEST_CASE("Huber loss resists outliers") {
  Problem p = oracle::synthetic(10, 8, 120, 0.5);
  std::vector<Observation> obs = p.observations();
  std::vector<char> outlier(obs.size(), 0);
  for (std::size_t k = 0; k < obs.size(); k += 25) {
    obs[k].pixel += Eigen::Vector2d(40.0, -30.0);
    outlier[k] = 1;
  }
  const Problem corrupted(p.layout(), p.cameras(), p.points(), obs);
  SolverOptions plain = options(LinearSolverType::ExplicitDirect);
  SolverOptions robust = plain;
  robust.loss = LossFunction::huber(2.0);
  const double ls = median_inlier_residual(corrupted, solve(corrupted, plain), outlier);
  const double hub = median_inlier_residual(corrupted, solve(corrupted, robust), outlier);
  CHECK(hub < 0.75 * ls);
  CHECK(hub < 1.0);
}

TEST_CASE("termination names") {
  CHECK(to_string(TerminationReason::FunctionTolerance) == "function_tolerance");
  CHECK(to_string(TerminationReason::DampingOverflow) == "damping_overflow");
}
