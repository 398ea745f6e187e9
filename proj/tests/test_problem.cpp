#include "ba/problem.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ba;

namespace {

Problem tiny() {
  CameraVector cams(2);
  cams[0].pose.translation = Eigen::Vector3d(0, 0, 4);
  cams[1].pose.translation = Eigen::Vector3d(-1, 0, 4);
  PointVector pts = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 0)};
  std::vector<Observation> obs = {
      {1, 1, Eigen::Vector2d(0.1, 0.2)},
      {0, 1, Eigen::Vector2d(0.25, 0.25)},
      {0, 0, Eigen::Vector2d(0.0, 0.5)},
      {1, 0, Eigen::Vector2d(-0.25, 0.0)},
  };
  return Problem(CameraLayout::Bal9, cams, pts, obs);
}

}  // namespace

TEST_CASE("observations are sorted by camera then point") {
  const Problem p = tiny();
  REQUIRE(p.num_observations() == 4);
  CHECK(p.observations()[0].camera == 0);
  CHECK(p.observations()[0].point == 0);
  CHECK(p.observations()[1].point == 1);
  CHECK(p.observations()[2].camera == 1);
  CHECK(p.observations()[3].pixel == Eigen::Vector2d(0.1, 0.2));
  const auto of_point = p.observations_of_point(1);
  REQUIRE(of_point.size() == 2);
  CHECK(of_point[0] == 1);
  CHECK(of_point[1] == 3);
  const auto of_cam = p.observations_of_camera(1);
  REQUIRE(of_cam.size() == 2);
  CHECK(of_cam[0] == 2);
}

TEST_CASE("cost and residual sign by hand") {
  const Problem p = tiny();
  // camera 0 sees point 0 at (0, 0), observed (0, 0.5)
  CHECK(observation_residual(p, 0).isApprox(Eigen::Vector2d(0.0, 0.5)));
  // camera 1 sees point 0 at (-0.25, 0): zero residual
  CHECK(observation_residual(p, 2).norm() < 1e-15);
  // camera 0 sees point 1 at (0.25, 0.25): zero residual
  CHECK(observation_residual(p, 1).norm() < 1e-15);
  // camera 1 sees point 1 at (0, 0.25)
  CHECK(observation_residual(p, 3).isApprox(Eigen::Vector2d(0.1, -0.05)));
  CHECK(total_cost(p) == doctest::Approx(0.25 + 0.01 + 0.0025));
  const Eigen::VectorXd r = residual_vector(p);
  CHECK(r.size() == 8);
  CHECK(r(1) == doctest::Approx(0.5));
}

TEST_CASE("validation") {
  CameraVector cams(2);
  cams[0].pose.translation = cams[1].pose.translation = Eigen::Vector3d(0, 0, 4);
  PointVector pts = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()};
  std::vector<Observation> ok = {{0, 0, {}}, {1, 1, {}}};
  CHECK_NOTHROW(Problem(CameraLayout::Bal9, cams, pts, ok));

  std::vector<Observation> bad_index = {{0, 0, {}}, {1, 2, {}}};
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, bad_index), IndexOutOfRange);
  std::vector<Observation> negative = {{0, 0, {}}, {-1, 1, {}}};
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, negative), IndexOutOfRange);
  std::vector<Observation> unseen = {{0, 0, {}}, {1, 0, {}}};
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, unseen), InvalidProblem);
  std::vector<Observation> idle = {{0, 0, {}}, {0, 1, {}}};
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, idle), InvalidProblem);
  std::vector<Observation> dup = {{0, 0, {}}, {1, 1, {}}, {0, 0, {}}};
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, dup), InvalidProblem);

  CHECK_THROWS_AS(Problem(CameraLayout::Full15, cams, pts, ok), InvalidProblem);
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, ok, {WeightMatrix::Identity()}),
                  InvalidProblem);
  WeightMatrix asym;
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(Problem(CameraLayout::Bal9, cams, pts, ok, {asym, WeightMatrix::Identity()}),
                  InvalidProblem);
  WeightMatrix indefinite;
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(
      Problem(CameraLayout::Bal9, cams, pts, ok, {indefinite, WeightMatrix::Identity()}),
      InvalidProblem);
  WeightMatrix semidefinite;
  semidefinite << 1, 0, 0, 0;
  CHECK_NOTHROW(
      Problem(CameraLayout::Bal9, cams, pts, ok, {semidefinite, WeightMatrix::Identity()}));
}

TEST_CASE("cheirality failures name the observation") {
  Problem p = tiny();
  p.set_point(0, Eigen::Vector3d(0, 0, -10));
  try {
    total_cost(p);
    FAIL("expected CheiralityError");
  } catch (const CheiralityError& e) {
    CHECK(e.point() == 0);
    CHECK(e.camera() == 0);
  }
}

TEST_CASE("cost matches a naive weighted sum") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Problem p = oracle::with_random_weights(oracle::synthetic(seed, 5, 40, 1.0), seed);
    CHECK(total_cost(p) == doctest::Approx(oracle::naive_cost(p)).epsilon(1e-13));
  }
}

TEST_CASE("zero noise cost at the ground truth is zero") {
  const Problem p = oracle::synthetic(4, 6, 60, 0.0, CameraLayout::Full15, true, false);
  CHECK(total_cost(p) < 1e-18);
}

TEST_CASE("Jacobian blocks match central differences of the predictions") {
  for (CameraLayout layout : {CameraLayout::Bal9, CameraLayout::Full15}) {
    const Problem p = oracle::synthetic(9, 4, 20, 0.5, layout, true);
    const Eigen::MatrixXd analytic = oracle::dense_jacobian(p, jacobian_blocks(p));
    const Eigen::MatrixXd numeric = oracle::numeric_jacobian(p);
    CHECK((analytic - numeric).norm() <= 1e-6 * numeric.norm());
  }
}

TEST_CASE("Huber weights") {
  const Problem p = tiny();
  std::vector<WeightMatrix> base(4, 2.0 * WeightMatrix::Identity());
  const auto w = robust_weights(p, LossFunction::huber(0.1), base);
  CHECK(w[0].isApprox(2.0 * 0.1 / 0.5 * WeightMatrix::Identity()));
  CHECK(w[1] == base[1]);
  const double n3 = Eigen::Vector2d(0.1, -0.05).norm();
  CHECK(w[3].isApprox(2.0 * 0.1 / n3 * WeightMatrix::Identity()));
  const auto t = robust_weights(p, LossFunction::trivial());
  for (const auto& m : t) CHECK(m == WeightMatrix::Identity());
}

TEST_CASE("parameter vector stacks cameras then points") {
  const Problem p = tiny();
  const Eigen::VectorXd x = p.parameter_vector();
  CHECK(x.size() == p.num_parameters());
  CHECK(x.size() == 2 * 9 + 2 * 3);
  CHECK(x(5) == 4.0);
  CHECK(x(6) == 1.0);
  CHECK(x.tail<3>() == Eigen::Vector3d(1, 1, 0));
}
