#include "ba/problem.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <numeric>
#include <string>

namespace ba {
namespace {

void check_weight(const WeightMatrix& w, std::size_t index) {
  if (!w.allFinite() || std::abs(w(0, 1) - w(1, 0)) > 1e-14) {
    throw InvalidProblem("weight matrix " + std::to_string(index) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(w, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-14) {
    throw InvalidProblem("weight matrix " + std::to_string(index) + " is indefinite");
  }
}

}  // namespace

Problem::Problem(CameraLayout layout, CameraVector cameras, PointVector points,
                 std::vector<Observation> observations, std::vector<WeightMatrix> weights)
    : layout_(layout), cameras_(std::move(cameras)), points_(std::move(points)) {
  const int m = num_cameras();
  const int n = num_points();
  if (weights.empty()) weights.assign(observations.size(), WeightMatrix::Identity());
  if (weights.size() != observations.size()) {
    throw InvalidProblem("weights must parallel observations");
  }
  for (std::size_t c = 0; c < cameras_.size(); ++c) {
    if (cameras_[c].layout != layout_) {
      throw InvalidProblem("camera " + std::to_string(c) + " has a different layout");
    }
  }
  for (std::size_t k = 0; k < observations.size(); ++k) {
    const Observation& o = observations[k];
    if (o.camera < 0 || o.camera >= m || o.point < 0 || o.point >= n) {
      throw IndexOutOfRange("observation " + std::to_string(k) + " index out of range");
    }
    check_weight(weights[k], k);
  }

  std::vector<std::size_t> order(observations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Observation& oa = observations[a];
    const Observation& ob = observations[b];
    return oa.camera != ob.camera ? oa.camera < ob.camera : oa.point < ob.point;
  });
  observations_.reserve(order.size());
  weights_.reserve(order.size());
  for (std::size_t k : order) {
    observations_.push_back(observations[k]);
    weights_.push_back(weights[k]);
  }
  for (std::size_t k = 1; k < observations_.size(); ++k) {
    if (observations_[k].camera == observations_[k - 1].camera &&
        observations_[k].point == observations_[k - 1].point) {
      throw InvalidProblem("duplicate observation of point " +
                           std::to_string(observations_[k].point) + " in camera " +
                           std::to_string(observations_[k].camera));
    }
  }

  camera_offsets_.assign(m + 1, 0);
  point_offsets_.assign(n + 1, 0);
  for (const Observation& o : observations_) {
    ++camera_offsets_[o.camera + 1];
    ++point_offsets_[o.point + 1];
  }
  std::partial_sum(camera_offsets_.begin(), camera_offsets_.end(), camera_offsets_.begin());
  std::partial_sum(point_offsets_.begin(), point_offsets_.end(), point_offsets_.begin());
  for (int j = 0; j < m; ++j) {
    if (camera_offsets_[j + 1] == camera_offsets_[j]) {
      throw InvalidProblem("camera " + std::to_string(j) + " observes no points");
    }
  }
  for (int i = 0; i < n; ++i) {
    if (point_offsets_[i + 1] == point_offsets_[i]) {
      throw InvalidProblem("point " + std::to_string(i) + " is not observed");
    }
  }
  observation_ids_.resize(observations_.size());
  std::iota(observation_ids_.begin(), observation_ids_.end(), 0);
  point_observations_.resize(observations_.size());
  std::vector<int> fill(point_offsets_.begin(), point_offsets_.end() - 1);
  for (int k = 0; k < num_observations(); ++k) {
    point_observations_[fill[observations_[k].point]++] = k;
  }
}

std::span<const int> Problem::observations_of_point(int point) const {
  return {point_observations_.data() + point_offsets_[point],
          static_cast<std::size_t>(point_offsets_[point + 1] - point_offsets_[point])};
}

std::span<const int> Problem::observations_of_camera(int camera) const {
  return {observation_ids_.data() + camera_offsets_[camera],
          static_cast<std::size_t>(camera_offsets_[camera + 1] - camera_offsets_[camera])};
}

void Problem::set_cameras(CameraVector cameras) {
  if (cameras.size() != cameras_.size()) throw InvalidProblem("camera count mismatch");
  for (const auto& c : cameras) {
    if (c.layout != layout_) throw InvalidProblem("camera layout mismatch");
  }
  cameras_ = std::move(cameras);
}

void Problem::set_points(PointVector points) {
  if (points.size() != points_.size()) throw InvalidProblem("point count mismatch");
  points_ = std::move(points);
}

void Problem::set_camera(int index, const CameraParams<double>& camera) {
  if (camera.layout != layout_) throw InvalidProblem("camera layout mismatch");
  cameras_[index] = camera;
}

void Problem::set_weights(std::vector<WeightMatrix> weights) {
  if (weights.size() != observations_.size()) {
    throw InvalidProblem("weights must parallel observations");
  }
  for (std::size_t k = 0; k < weights.size(); ++k) check_weight(weights[k], k);
  weights_ = std::move(weights);
}

Eigen::VectorXd Problem::parameter_vector() const {
  const int dc = camera_block_size();
  Eigen::VectorXd x(num_parameters());
  for (int j = 0; j < num_cameras(); ++j) x.segment(j * dc, dc) = cameras_[j].to_vector();
  const int offset = num_cameras() * dc;
  for (int i = 0; i < num_points(); ++i) x.segment<3>(offset + 3 * i) = points_[i];
  return x;
}

Eigen::Vector2d observation_residual(const Problem& problem, int observation) {
  const Observation& o = problem.observations()[observation];
  try {
    return o.pixel - reproject(problem.cameras()[o.camera], problem.points()[o.point]);
  } catch (const CheiralityError&) {
    throw CheiralityError(o.point, o.camera);
  }
}

double total_cost(const Problem& problem) {
  double cost = 0.0;
  for (int k = 0; k < problem.num_observations(); ++k) {
    const Eigen::Vector2d r = observation_residual(problem, k);
    cost += r.dot(problem.weights()[k] * r);
  }
  return cost;
}

Eigen::VectorXd residual_vector(const Problem& problem) {
  Eigen::VectorXd r(2 * problem.num_observations());
  for (int k = 0; k < problem.num_observations(); ++k) {
    r.segment<2>(2 * k) = observation_residual(problem, k);
  }
  return r;
}

JacobianBlocks jacobian_blocks(const Problem& problem) {
  JacobianBlocks out;
  out.camera_block_size = problem.camera_block_size();
  out.camera.reserve(problem.num_observations());
  out.point.reserve(problem.num_observations());
  for (const Observation& o : problem.observations()) {
    try {
      ProjectionJacobian pj =
          reproject_with_jacobian(problem.cameras()[o.camera], problem.points()[o.point]);
      out.camera.push_back(std::move(pj.camera));
      out.point.push_back(pj.point);
    } catch (const CheiralityError&) {
      throw CheiralityError(o.point, o.camera);
    }
  }
  return out;
}

std::vector<WeightMatrix> robust_weights(const Problem& problem, const LossFunction& loss,
                                         std::span<const WeightMatrix> base) {
  const int count = problem.num_observations();
  std::vector<WeightMatrix> out(count, WeightMatrix::Identity());
  if (!base.empty()) {
    if (static_cast<int>(base.size()) != count) {
      throw InvalidProblem("base weights must parallel observations");
    }
    std::copy(base.begin(), base.end(), out.begin());
  }
  if (loss.kind == LossFunction::Kind::Huber) {
    for (int k = 0; k < count; ++k) {
      const double norm = observation_residual(problem, k).norm();
      if (norm > loss.delta) out[k] *= loss.delta / norm;
    }
  }
  return out;
}

}  // namespace ba
