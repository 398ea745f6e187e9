#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "ba/camera_model.hpp"

namespace ba {

struct Observation {
  int camera = 0;
  int point = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

// Per-observation 2x2 information matrix.
using WeightMatrix = Eigen::Matrix2d;

using CameraVector = std::vector<CameraParams<double>>;
using PointVector = std::vector<Eigen::Vector3d>;

// A bundle adjustment instance. The observation structure is fixed at
// construction (sorted by camera, then point); camera and point parameters
// may be updated in place.
class Problem {
 public:
  Problem() = default;
  Problem(CameraLayout layout, CameraVector cameras, PointVector points,
          std::vector<Observation> observations,
          std::vector<WeightMatrix> weights = {});

  CameraLayout layout() const { return layout_; }
  int camera_block_size() const { return camera_block_size_for(layout_); }
  int num_cameras() const { return static_cast<int>(cameras_.size()); }
  int num_points() const { return static_cast<int>(points_.size()); }
  int num_observations() const { return static_cast<int>(observations_.size()); }

  const CameraVector& cameras() const { return cameras_; }
  const PointVector& points() const { return points_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const std::vector<WeightMatrix>& weights() const { return weights_; }

  // Observation indices, in sorted order.
  std::span<const int> observations_of_camera(int camera) const;
  std::span<const int> observations_of_point(int point) const;

  void set_cameras(CameraVector cameras);
  void set_points(PointVector points);
  void set_camera(int index, const CameraParams<double>& camera);
  void set_point(int index, const Eigen::Vector3d& point) { points_[index] = point; }
  void set_weights(std::vector<WeightMatrix> weights);

  // Stacked parameter vector [c_0 .. c_{m-1} p_0 .. p_{n-1}].
  Eigen::VectorXd parameter_vector() const;
  int num_parameters() const {
    return num_cameras() * camera_block_size() + 3 * num_points();
  }

 private:
  static int camera_block_size_for(CameraLayout layout) { return ba::camera_block_size(layout); }

  CameraLayout layout_ = CameraLayout::Bal9;
  CameraVector cameras_;
  PointVector points_;
  std::vector<Observation> observations_;
  std::vector<WeightMatrix> weights_;
  std::vector<int> camera_offsets_;  // CSR into observation indices
  std::vector<int> point_offsets_;
  std::vector<int> point_observations_;
  std::vector<int> observation_ids_;  // 0..N-1
};

// Analytic derivatives of the predicted pixel for every observation.
// camera[k] is 2 x d_c, point[k] is 2 x 3, parallel to observations().
struct JacobianBlocks {
  int camera_block_size = 0;
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> camera;
  std::vector<Eigen::Matrix<double, 2, 3>> point;
};

struct LossFunction {
  enum class Kind { Trivial, Huber };
  Kind kind = Kind::Trivial;
  double delta = 1.0;

  static LossFunction trivial() { return {}; }
  static LossFunction huber(double delta) { return {Kind::Huber, delta}; }
};

// r_ij = u_ij - reproject(c_j, X_i) for one observation.
Eigen::Vector2d observation_residual(const Problem& problem, int observation);

// Sum over observations of r^T Lambda r.
double total_cost(const Problem& problem);

// Residuals stacked in observation order (2 entries per observation).
Eigen::VectorXd residual_vector(const Problem& problem);

JacobianBlocks jacobian_blocks(const Problem& problem);

// IRLS weights: `base` (identity when empty) scaled per observation by the
// loss. Huber uses min(1, delta / |r_ij|).
std::vector<WeightMatrix> robust_weights(const Problem& problem, const LossFunction& loss,
                                         std::span<const WeightMatrix> base = {});

}  // namespace ba
