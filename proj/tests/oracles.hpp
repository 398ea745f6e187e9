#pragma once

// Reference computations that avoid the library's block machinery.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "ba/io.hpp"
#include "ba/problem.hpp"

namespace oracle {

// Predicted pixels of every observation, stacked.
inline Eigen::VectorXd predictions(const ba::Problem& p, const Eigen::VectorXd& x) {
  const int d = p.camera_block_size();
  const int m = p.num_cameras();
  Eigen::VectorXd out(2 * p.num_observations());
  for (int k = 0; k < p.num_observations(); ++k) {
    const ba::Observation& o = p.observations()[k];
    const auto cam = p.cameras()[o.camera].with_vector(x.segment(o.camera * d, d));
    const Eigen::Vector3d pt = x.segment<3>(m * d + 3 * o.point);
    out.segment<2>(2 * k) = ba::reproject(cam, pt);
  }
  return out;
}

// Central differences of the predictions with respect to all parameters.
inline Eigen::MatrixXd numeric_jacobian(const ba::Problem& p) {
  const Eigen::VectorXd x0 = p.parameter_vector();
  Eigen::MatrixXd j(2 * p.num_observations(), x0.size());
  for (int c = 0; c < x0.size(); ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(x0(c)));
    Eigen::VectorXd xp = x0, xm = x0;
    xp(c) += h;
    xm(c) -= h;
    j.col(c) = (predictions(p, xp) - predictions(p, xm)) / (2.0 * h);
  }
  return j;
}

// Analytic blocks scattered into a dense matrix.
inline Eigen::MatrixXd dense_jacobian(const ba::Problem& p, const ba::JacobianBlocks& b) {
  const int d = p.camera_block_size();
  const int m = p.num_cameras();
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * p.num_observations(), p.num_parameters());
  for (int k = 0; k < p.num_observations(); ++k) {
    const ba::Observation& o = p.observations()[k];
    j.block(2 * k, o.camera * d, 2, d) = b.camera[k];
    j.block(2 * k, m * d + 3 * o.point, 2, 3) = b.point[k];
  }
  return j;
}

inline Eigen::MatrixXd dense_weights(const ba::Problem& p) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * p.num_observations(), 2 * p.num_observations());
  for (int k = 0; k < p.num_observations(); ++k) w.block<2, 2>(2 * k, 2 * k) = p.weights()[k];
  return w;
}

inline double naive_cost(const ba::Problem& p) {
  double sum = 0.0;
  for (int k = 0; k < p.num_observations(); ++k) {
    const ba::Observation& o = p.observations()[k];
    const Eigen::Vector2d r = o.pixel - ba::reproject(p.cameras()[o.camera], p.points()[o.point]);
    sum += r.dot(p.weights()[k] * r);
  }
  return sum;
}

inline ba::Problem synthetic(std::uint64_t seed, int m, int n, double sigma,
                             ba::CameraLayout layout = ba::CameraLayout::Bal9,
                             bool distortion = false, bool perturbed = true) {
  ba::SyntheticSpec spec;
  spec.num_cameras = m;
  spec.num_points = n;
  spec.noise_sigma = sigma;
  spec.seed = seed;
  spec.layout = layout;
  spec.distortion = distortion;
  ba::Problem p = ba::generate_synthetic(spec).problem;
  if (perturbed) ba::perturb(p, ba::Perturbation{}, ba::derive_seed(seed, 100));
  return p;
}

// Random symmetric positive definite 2x2 weights attached to a problem.
inline ba::Problem with_random_weights(ba::Problem p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ba::WeightMatrix> w;
  for (int k = 0; k < p.num_observations(); ++k) {
    Eigen::Matrix2d a;
    a << u(rng), u(rng), u(rng), u(rng);
    w.push_back(a * a.transpose() + 0.5 * Eigen::Matrix2d::Identity());
  }
  p.set_weights(std::move(w));
  return p;
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double shift = 0.1) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return a * a.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

}  // namespace oracle
