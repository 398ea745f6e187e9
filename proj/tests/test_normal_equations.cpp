#include <Eigen/Dense>

#include "ba/normal_equations.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ba;

namespace {

struct Dense {
  Eigen::MatrixXd h;
  Eigen::VectorXd b;
};

// J^T L J and J^T L r from the numeric Jacobian.
Dense dense_system(const Problem& p) {
  const Eigen::MatrixXd j = oracle::numeric_jacobian(p);
  const Eigen::MatrixXd w = oracle::dense_weights(p);
  Eigen::VectorXd res(2 * p.num_observations());
  for (int k = 0; k < p.num_observations(); ++k) {
    const Observation& o = p.observations()[k];
    res.segment<2>(2 * k) = o.pixel - reproject(p.cameras()[o.camera], p.points()[o.point]);
  }
  return {j.transpose() * w * j, j.transpose() * w * res};
}

Eigen::MatrixXd dense_from_blocks(const BlockNormalEquations& ne) {
  const int d = ne.structure.camera_block_size;
  const int cd = ne.camera_dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(ne.dim(), ne.dim());
  for (int j = 0; j < ne.structure.num_cameras; ++j) h.block(j * d, j * d, d, d) = ne.U[j];
  for (int i = 0; i < ne.structure.num_points; ++i) h.block<3, 3>(cd + 3 * i, cd + 3 * i) = ne.V[i];
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    const int j = ne.structure.block_camera[k];
    const int i = ne.structure.block_point[k];
    h.block(j * d, cd + 3 * i, d, 3) = ne.W[k];
    h.block(cd + 3 * i, j * d, 3, d) = ne.W[k].transpose();
  }
  return h;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace

TEST_CASE("assembled blocks equal the dense normal equations") {
  for (CameraLayout layout : {CameraLayout::Bal9, CameraLayout::Full15}) {
    const Problem p = oracle::with_random_weights(oracle::synthetic(21, 4, 25, 1.0, layout, true), 5);
    const Dense d = dense_system(p);
    const BlockNormalEquations ne = assemble(p, jacobian_blocks(p));
    CHECK(rel(dense_from_blocks(ne), d.h) < 1e-6);
    CHECK(rel(ne.rhs(), d.b) < 1e-6);
    CHECK(ne.rhs().head(ne.camera_dim()) == ne.camera_rhs());
    CHECK(ne.rhs().tail(ne.point_dim()) == ne.point_rhs());
  }
}

TEST_CASE("assembling a subset of observations") {
  const Problem p = oracle::synthetic(22, 4, 25, 1.0);
  const JacobianBlocks jb = jacobian_blocks(p);
  std::vector<int> all(p.num_observations());
  for (int k = 0; k < p.num_observations(); ++k) all[k] = k;
  const BlockNormalEquations full = assemble(p, jb);
  const BlockNormalEquations same = assemble(p, jb, all);
  CHECK(dense_from_blocks(full) == dense_from_blocks(same));
  const std::vector<int> none;
  const BlockNormalEquations empty = assemble(p, jb, none);
  CHECK(dense_from_blocks(empty).isZero(0.0));
}

TEST_CASE("augment adds lambda to the diagonal blocks only") {
  const Problem p = oracle::synthetic(23, 3, 15, 1.0);
  const BlockNormalEquations ne = assemble(p, jacobian_blocks(p));
  const BlockNormalEquations aug = augment(ne, 0.7);
  const Eigen::MatrixXd diff = dense_from_blocks(aug) - dense_from_blocks(ne);
  CHECK((diff - 0.7 * Eigen::MatrixXd::Identity(ne.dim(), ne.dim())).norm() < 1e-14 * dense_from_blocks(ne).norm());
  CHECK(aug.rhs() == ne.rhs());
}

TEST_CASE("point prior") {
  const Problem p = oracle::synthetic(24, 3, 15, 1.0);
  BlockNormalEquations ne = assemble(p, jacobian_blocks(p));
  const BlockNormalEquations before = ne;
  PointVector anchors = p.points();
  for (auto& a : anchors) a += Eigen::Vector3d(0.1, 0.0, -0.2);
  add_point_prior(ne, 3.0, anchors, p.points());
  for (int i = 0; i < p.num_points(); ++i) {
    CHECK((ne.V[i] - before.V[i] - 3.0 * Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK((ne.rp[i] - before.rp[i] - Eigen::Vector3d(0.3, 0.0, -0.6)).norm() < 1e-12);
  }
}

TEST_CASE("point block inversion") {
  std::mt19937_64 rng(3);
  for (int s = 0; s < 50; ++s) {
    const Eigen::Matrix3d v = oracle::random_spd(3, rng);
    CHECK((invert_point_block(v, 0) * v - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  }
  Eigen::Matrix3d singular = Eigen::Matrix3d::Zero();
  singular(0, 0) = singular(1, 1) = 1.0;
  try {
    invert_point_block(singular, 17);
    FAIL("expected SingularPointBlock");
  } catch (const SingularPointBlock& e) {
    CHECK(e.point() == 17);
  }
}

TEST_CASE("Schur complement equals the dense reduction") {
  for (SchurStorage storage : {SchurStorage::Dense, SchurStorage::BlockSparse}) {
    const Problem p = oracle::with_random_weights(oracle::synthetic(25, 5, 30, 1.0), 9);
    const BlockNormalEquations ne = augment(assemble(p, jacobian_blocks(p)), 1e-3);
    const Eigen::MatrixXd h = dense_from_blocks(ne);
    const int c = ne.camera_dim();
    const Eigen::MatrixXd u = h.topLeftCorner(c, c);
    const Eigen::MatrixXd w = h.topRightCorner(c, ne.point_dim());
    const Eigen::MatrixXd v = h.bottomRightCorner(ne.point_dim(), ne.point_dim());
    const Eigen::MatrixXd vinv = v.inverse();
    const Eigen::MatrixXd s = u - w * vinv * w.transpose();
    const Eigen::VectorXd g = ne.camera_rhs() - w * vinv * ne.point_rhs();

    const SchurSystem sys = schur_reduce(ne, storage);
    CHECK(sys.is_dense() == (storage == SchurStorage::Dense));
    CHECK(rel(sys.to_dense(), s) < 1e-10);
    CHECK(rel(sys.rhs(), g) < 1e-10);
    CHECK(rel(schur_rhs(ne, invert_point_blocks(ne)), g) < 1e-10);

    std::mt19937_64 rng(4);
    const Eigen::VectorXd x = oracle::random_vector(c, rng);
    CHECK(rel(sys.apply(x), s * x) < 1e-10);
    CHECK(rel(apply_schur(ne, x), s * x) < 1e-10);
    const int d = ne.structure.camera_block_size;
    const auto diag = schur_diagonal_blocks(ne, invert_point_blocks(ne));
    for (int j = 0; j < ne.structure.num_cameras; ++j) {
      CHECK(rel(diag[j], s.block(j * d, j * d, d, d)) < 1e-10);
      CHECK(rel(sys.diagonal_block(j), s.block(j * d, j * d, d, d)) < 1e-10);
    }
  }
}

TEST_CASE("Schur solve and back substitution reproduce the full solution") {
  const Problem p = oracle::synthetic(26, 5, 30, 1.0, CameraLayout::Full15, true);
  const BlockNormalEquations ne = augment(assemble(p, jacobian_blocks(p)), 1e-2);
  const Eigen::MatrixXd h = dense_from_blocks(ne);
  const Eigen::VectorXd full = h.lu().solve(ne.rhs());
  const SchurSystem sys = schur_reduce(ne);
  const Eigen::VectorXd dc = sys.dense().llt().solve(sys.rhs());
  const Eigen::VectorXd dp = back_substitute(ne, dc);
  Eigen::VectorXd x(ne.dim());
  x << dc, dp;
  CHECK((h * x - ne.rhs()).norm() <= 1e-8 * ne.rhs().norm());
  CHECK(rel(x, full) < 1e-6);
  CHECK(rel(back_substitute(ne, sys.v_inverse(), dc), dp) < 1e-14);
}

TEST_CASE("Hessian product") {
  const Problem p = oracle::synthetic(27, 4, 20, 1.0);
  const BlockNormalEquations ne = augment(assemble(p, jacobian_blocks(p)), 0.5);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd x = oracle::random_vector(ne.dim(), rng);
  CHECK(rel(apply_hessian(ne, x), dense_from_blocks(ne) * x) < 1e-12);
}

TEST_CASE("block structure") {
  const Problem p = oracle::synthetic(28, 4, 20, 1.0);
  const BlockStructure st = BlockStructure::from_problem(p);
  CHECK(st.dim() == p.num_parameters());
  for (int i = 0; i < p.num_points(); ++i) {
    const auto blocks = st.blocks_of_point(i);
    const auto obs = p.observations_of_point(i);
    REQUIRE(blocks.size() == obs.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      CHECK(blocks[k] == obs[k]);
      CHECK(st.block_point[blocks[k]] == i);
    }
  }
}
