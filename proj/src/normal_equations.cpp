#include "ba/normal_equations.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <utility>

namespace ba {

BlockStructure BlockStructure::from_problem(const Problem& problem) {
  BlockStructure s;
  s.num_cameras = problem.num_cameras();
  s.num_points = problem.num_points();
  s.camera_block_size = problem.camera_block_size();
  const auto& obs = problem.observations();
  s.block_camera.reserve(obs.size());
  s.block_point.reserve(obs.size());
  for (const Observation& o : obs) {
    s.block_camera.push_back(o.camera);
    s.block_point.push_back(o.point);
  }
  s.point_offsets.assign(s.num_points + 1, 0);
  s.point_blocks.reserve(obs.size());
  for (int i = 0; i < s.num_points; ++i) {
    const auto ids = problem.observations_of_point(i);
    s.point_offsets[i + 1] = s.point_offsets[i] + static_cast<int>(ids.size());
    s.point_blocks.insert(s.point_blocks.end(), ids.begin(), ids.end());
  }
  return s;
}

Eigen::VectorXd BlockNormalEquations::camera_rhs() const {
  const int dc = structure.camera_block_size;
  Eigen::VectorXd out(camera_dim());
  for (int j = 0; j < structure.num_cameras; ++j) out.segment(j * dc, dc) = rc[j];
  return out;
}

Eigen::VectorXd BlockNormalEquations::point_rhs() const {
  Eigen::VectorXd out(point_dim());
  for (int i = 0; i < structure.num_points; ++i) out.segment<3>(3 * i) = rp[i];
  return out;
}

Eigen::VectorXd BlockNormalEquations::rhs() const {
  Eigen::VectorXd out(dim());
  out << camera_rhs(), point_rhs();
  return out;
}

BlockNormalEquations assemble(const Problem& problem, const JacobianBlocks& blocks,
                              std::span<const int> observations) {
  BlockNormalEquations ne;
  ne.structure = BlockStructure::from_problem(problem);
  const int dc = problem.camera_block_size();
  const int m = problem.num_cameras();
  const int n = problem.num_points();
  ne.U.assign(m, Eigen::MatrixXd::Zero(dc, dc));
  ne.V.assign(n, Eigen::Matrix3d::Zero());
  ne.W.assign(problem.num_observations(), CameraPointBlock::Zero(dc, 3));
  ne.rc.assign(m, Eigen::VectorXd::Zero(dc));
  ne.rp.assign(n, Eigen::Vector3d::Zero());

  for (int k : observations) {
    const Observation& o = problem.observations()[k];
    const WeightMatrix& lambda = problem.weights()[k];
    const Eigen::Vector2d r = observation_residual(problem, k);
    const auto& a = blocks.camera[k];
    const auto& b = blocks.point[k];
    const Eigen::Matrix<double, Eigen::Dynamic, 2> at_w = a.transpose() * lambda;
    const Eigen::Matrix<double, 3, 2> bt_w = b.transpose() * lambda;
    ne.U[o.camera].noalias() += at_w * a;
    ne.V[o.point].noalias() += bt_w * b;
    ne.W[k].noalias() = at_w * b;
    ne.rc[o.camera].noalias() += at_w * r;
    ne.rp[o.point].noalias() += bt_w * r;
  }
  return ne;
}

BlockNormalEquations assemble(const Problem& problem, const JacobianBlocks& blocks) {
  std::vector<int> all(problem.num_observations());
  std::iota(all.begin(), all.end(), 0);
  return assemble(problem, blocks, all);
}

BlockNormalEquations augment(const BlockNormalEquations& ne, double lambda) {
  BlockNormalEquations out = ne;
  if (lambda == 0.0) return out;
  for (auto& u : out.U) u.diagonal().array() += lambda;
  for (auto& v : out.V) v.diagonal().array() += lambda;
  out.lambda += lambda;
  return out;
}

void add_point_prior(BlockNormalEquations& ne, double weight,
                     std::span<const Eigen::Vector3d> anchors, const PointVector& points) {
  for (int i = 0; i < ne.structure.num_points; ++i) {
    ne.V[i].diagonal().array() += weight;
    ne.rp[i] += weight * (anchors[i] - points[i]);
  }
}

Eigen::Matrix3d invert_point_block(const Eigen::Matrix3d& v, std::size_t index) {
  const double a00 = v(0, 0);
  if (!(a00 > 0.0)) throw SingularPointBlock(index);
  const double l00 = std::sqrt(a00);
  const double l10 = v(1, 0) / l00;
  const double l20 = v(2, 0) / l00;
  const double d1 = v(1, 1) - l10 * l10;
  if (!(d1 > 0.0)) throw SingularPointBlock(index);
  const double l11 = std::sqrt(d1);
  const double l21 = (v(2, 1) - l20 * l10) / l11;
  const double d2 = v(2, 2) - l20 * l20 - l21 * l21;
  if (!(d2 > 0.0)) throw SingularPointBlock(index);
  const double largest = std::max({a00, d1, d2});
  const double smallest = std::min({a00, d1, d2});
  if (smallest < 1e-12 * largest) throw SingularPointBlock(index);
  const double l22 = std::sqrt(d2);

  // M = L^-1 (lower triangular), V^-1 = M^T M.
  Eigen::Matrix3d inv_l = Eigen::Matrix3d::Zero();
  inv_l(0, 0) = 1.0 / l00;
  inv_l(1, 1) = 1.0 / l11;
  inv_l(2, 2) = 1.0 / l22;
  inv_l(1, 0) = -l10 * inv_l(0, 0) / l11;
  inv_l(2, 1) = -l21 * inv_l(1, 1) / l22;
  inv_l(2, 0) = -(l20 * inv_l(0, 0) + l21 * inv_l(1, 0)) / l22;
  return inv_l.transpose() * inv_l;
}

std::vector<Eigen::Matrix3d> invert_point_blocks(const BlockNormalEquations& ne) {
  std::vector<Eigen::Matrix3d> out(ne.V.size());
  for (std::size_t i = 0; i < ne.V.size(); ++i) out[i] = invert_point_block(ne.V[i], i);
  return out;
}

Eigen::VectorXd SchurSystem::apply(const Eigen::VectorXd& v) const {
  if (dense_) return dense_matrix_ * v;
  return sparse_matrix_ * v;
}

Eigen::MatrixXd SchurSystem::diagonal_block(int camera) const {
  const int dc = block_size_;
  if (dense_) return dense_matrix_.block(camera * dc, camera * dc, dc, dc);
  return Eigen::MatrixXd(sparse_matrix_.block(camera * dc, camera * dc, dc, dc));
}

Eigen::MatrixXd SchurSystem::to_dense() const {
  if (dense_) return dense_matrix_;
  return Eigen::MatrixXd(sparse_matrix_);
}

SchurSystem schur_reduce(const BlockNormalEquations& ne, SchurStorage storage) {
  const BlockStructure& st = ne.structure;
  const int dc = st.camera_block_size;
  const int m = st.num_cameras;

  SchurSystem sys;
  sys.block_size_ = dc;
  sys.v_inverse_ = invert_point_blocks(ne);
  sys.y_.resize(ne.W.size());
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    sys.y_[k].noalias() = ne.W[k] * sys.v_inverse_[st.block_point[k]];
  }
  sys.rhs_ = ne.camera_rhs();
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    sys.rhs_.segment(st.block_camera[k] * dc, dc).noalias() -= sys.y_[k] * ne.rp[st.block_point[k]];
  }

  if (storage == SchurStorage::Auto) {
    storage = m * dc <= 5000 ? SchurStorage::Dense : SchurStorage::BlockSparse;
  }
  sys.dense_ = storage == SchurStorage::Dense;

  if (sys.dense_) {
    Eigen::MatrixXd& s = sys.dense_matrix_;
    s.setZero(m * dc, m * dc);
    for (int j = 0; j < m; ++j) s.block(j * dc, j * dc, dc, dc) = ne.U[j];
    for (int i = 0; i < st.num_points; ++i) {
      const auto ids = st.blocks_of_point(i);
      for (int a : ids) {
        const int j = st.block_camera[a];
        for (int b : ids) {
          const int k = st.block_camera[b];
          s.block(j * dc, k * dc, dc, dc).noalias() -= sys.y_[a] * ne.W[b].transpose();
        }
      }
    }
  } else {
    // Camera covisibility pattern; blocks accumulated in (point, pair) order.
    std::map<std::pair<int, int>, Eigen::MatrixXd> blocks;
    for (int j = 0; j < m; ++j) blocks.emplace(std::make_pair(j, j), ne.U[j]);
    for (int i = 0; i < st.num_points; ++i) {
      const auto ids = st.blocks_of_point(i);
      for (int a : ids) {
        const int j = st.block_camera[a];
        for (int b : ids) {
          const int k = st.block_camera[b];
          auto [it, inserted] =
              blocks.try_emplace(std::make_pair(j, k), Eigen::MatrixXd::Zero(dc, dc));
          it->second.noalias() -= sys.y_[a] * ne.W[b].transpose();
        }
      }
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(blocks.size() * dc * dc);
    for (const auto& [key, block] : blocks) {
      for (int c = 0; c < dc; ++c) {
        for (int r = 0; r < dc; ++r) {
          triplets.emplace_back(key.first * dc + r, key.second * dc + c, block(r, c));
        }
      }
    }
    sys.sparse_matrix_.resize(m * dc, m * dc);
    sys.sparse_matrix_.setFromTriplets(triplets.begin(), triplets.end());
  }
  return sys;
}

Eigen::VectorXd back_substitute(const BlockNormalEquations& ne,
                                std::span<const Eigen::Matrix3d> v_inverse,
                                const Eigen::VectorXd& dc) {
  const BlockStructure& st = ne.structure;
  const int d = st.camera_block_size;
  Eigen::VectorXd dp(st.point_dim());
  for (int i = 0; i < st.num_points; ++i) {
    Eigen::Vector3d rhs = ne.rp[i];
    for (int a : st.blocks_of_point(i)) {
      rhs.noalias() -= ne.W[a].transpose() * dc.segment(st.block_camera[a] * d, d);
    }
    dp.segment<3>(3 * i) = v_inverse[i] * rhs;
  }
  return dp;
}

Eigen::VectorXd back_substitute(const BlockNormalEquations& ne, const Eigen::VectorXd& dc) {
  const auto v_inverse = invert_point_blocks(ne);
  return back_substitute(ne, v_inverse, dc);
}

Eigen::VectorXd apply_hessian(const BlockNormalEquations& ne, const Eigen::VectorXd& v) {
  const BlockStructure& st = ne.structure;
  const int d = st.camera_block_size;
  const int offset = st.camera_dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(st.dim());
  for (int j = 0; j < st.num_cameras; ++j) {
    out.segment(j * d, d).noalias() = ne.U[j] * v.segment(j * d, d);
  }
  for (int i = 0; i < st.num_points; ++i) {
    out.segment<3>(offset + 3 * i).noalias() = ne.V[i] * v.segment<3>(offset + 3 * i);
  }
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    const int j = st.block_camera[k];
    const int i = st.block_point[k];
    out.segment(j * d, d).noalias() += ne.W[k] * v.segment<3>(offset + 3 * i);
    out.segment<3>(offset + 3 * i).noalias() += ne.W[k].transpose() * v.segment(j * d, d);
  }
  return out;
}

Eigen::VectorXd apply_schur(const BlockNormalEquations& ne,
                            std::span<const Eigen::Matrix3d> v_inverse,
                            const Eigen::VectorXd& v) {
  const BlockStructure& st = ne.structure;
  const int d = st.camera_block_size;
  Eigen::VectorXd out(st.camera_dim());
  for (int j = 0; j < st.num_cameras; ++j) {
    out.segment(j * d, d).noalias() = ne.U[j] * v.segment(j * d, d);
  }
  for (int i = 0; i < st.num_points; ++i) {
    const auto ids = st.blocks_of_point(i);
    Eigen::Vector3d wt_v = Eigen::Vector3d::Zero();
    for (int a : ids) wt_v.noalias() += ne.W[a].transpose() * v.segment(st.block_camera[a] * d, d);
    const Eigen::Vector3d tmp = v_inverse[i] * wt_v;
    for (int a : ids) out.segment(st.block_camera[a] * d, d).noalias() -= ne.W[a] * tmp;
  }
  return out;
}

Eigen::VectorXd apply_schur(const BlockNormalEquations& ne, const Eigen::VectorXd& v) {
  const auto v_inverse = invert_point_blocks(ne);
  return apply_schur(ne, v_inverse, v);
}

Eigen::VectorXd schur_rhs(const BlockNormalEquations& ne,
                          std::span<const Eigen::Matrix3d> v_inverse) {
  const BlockStructure& st = ne.structure;
  const int d = st.camera_block_size;
  Eigen::VectorXd out = ne.camera_rhs();
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    const int i = st.block_point[k];
    out.segment(st.block_camera[k] * d, d).noalias() -= ne.W[k] * (v_inverse[i] * ne.rp[i]);
  }
  return out;
}

std::vector<Eigen::MatrixXd> schur_diagonal_blocks(const BlockNormalEquations& ne,
                                                   std::span<const Eigen::Matrix3d> v_inverse) {
  const BlockStructure& st = ne.structure;
  std::vector<Eigen::MatrixXd> out = ne.U;
  for (std::size_t k = 0; k < ne.W.size(); ++k) {
    out[st.block_camera[k]].noalias() -=
        ne.W[k] * v_inverse[st.block_point[k]] * ne.W[k].transpose();
  }
  return out;
}

}  // namespace ba
