#pragma once

// Block form of the (augmented) normal equations
//
//   [ U   W ] [dc]   [r_c]
//   [ W^T V ] [dp] = [r_p]
//
// and its reduction to the camera-only Schur complement
//   S = U - W V^-1 W^T,  rhs = r_c - W V^-1 r_p.

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <span>
#include <vector>

#include "ba/problem.hpp"

namespace ba {

using CameraPointBlock = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Sparsity of W: one block per observation, in problem observation order.
struct BlockStructure {
  int num_cameras = 0;
  int num_points = 0;
  int camera_block_size = 0;
  std::vector<int> block_camera;
  std::vector<int> block_point;
  std::vector<int> point_offsets;  // CSR: blocks of point i
  std::vector<int> point_blocks;

  static BlockStructure from_problem(const Problem& problem);

  int camera_dim() const { return num_cameras * camera_block_size; }
  int point_dim() const { return 3 * num_points; }
  int dim() const { return camera_dim() + point_dim(); }
  std::span<const int> blocks_of_point(int point) const {
    return {point_blocks.data() + point_offsets[point],
            static_cast<std::size_t>(point_offsets[point + 1] - point_offsets[point])};
  }
};

struct BlockNormalEquations {
  BlockStructure structure;
  std::vector<Eigen::MatrixXd> U;   // d_c x d_c per camera
  std::vector<Eigen::Matrix3d> V;   // 3 x 3 per point
  std::vector<CameraPointBlock> W;  // d_c x 3 per observation
  std::vector<Eigen::VectorXd> rc;
  std::vector<Eigen::Vector3d> rp;
  double lambda = 0.0;

  int camera_dim() const { return structure.camera_dim(); }
  int point_dim() const { return structure.point_dim(); }
  int dim() const { return structure.dim(); }

  // [r_c; r_p] stacked.
  Eigen::VectorXd rhs() const;
  Eigen::VectorXd camera_rhs() const;
  Eigen::VectorXd point_rhs() const;
};

BlockNormalEquations assemble(const Problem& problem, const JacobianBlocks& blocks);

// Assembles only the listed observations (indices into problem order).
BlockNormalEquations assemble(const Problem& problem, const JacobianBlocks& blocks,
                              std::span<const int> observations);

// U_j + lambda I and V_i + lambda I.
BlockNormalEquations augment(const BlockNormalEquations& ne, double lambda);

// Adds weight * |X_i - anchor_i|^2 to the linearized model for every point:
// V_i += weight I, r_p_i += weight (anchor_i - X_i).
void add_point_prior(BlockNormalEquations& ne, double weight,
                     std::span<const Eigen::Vector3d> anchors, const PointVector& points);

// Inverse of a 3x3 SPD block through a closed-form Cholesky factor. Throws
// SingularPointBlock(index) when the smallest pivot is below 1e-12 times the
// largest.
Eigen::Matrix3d invert_point_block(const Eigen::Matrix3d& v, std::size_t index);

std::vector<Eigen::Matrix3d> invert_point_blocks(const BlockNormalEquations& ne);

enum class SchurStorage { Dense, BlockSparse, Auto };

// Explicit reduced camera system with cached Y_ij = W_ij V_i^-1.
class SchurSystem {
 public:
  bool is_dense() const { return dense_; }
  int dim() const { return static_cast<int>(rhs_.size()); }
  const Eigen::MatrixXd& dense() const { return dense_matrix_; }
  const Eigen::SparseMatrix<double>& sparse() const { return sparse_matrix_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  const std::vector<CameraPointBlock>& Y() const { return y_; }
  const std::vector<Eigen::Matrix3d>& v_inverse() const { return v_inverse_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd diagonal_block(int camera) const;
  Eigen::MatrixXd to_dense() const;

 private:
  friend SchurSystem schur_reduce(const BlockNormalEquations&, SchurStorage);
  bool dense_ = true;
  int block_size_ = 0;
  Eigen::MatrixXd dense_matrix_;
  Eigen::SparseMatrix<double> sparse_matrix_;
  Eigen::VectorXd rhs_;
  std::vector<CameraPointBlock> y_;
  std::vector<Eigen::Matrix3d> v_inverse_;
};

// Auto picks dense storage when m * d_c <= 5000.
SchurSystem schur_reduce(const BlockNormalEquations& ne, SchurStorage storage = SchurStorage::Auto);

// dp_i = V_i^-1 (r_p_i - sum_j W_ij^T dc_j)
Eigen::VectorXd back_substitute(const BlockNormalEquations& ne, const Eigen::VectorXd& dc);
Eigen::VectorXd back_substitute(const BlockNormalEquations& ne,
                                std::span<const Eigen::Matrix3d> v_inverse,
                                const Eigen::VectorXd& dc);

// [U W; W^T V] v using the block structure only.
Eigen::VectorXd apply_hessian(const BlockNormalEquations& ne, const Eigen::VectorXd& v);

// U v - W V^-1 W^T v without forming S.
Eigen::VectorXd apply_schur(const BlockNormalEquations& ne,
                            std::span<const Eigen::Matrix3d> v_inverse,
                            const Eigen::VectorXd& v);
Eigen::VectorXd apply_schur(const BlockNormalEquations& ne, const Eigen::VectorXd& v);

// r_c - W V^-1 r_p
Eigen::VectorXd schur_rhs(const BlockNormalEquations& ne,
                          std::span<const Eigen::Matrix3d> v_inverse);

// Diagonal blocks S_jj = U_j - sum_i W_ij V_i^-1 W_ij^T, computed without S.
std::vector<Eigen::MatrixXd> schur_diagonal_blocks(const BlockNormalEquations& ne,
                                                   std::span<const Eigen::Matrix3d> v_inverse);

}  // namespace ba
