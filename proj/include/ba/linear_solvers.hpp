#pragma once

// Linear solvers for the per-iteration normal equations: dense and sparse
// Cholesky, conjugate gradients with inexact-Newton termination, block
// preconditioners (block Jacobi, generalized SSOR, block QR) and the
// block-QR preconditioned CG that works on the Jacobian directly.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ba/normal_equations.hpp"
#include "ba/problem.hpp"

namespace ba {

// Symmetric positive (semi)definite operator given only through products.
class LinearOperator {
 public:
  using Apply = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  LinearOperator(int dim, Apply apply) : dim_(dim), apply_(std::move(apply)) {}

  static LinearOperator from_matrix(Eigen::MatrixXd matrix);

  int dim() const { return dim_; }
  Eigen::VectorXd operator()(const Eigen::VectorXd& v) const { return apply_(v); }

 private:
  int dim_;
  Apply apply_;
};

struct CGConfig {
  double eta = 0.1;             // forcing constant: stop at |A x - b| <= eta |b|
  int max_iterations = 0;       // 0: max(100, 10 sqrt(dim))
  double absolute_tolerance = 0.0;
  bool record_iterates = false;
};

int default_max_iterations(int dim);

enum class CGStatus { Converged, MaxIterations };

struct CGResult {
  Eigen::VectorXd x;
  int iterations = 0;
  CGStatus status = CGStatus::Converged;
  double residual_norm = 0.0;  // |A x - b| recomputed at return
  double rhs_norm = 0.0;       // |b|
  std::vector<Eigen::VectorXd> iterates;

  bool converged() const { return status == CGStatus::Converged; }
  double relative_residual() const {
    return rhs_norm > 0.0 ? residual_norm / rhs_norm : residual_norm;
  }
};

// Applies M^-1. Immutable once built; copies share the factored state.
class Preconditioner {
 public:
  enum class Kind { None, BlockJacobi, Ssor, BlockQr };
  using Apply = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  Preconditioner(Kind kind, int dim, Apply apply)
      : kind_(kind), dim_(dim), apply_(std::move(apply)) {}

  static Preconditioner none(int dim);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& s) const { return apply_(s); }

 private:
  Kind kind_;
  int dim_;
  Apply apply_;
};

// Dense Cholesky solve; throws NotPositiveDefinite(pivot index).
Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& s, const Eigen::VectorXd& rhs);

// Dense or sparse (AMD-ordered simplicial LL^T) depending on storage.
Eigen::VectorXd cholesky_solve(const SchurSystem& s, const Eigen::VectorXd& rhs);

// Plain conjugate gradients from x0 = 0.
CGResult cg(const LinearOperator& a, const Eigen::VectorXd& b, const CGConfig& cfg = {});

// Preconditioned CG. Stops when |b - A x| <= max(eta |b|, absolute_tolerance).
CGResult pcg(const LinearOperator& a, const Preconditioner& m, const Eigen::VectorXd& b,
             const CGConfig& cfg = {}, const std::optional<Eigen::VectorXd>& x0 = std::nullopt);

// Block-diagonal preconditioner from explicit SPD blocks laid out contiguously.
Preconditioner make_block_jacobi(std::span<const Eigen::MatrixXd> blocks);

// diag(U_1..U_m, V_1..V_n) for the full system H.
Preconditioner make_block_jacobi(const BlockNormalEquations& ne);

// D(S): the camera diagonal blocks of S.
Preconditioner make_block_jacobi(const SchurSystem& s, int camera_block_size);

enum class SsorDiagonal { Identity, CameraBlocks, SchurDiagonal };

// Generalized SSOR preconditioner for H
//   M = [P wW; 0 V] diag(P, V)^-1 [P 0; wW^T V],  0 <= w < 2,
// applied through two block-triangular solves.
Preconditioner make_ssor(const BlockNormalEquations& ne, SsorDiagonal p, double omega);

// Triangular factors of the weighted block columns of J, extended by
// sqrt(damping) I rows when a damping term is positive. Point damping may
// exceed the camera damping when a quadratic point prior is folded in.
struct BlockQrFactors {
  std::vector<Eigen::MatrixXd> camera;  // upper triangular d_c x d_c
  std::vector<Eigen::Matrix3d> point;   // upper triangular 3 x 3
  double camera_damping = 0.0;
  double point_damping = 0.0;
};

BlockQrFactors block_qr_factor(const BlockStructure& structure, const JacobianBlocks& blocks,
                               std::span<const WeightMatrix> weights, double lambda = 0.0,
                               double point_prior = 0.0);

// M^-1 = R^-1 R^-T blockwise.
Preconditioner make_block_qr(const BlockQrFactors& factors, int camera_block_size);

// Norms of the camera and point halves of the true preconditioned normal
// residual, one entry per CG step (index 0 is the initial residual).
struct BlockQrTrace {
  std::vector<double> camera_residual;
  std::vector<double> point_residual;
};

// CG on (J E)^T (J E) xhat = (J E)^T r with E = diag(R_c^-1, R_p^-1), using
// the alternating zero structure of the residual. Returns the step in
// original coordinates, solving (J^T L J + D) dx = J^T L r + [0; g_p] where
// D holds the damping of `factors` and g_p is the optional point-prior
// right-hand side (3n entries). The residual and rhs norms in the result
// refer to the preconditioned system.
CGResult block_qr_cg(const BlockStructure& structure, const JacobianBlocks& blocks,
                     std::span<const WeightMatrix> weights, const Eigen::VectorXd& residual,
                     const BlockQrFactors& factors, const CGConfig& cfg = {},
                     BlockQrTrace* trace = nullptr,
                     const Eigen::VectorXd* point_prior_rhs = nullptr);

// The seven linear solver configurations.
enum class LinearSolverType {
  ExplicitDirect,
  ExplicitSparse,
  ExplicitJacobi,
  NormalJacobi,
  ImplicitJacobi,
  ImplicitSsor,
  BlockQr,
};

inline constexpr LinearSolverType kAllLinearSolvers[] = {
    LinearSolverType::ExplicitDirect, LinearSolverType::ExplicitSparse,
    LinearSolverType::ExplicitJacobi, LinearSolverType::NormalJacobi,
    LinearSolverType::ImplicitJacobi, LinearSolverType::ImplicitSsor,
    LinearSolverType::BlockQr};

std::string to_string(LinearSolverType type);
std::optional<LinearSolverType> parse_linear_solver(const std::string& name);

}  // namespace ba
