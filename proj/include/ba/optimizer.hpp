#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "ba/linear_solvers.hpp"
#include "ba/normal_equations.hpp"
#include "ba/problem.hpp"

namespace ba {

enum class OptimizerMode { GaussNewton, LevenbergMarquardt };

struct SolverOptions {
  OptimizerMode mode = OptimizerMode::LevenbergMarquardt;
  LinearSolverType linear_solver = LinearSolverType::ExplicitDirect;
  double lambda0 = 1e-4;
  double lambda_up = 2.0;
  double lambda_down = 3.0;
  double lambda_max = 1e32;
  int max_outer_iterations = 50;
  double function_tolerance = 1e-9;   // relative cost decrease
  double gradient_tolerance = 1e-10;  // on |J^T L r|_inf
  double parameter_tolerance = 1e-14; // relative step size
  LossFunction loss;
  CGConfig cg;
  double omega = 1.0;
  SsorDiagonal ssor_diagonal = SsorDiagonal::CameraBlocks;
};

// One linear solve plus trial evaluation. Rejected attempts are reported too.
struct IterationReport {
  int iteration = 0;  // outer (linearization) index
  double cost_before = 0.0;
  double cost_after = 0.0;  // +inf when the trial point violated cheirality
  double lambda = 0.0;
  int linear_iterations = 0;
  double linear_relative_residual = 0.0;
  bool linear_converged = true;  // false: CG hit MaxIterations
  bool linear_failed = false;    // factorization failed; lambda escalated
  double predicted_decrease = 0.0;
  double step_norm_camera = 0.0;
  double step_norm_point = 0.0;
  bool accepted = false;
  double wall_time_s = 0.0;
};

enum class TerminationReason {
  GradientTolerance,
  FunctionTolerance,
  ParameterTolerance,
  MaxIterations,
  DampingOverflow,
};

std::string to_string(TerminationReason reason);

// Quadratic pull of every point toward an anchor: weight * |X_i - anchor_i|^2
// is added to the objective.
struct PointPrior {
  double weight = 0.0;
  PointVector anchors;
};

struct SolveSummary {
  CameraVector cameras;
  PointVector points;
  std::vector<IterationReport> iterations;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double final_lambda = 0.0;
  int outer_iterations = 0;
  TerminationReason termination = TerminationReason::MaxIterations;
};

// The objective minimized by solve(): total_cost plus the prior term.
double objective(const Problem& problem, const PointPrior* prior);

struct LinearStep {
  Eigen::VectorXd camera;  // dc
  Eigen::VectorXd point;   // dp
  double predicted_decrease = 0.0;
  int linear_iterations = 0;
  double relative_residual = 0.0;
  bool converged = true;
};

// Everything the linear solvers need about the current linearization.
struct Linearization {
  const Problem& problem;
  const JacobianBlocks& blocks;
  const Eigen::VectorXd& residual;
  const BlockNormalEquations& ne;  // unaugmented, prior included
  const PointPrior* prior = nullptr;
};

// Solves (J^T L J + lambda I) [dc; dp] = [r_c; r_p] with the configured
// linear path. Throws NotPositiveDefinite, SingularPointBlock or
// RankDeficientColumn when the system cannot be factored at this lambda.
LinearStep lm_step(const Linearization& lin, double lambda, const SolverOptions& opts);

// accepted: lambda / lambda_down; rejected: lambda * lambda_up. Throws
// DampingOverflow past opts.lambda_max.
double update_damping(double lambda, bool accepted, const SolverOptions& opts);

// Applies a stacked step to the camera and point parameters.
void apply_step(Problem& problem, const Eigen::VectorXd& dc, const Eigen::VectorXd& dp);

SolveSummary solve(Problem problem, const SolverOptions& opts, const PointPrior* prior = nullptr);

}  // namespace ba
