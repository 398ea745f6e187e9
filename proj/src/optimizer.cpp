#include "ba/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace ba {

std::string to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::GradientTolerance: return "gradient_tolerance";
    case TerminationReason::FunctionTolerance: return "function_tolerance";
    case TerminationReason::ParameterTolerance: return "parameter_tolerance";
    case TerminationReason::MaxIterations: return "max_iterations";
    case TerminationReason::DampingOverflow: return "damping_overflow";
  }
  return "unknown";
}

double objective(const Problem& problem, const PointPrior* prior) {
  double cost = total_cost(problem);
  if (prior && prior->weight > 0.0) {
    double sum = 0.0;
    for (int i = 0; i < problem.num_points(); ++i) {
      sum += (problem.points()[i] - prior->anchors[i]).squaredNorm();
    }
    cost += prior->weight * sum;
  }
  return cost;
}

namespace {

void split_step(const Eigen::VectorXd& x, int camera_dim, LinearStep& out) {
  out.camera = x.head(camera_dim);
  out.point = x.tail(x.size() - camera_dim);
}

void take_cg(const CGResult& r, LinearStep& out) {
  out.linear_iterations = r.iterations;
  out.relative_residual = r.relative_residual();
  out.converged = r.converged();
}

}  // namespace

LinearStep lm_step(const Linearization& lin, double lambda, const SolverOptions& opts) {
  const BlockNormalEquations& ne = lin.ne;
  const BlockStructure& st = ne.structure;
  const int d = st.camera_block_size;
  const int nc = st.camera_dim();
  const BlockNormalEquations aug = augment(ne, lambda);

  LinearStep out;
  switch (opts.linear_solver) {
    case LinearSolverType::ExplicitDirect:
    case LinearSolverType::ExplicitSparse: {
      const SchurSystem s = schur_reduce(aug, opts.linear_solver == LinearSolverType::ExplicitDirect
                                                  ? SchurStorage::Dense
                                                  : SchurStorage::BlockSparse);
      out.camera = cholesky_solve(s, s.rhs());
      out.point = back_substitute(aug, s.v_inverse(), out.camera);
      const double rhs_norm = s.rhs().norm();
      const double res = (s.apply(out.camera) - s.rhs()).norm();
      out.relative_residual = rhs_norm > 0.0 ? res / rhs_norm : res;
      break;
    }
    case LinearSolverType::ExplicitJacobi: {
      const SchurSystem s = schur_reduce(aug, SchurStorage::Auto);
      const LinearOperator op(s.dim(), [&s](const Eigen::VectorXd& v) { return s.apply(v); });
      const CGResult r = pcg(op, make_block_jacobi(s, d), s.rhs(), opts.cg);
      take_cg(r, out);
      out.camera = r.x;
      out.point = back_substitute(aug, s.v_inverse(), out.camera);
      break;
    }
    case LinearSolverType::ImplicitJacobi: {
      const auto v_inverse = invert_point_blocks(aug);
      const LinearOperator op(nc, [&](const Eigen::VectorXd& v) {
        return apply_schur(aug, v_inverse, v);
      });
      const auto diag = schur_diagonal_blocks(aug, v_inverse);
      const CGResult r = pcg(op, make_block_jacobi(diag), schur_rhs(aug, v_inverse), opts.cg);
      take_cg(r, out);
      out.camera = r.x;
      out.point = back_substitute(aug, v_inverse, out.camera);
      break;
    }
    case LinearSolverType::NormalJacobi: {
      const LinearOperator op(aug.dim(),
                              [&aug](const Eigen::VectorXd& v) { return apply_hessian(aug, v); });
      const CGResult r = pcg(op, make_block_jacobi(aug), aug.rhs(), opts.cg);
      take_cg(r, out);
      split_step(r.x, nc, out);
      break;
    }
    case LinearSolverType::ImplicitSsor: {
      const auto v_inverse = invert_point_blocks(aug);
      const LinearOperator op(aug.dim(),
                              [&aug](const Eigen::VectorXd& v) { return apply_hessian(aug, v); });
      // Start with the point equations satisfied: x0 = [0; V^-1 r_p].
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(aug.dim());
      for (int i = 0; i < st.num_points; ++i) x0.segment<3>(nc + 3 * i) = v_inverse[i] * aug.rp[i];
      const CGResult r =
          pcg(op, make_ssor(aug, opts.ssor_diagonal, opts.omega), aug.rhs(), opts.cg, x0);
      take_cg(r, out);
      split_step(r.x, nc, out);
      break;
    }
    case LinearSolverType::BlockQr: {
      const double prior_weight = lin.prior ? lin.prior->weight : 0.0;
      const BlockQrFactors factors = block_qr_factor(st, lin.blocks, lin.problem.weights(),
                                                     lambda, prior_weight);
      Eigen::VectorXd prior_rhs;
      if (prior_weight > 0.0) {
        prior_rhs.resize(st.point_dim());
        for (int i = 0; i < st.num_points; ++i) {
          prior_rhs.segment<3>(3 * i) =
              prior_weight * (lin.prior->anchors[i] - lin.problem.points()[i]);
        }
      }
      const CGResult r = block_qr_cg(st, lin.blocks, lin.problem.weights(), lin.residual, factors,
                                     opts.cg, nullptr, prior_weight > 0.0 ? &prior_rhs : nullptr);
      take_cg(r, out);
      split_step(r.x, nc, out);
      break;
    }
  }

  // Decrease of the Gauss-Newton model: 2 dx^T b - dx^T H dx.
  Eigen::VectorXd dx(ne.dim());
  dx << out.camera, out.point;
  out.predicted_decrease = 2.0 * dx.dot(ne.rhs()) - dx.dot(apply_hessian(ne, dx));
  return out;
}

double update_damping(double lambda, bool accepted, const SolverOptions& opts) {
  if (accepted) return lambda / opts.lambda_down;
  const double next = lambda * opts.lambda_up;
  if (next > opts.lambda_max) throw DampingOverflow();
  return next;
}

void apply_step(Problem& problem, const Eigen::VectorXd& dc, const Eigen::VectorXd& dp) {
  const int d = problem.camera_block_size();
  CameraVector cameras = problem.cameras();
  for (int j = 0; j < problem.num_cameras(); ++j) {
    CameraParams<double> next =
        cameras[j].with_vector(cameras[j].to_vector() + dc.segment(j * d, d));
    next.pose.rotation = canonicalize_rotation<double>(next.pose.rotation);
    cameras[j] = next;
  }
  problem.set_cameras(std::move(cameras));
  PointVector points = problem.points();
  for (int i = 0; i < problem.num_points(); ++i) points[i] += dp.segment<3>(3 * i);
  problem.set_points(std::move(points));
}

SolveSummary solve(Problem problem, const SolverOptions& opts, const PointPrior* prior) {
  using Clock = std::chrono::steady_clock;
  const std::vector<WeightMatrix> base_weights = problem.weights();
  const bool robust = opts.loss.kind != LossFunction::Kind::Trivial;

  SolveSummary summary;
  double lambda = opts.lambda0;
  if (robust) problem.set_weights(robust_weights(problem, opts.loss, base_weights));
  double cost = objective(problem, prior);
  summary.initial_cost = cost;
  summary.termination = TerminationReason::MaxIterations;

  bool stop = false;
  int outer = 0;
  for (; outer < opts.max_outer_iterations && !stop; ++outer) {
    if (robust && outer > 0) {
      problem.set_weights(robust_weights(problem, opts.loss, base_weights));
      cost = objective(problem, prior);
    }
    const JacobianBlocks blocks = jacobian_blocks(problem);
    const Eigen::VectorXd residual = residual_vector(problem);
    BlockNormalEquations ne = assemble(problem, blocks);
    if (prior && prior->weight > 0.0) {
      add_point_prior(ne, prior->weight, prior->anchors, problem.points());
    }
    const Eigen::VectorXd gradient = ne.rhs();
    if (gradient.size() == 0 || gradient.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      summary.termination = TerminationReason::GradientTolerance;
      break;
    }
    const double x_norm = problem.parameter_vector().norm();
    const Linearization lin{problem, blocks, residual, ne, prior};

    bool undamped = opts.mode == OptimizerMode::GaussNewton;
    bool accepted = false;
    while (!accepted) {
      const auto start = Clock::now();
      IterationReport rep;
      rep.iteration = outer;
      rep.cost_before = cost;
      rep.lambda = undamped ? 0.0 : lambda;
      rep.cost_after = std::numeric_limits<double>::infinity();

      Problem trial = problem;
      double step_norm = 0.0;
      try {
        const LinearStep step = lm_step(lin, rep.lambda, opts);
        rep.linear_iterations = step.linear_iterations;
        rep.linear_relative_residual = step.relative_residual;
        rep.linear_converged = step.converged;
        rep.predicted_decrease = step.predicted_decrease;
        rep.step_norm_camera = step.camera.norm();
        rep.step_norm_point = step.point.norm();
        step_norm = std::hypot(rep.step_norm_camera, rep.step_norm_point);
        if (step.camera.allFinite() && step.point.allFinite()) {
          apply_step(trial, step.camera, step.point);
          try {
            rep.cost_after = objective(trial, prior);
          } catch (const CheiralityError&) {
            // Rejected like any other cost increase.
          }
        }
      } catch (const NotPositiveDefinite&) {
        rep.linear_failed = true;
      } catch (const SingularPointBlock&) {
        rep.linear_failed = true;
      } catch (const RankDeficientColumn&) {
        rep.linear_failed = true;
      }
      accepted = rep.cost_after < cost;
      rep.accepted = accepted;
      rep.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
      summary.iterations.push_back(rep);

      const bool tiny_step =
          !rep.linear_failed && step_norm <= opts.parameter_tolerance * (x_norm + opts.parameter_tolerance);
      if (accepted) {
        const double relative_decrease = (cost - rep.cost_after) / cost;
        problem = std::move(trial);
        cost = rep.cost_after;
        if (!undamped) lambda = update_damping(lambda, true, opts);
        if (relative_decrease < opts.function_tolerance) {
          summary.termination = TerminationReason::FunctionTolerance;
          stop = true;
        } else if (tiny_step) {
          summary.termination = TerminationReason::ParameterTolerance;
          stop = true;
        }
      } else if (undamped) {
        // The undamped system was singular or the step failed; fall back to
        // damping for the rest of this linearization.
        undamped = false;
      } else if (tiny_step) {
        summary.termination = TerminationReason::ParameterTolerance;
        stop = true;
        break;
      } else {
        try {
          lambda = update_damping(lambda, false, opts);
        } catch (const DampingOverflow&) {
          summary.termination = TerminationReason::DampingOverflow;
          stop = true;
          break;
        }
      }
    }
  }

  summary.outer_iterations = outer;
  summary.cameras = problem.cameras();
  summary.points = problem.points();
  summary.final_cost = cost;
  summary.final_lambda = lambda;
  return summary;
}

}  // namespace ba
