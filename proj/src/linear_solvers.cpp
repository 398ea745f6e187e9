#include "ba/linear_solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ba {

LinearOperator LinearOperator::from_matrix(Eigen::MatrixXd matrix) {
  auto shared = std::make_shared<const Eigen::MatrixXd>(std::move(matrix));
  const int dim = static_cast<int>(shared->rows());
  return LinearOperator(dim, [shared](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return *shared * v;
  });
}

int default_max_iterations(int dim) {
  return std::max(100, static_cast<int>(std::ceil(10.0 * std::sqrt(static_cast<double>(dim)))));
}

Preconditioner Preconditioner::none(int dim) {
  return Preconditioner(Kind::None, dim, [](const Eigen::VectorXd& s) { return s; });
}

Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& s, const Eigen::VectorXd& rhs) {
  const Eigen::Index n = s.rows();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> l =
      Eigen::MatrixXd::Zero(n, n);
  const double scale = n > 0 ? s.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double floor = 1e-13 * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = s(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > floor) || !std::isfinite(d)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (s(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  Eigen::VectorXd y = l.triangularView<Eigen::Lower>().solve(rhs);
  return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd cholesky_solve(const SchurSystem& s, const Eigen::VectorXd& rhs) {
  if (s.is_dense()) return cholesky_solve(s.dense(), rhs);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt(
      s.sparse());
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  Eigen::VectorXd x = llt.solve(rhs);
  if (llt.info() != Eigen::Success || !x.allFinite()) throw NotPositiveDefinite(-1);
  return x;
}

CGResult cg(const LinearOperator& a, const Eigen::VectorXd& b, const CGConfig& cfg) {
  const int max_iterations =
      cfg.max_iterations > 0 ? cfg.max_iterations : default_max_iterations(a.dim());
  CGResult out;
  out.rhs_norm = b.norm();
  const double threshold = std::max(cfg.eta * out.rhs_norm, cfg.absolute_tolerance);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd s = b;
  Eigen::VectorXd p = s;
  double ss = s.squaredNorm();
  int k = 0;
  bool done = std::sqrt(ss) <= threshold;
  while (!done && k < max_iterations) {
    const Eigen::VectorXd ap = a(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = ss / pap;
    x += alpha * p;
    s -= alpha * ap;
    ++k;
    if (cfg.record_iterates) out.iterates.push_back(x);
    const double ss_next = s.squaredNorm();
    if (std::sqrt(ss_next) <= threshold) {
      // Confirm against the true residual before declaring convergence.
      s = b - a(x);
      ss = s.squaredNorm();
      if (std::sqrt(ss) <= threshold) {
        done = true;
        break;
      }
      p = s;
      continue;
    }
    const double beta = ss_next / ss;
    p = s + beta * p;
    ss = ss_next;
  }
  out.x = std::move(x);
  out.iterations = k;
  out.residual_norm = (b - a(out.x)).norm();
  out.status = out.residual_norm <= threshold ? CGStatus::Converged : CGStatus::MaxIterations;
  return out;
}

CGResult pcg(const LinearOperator& a, const Preconditioner& m, const Eigen::VectorXd& b,
             const CGConfig& cfg, const std::optional<Eigen::VectorXd>& x0) {
  const int max_iterations =
      cfg.max_iterations > 0 ? cfg.max_iterations : default_max_iterations(a.dim());
  CGResult out;
  out.rhs_norm = b.norm();
  const double threshold = std::max(cfg.eta * out.rhs_norm, cfg.absolute_tolerance);

  Eigen::VectorXd x = x0 ? *x0 : Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd s = x0 ? Eigen::VectorXd(b - a(x)) : b;
  Eigen::VectorXd z = m.apply(s);
  Eigen::VectorXd p = z;
  double gamma = s.dot(z);
  int k = 0;
  bool done = s.norm() <= threshold;
  while (!done && k < max_iterations) {
    const Eigen::VectorXd ap = a(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = gamma / pap;
    x += alpha * p;
    s -= alpha * ap;
    ++k;
    if (cfg.record_iterates) out.iterates.push_back(x);
    if (s.norm() <= threshold) {
      s = b - a(x);
      if (s.norm() <= threshold) {
        done = true;
        break;
      }
      z = m.apply(s);
      p = z;
      gamma = s.dot(z);
      continue;
    }
    z = m.apply(s);
    const double gamma_next = s.dot(z);
    const double beta = gamma_next / gamma;
    p = z + beta * p;
    gamma = gamma_next;
  }
  out.x = std::move(x);
  out.iterations = k;
  out.residual_norm = (b - a(out.x)).norm();
  out.status = out.residual_norm <= threshold ? CGStatus::Converged : CGStatus::MaxIterations;
  return out;
}

namespace {

struct BlockDiagonalSolver {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  std::vector<int> offsets;

  explicit BlockDiagonalSolver(std::span<const Eigen::MatrixXd> blocks) {
    factors.reserve(blocks.size());
    offsets.reserve(blocks.size() + 1);
    offsets.push_back(0);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      factors.emplace_back(blocks[k]);
      if (factors.back().info() != Eigen::Success) {
        throw NotPositiveDefinite(static_cast<std::ptrdiff_t>(k));
      }
      offsets.push_back(offsets.back() + static_cast<int>(blocks[k].rows()));
    }
  }

  int dim() const { return offsets.back(); }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    for (std::size_t k = 0; k < factors.size(); ++k) {
      const int size = offsets[k + 1] - offsets[k];
      out.segment(offsets[k], size) = factors[k].solve(v.segment(offsets[k], size));
    }
    return out;
  }
};

}  // namespace

Preconditioner make_block_jacobi(std::span<const Eigen::MatrixXd> blocks) {
  auto solver = std::make_shared<const BlockDiagonalSolver>(blocks);
  return Preconditioner(Preconditioner::Kind::BlockJacobi, solver->dim(),
                        [solver](const Eigen::VectorXd& s) { return solver->solve(s); });
}

Preconditioner make_block_jacobi(const BlockNormalEquations& ne) {
  std::vector<Eigen::MatrixXd> blocks(ne.U.begin(), ne.U.end());
  for (const auto& v : ne.V) blocks.emplace_back(v);
  return make_block_jacobi(blocks);
}

Preconditioner make_block_jacobi(const SchurSystem& s, int camera_block_size) {
  const int m = s.dim() / camera_block_size;
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(m);
  for (int j = 0; j < m; ++j) blocks.push_back(s.diagonal_block(j));
  return make_block_jacobi(blocks);
}

Preconditioner make_ssor(const BlockNormalEquations& ne, SsorDiagonal p, double omega) {
  if (!(omega >= 0.0 && omega < 2.0)) throw Error("SSOR omega must lie in [0, 2)");

  struct State {
    BlockNormalEquations ne;
    std::vector<Eigen::Matrix3d> v_inverse;
    std::optional<BlockDiagonalSolver> p_solver;  // empty: P = I
    double omega;
  };
  auto state = std::make_shared<State>();
  state->ne = ne;
  state->omega = omega;
  try {
    state->v_inverse = invert_point_blocks(ne);
  } catch (const SingularPointBlock& e) {
    throw NotPositiveDefinite(static_cast<std::ptrdiff_t>(ne.structure.num_cameras + e.point()));
  }
  if (p == SsorDiagonal::CameraBlocks) {
    state->p_solver.emplace(ne.U);
  } else if (p == SsorDiagonal::SchurDiagonal) {
    state->p_solver.emplace(schur_diagonal_blocks(ne, state->v_inverse));
  }

  const int dim = ne.dim();
  // z_c = P^-1 (s_c - w W V^-1 s_p),  z_p = V^-1 (s_p - w W^T z_c)
  auto apply = [state](const Eigen::VectorXd& s) -> Eigen::VectorXd {
    const BlockNormalEquations& ne = state->ne;
    const BlockStructure& st = ne.structure;
    const int d = st.camera_block_size;
    const int offset = st.camera_dim();
    const double w = state->omega;

    std::vector<Eigen::Vector3d> v_inv_sp(st.num_points);
    for (int i = 0; i < st.num_points; ++i) {
      v_inv_sp[i] = state->v_inverse[i] * s.segment<3>(offset + 3 * i);
    }
    Eigen::VectorXd tc = s.head(offset);
    if (w != 0.0) {
      for (std::size_t k = 0; k < ne.W.size(); ++k) {
        tc.segment(st.block_camera[k] * d, d).noalias() -= w * (ne.W[k] * v_inv_sp[st.block_point[k]]);
      }
    }
    Eigen::VectorXd z(s.size());
    z.head(offset) = state->p_solver ? state->p_solver->solve(tc) : tc;
    for (int i = 0; i < st.num_points; ++i) {
      Eigen::Vector3d tp = s.segment<3>(offset + 3 * i);
      if (w != 0.0) {
        for (int a : st.blocks_of_point(i)) {
          tp.noalias() -= w * (ne.W[a].transpose() * z.segment(st.block_camera[a] * d, d));
        }
      }
      z.segment<3>(offset + 3 * i) = state->v_inverse[i] * tp;
    }
    return z;
  };
  return Preconditioner(Preconditioner::Kind::Ssor, dim, apply);
}

namespace {

// Upper-triangular R with non-negative diagonal from a Householder QR.
template <int Cols>
Eigen::Matrix<double, Cols, Cols> householder_r(const Eigen::Matrix<double, Eigen::Dynamic, Cols>& a,
                                                 int cols) {
  Eigen::Matrix<double, Cols, Cols> r(cols, cols);
  r.setZero();
  if (a.rows() < cols) return r;  // rank deficient; caught by the caller
  Eigen::HouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, Cols>> qr(a);
  r = qr.matrixQR().topRows(cols).template triangularView<Eigen::Upper>();
  for (int k = 0; k < cols; ++k) {
    if (r(k, k) < 0.0) r.row(k) *= -1.0;
  }
  return r;
}

template <typename Mat>
bool has_full_rank(const Mat& r) {
  const double largest = r.diagonal().cwiseAbs().maxCoeff();
  const double smallest = r.diagonal().cwiseAbs().minCoeff();
  return largest > 0.0 && smallest > 1e-12 * largest;
}

std::vector<Eigen::Matrix2d> weight_roots(std::span<const WeightMatrix> weights) {
  std::vector<Eigen::Matrix2d> roots(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const WeightMatrix& w = weights[k];
    if (w(0, 1) == 0.0 && w(1, 0) == 0.0) {
      roots[k] = Eigen::Vector2d(std::sqrt(std::max(w(0, 0), 0.0)),
                                 std::sqrt(std::max(w(1, 1), 0.0)))
                     .asDiagonal();
    } else {
      roots[k] = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(w).operatorSqrt();
    }
  }
  return roots;
}

}  // namespace

BlockQrFactors block_qr_factor(const BlockStructure& st, const JacobianBlocks& blocks,
                               std::span<const WeightMatrix> weights, double lambda,
                               double point_prior) {
  const int d = st.camera_block_size;
  const auto roots = weight_roots(weights);
  const double camera_root = std::sqrt(lambda);
  const double point_root = std::sqrt(lambda + point_prior);
  const int extra_c = lambda > 0.0 ? d : 0;
  const int extra_p = lambda + point_prior > 0.0 ? 3 : 0;

  std::vector<int> count(st.num_cameras, 0);
  for (int c : st.block_camera) ++count[c];

  BlockQrFactors out;
  out.camera_damping = lambda;
  out.point_damping = lambda + point_prior;
  out.camera.resize(st.num_cameras);
  std::vector<int> fill(st.num_cameras, 0);
  std::vector<Eigen::MatrixXd> stacked(st.num_cameras);
  for (int j = 0; j < st.num_cameras; ++j) {
    stacked[j].setZero(2 * count[j] + extra_c, d);
    if (extra_c) stacked[j].bottomRows(d) = camera_root * Eigen::MatrixXd::Identity(d, d);
  }
  for (std::size_t k = 0; k < blocks.camera.size(); ++k) {
    const int j = st.block_camera[k];
    stacked[j].middleRows(2 * fill[j]++, 2) = roots[k] * blocks.camera[k];
  }
  for (int j = 0; j < st.num_cameras; ++j) {
    out.camera[j] = householder_r<Eigen::Dynamic>(stacked[j], d);
    if (!has_full_rank(out.camera[j])) throw RankDeficientColumn(j, true);
  }

  out.point.resize(st.num_points);
  for (int i = 0; i < st.num_points; ++i) {
    const auto ids = st.blocks_of_point(i);
    Eigen::Matrix<double, Eigen::Dynamic, 3> column(2 * ids.size() + extra_p, 3);
    int row = 0;
    for (int a : ids) {
      column.middleRows<2>(row) = roots[a] * blocks.point[a];
      row += 2;
    }
    if (extra_p) column.bottomRows<3>() = point_root * Eigen::Matrix3d::Identity();
    out.point[i] = householder_r<3>(column, 3);
    if (!has_full_rank(out.point[i])) throw RankDeficientColumn(i, false);
  }
  return out;
}

Preconditioner make_block_qr(const BlockQrFactors& factors, int camera_block_size) {
  auto f = std::make_shared<const BlockQrFactors>(factors);
  const int offset = static_cast<int>(f->camera.size()) * camera_block_size;
  const int dim = offset + 3 * static_cast<int>(f->point.size());
  return Preconditioner(
      Preconditioner::Kind::BlockQr, dim,
      [f, offset, camera_block_size](const Eigen::VectorXd& s) -> Eigen::VectorXd {
        const int d = camera_block_size;
        Eigen::VectorXd z(s.size());
        for (std::size_t j = 0; j < f->camera.size(); ++j) {
          const auto r = f->camera[j].triangularView<Eigen::Upper>();
          z.segment(j * d, d) = r.solve(r.transpose().solve(s.segment(j * d, d)));
        }
        for (std::size_t i = 0; i < f->point.size(); ++i) {
          const auto r = f->point[i].triangularView<Eigen::Upper>();
          z.segment<3>(offset + 3 * i) = r.solve(r.transpose().solve(s.segment<3>(offset + 3 * i)));
        }
        return z;
      });
}

namespace {

// The preconditioned Jacobian Jhat = [L^1/2 J; sqrt(D) I] E in block form.
// Data-space vectors hold the 2N observation rows, then the camera damping
// rows (when camera damping > 0), then the point damping rows (when point
// damping > 0).
class PreconditionedJacobian {
 public:
  PreconditionedJacobian(const BlockStructure& st, const JacobianBlocks& blocks,
                         std::span<const WeightMatrix> weights, const BlockQrFactors& factors)
      : st_(st),
        factors_(factors),
        camera_root_(std::sqrt(factors.camera_damping)),
        point_root_(std::sqrt(factors.point_damping)),
        camera_rows_(factors.camera_damping > 0.0 ? st.camera_dim() : 0),
        point_rows_(factors.point_damping > 0.0 ? st.point_dim() : 0) {
    const auto roots = weight_roots(weights);
    a_.resize(blocks.camera.size());
    b_.resize(blocks.point.size());
    for (std::size_t k = 0; k < a_.size(); ++k) {
      a_[k] = roots[k] * blocks.camera[k];
      b_[k] = roots[k] * blocks.point[k];
    }
    weight_roots_ = roots;
  }

  int d() const { return st_.camera_block_size; }
  int camera_dim() const { return st_.camera_dim(); }
  int point_dim() const { return st_.point_dim(); }
  int observation_rows() const { return 2 * static_cast<int>(a_.size()); }
  int data_dim() const {
    return observation_rows() + camera_rows_ + point_rows_;
  }

  // Weighted residual; a point-prior rhs g_p enters through the point
  // damping rows as g_p / sqrt(point damping).
  Eigen::VectorXd weighted(const Eigen::VectorXd& r, const Eigen::VectorXd* point_rhs) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(data_dim());
    for (std::size_t k = 0; k < a_.size(); ++k) {
      out.segment<2>(2 * k) = weight_roots_[k] * r.segment<2>(2 * k);
    }
    if (point_rhs && point_rows_) out.tail(point_rows_) = *point_rhs / point_root_;
    return out;
  }

  // E_c xhat_c and E_p xhat_p.
  Eigen::VectorXd unscale_camera(const Eigen::VectorXd& xc) const {
    Eigen::VectorXd out(xc.size());
    for (int j = 0; j < st_.num_cameras; ++j) {
      out.segment(j * d(), d()) =
          factors_.camera[j].triangularView<Eigen::Upper>().solve(xc.segment(j * d(), d()));
    }
    return out;
  }
  Eigen::VectorXd unscale_point(const Eigen::VectorXd& xp) const {
    Eigen::VectorXd out(xp.size());
    for (int i = 0; i < st_.num_points; ++i) {
      out.segment<3>(3 * i) =
          factors_.point[i].triangularView<Eigen::Upper>().solve(xp.segment<3>(3 * i));
    }
    return out;
  }

  Eigen::VectorXd apply_camera(const Eigen::VectorXd& xc) const {
    const Eigen::VectorXd x = unscale_camera(xc);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(data_dim());
    for (std::size_t k = 0; k < a_.size(); ++k) {
      out.segment<2>(2 * k).noalias() = a_[k] * x.segment(st_.block_camera[k] * d(), d());
    }
    if (camera_rows_) out.segment(observation_rows(), camera_rows_) = camera_root_ * x;
    return out;
  }
  Eigen::VectorXd apply_point(const Eigen::VectorXd& xp) const {
    const Eigen::VectorXd x = unscale_point(xp);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(data_dim());
    for (std::size_t k = 0; k < b_.size(); ++k) {
      out.segment<2>(2 * k).noalias() = b_[k] * x.segment<3>(3 * st_.block_point[k]);
    }
    if (point_rows_) out.tail(point_rows_) = point_root_ * x;
    return out;
  }

  Eigen::VectorXd transpose_camera(const Eigen::VectorXd& y) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(camera_dim());
    for (std::size_t k = 0; k < a_.size(); ++k) {
      g.segment(st_.block_camera[k] * d(), d()).noalias() += a_[k].transpose() * y.segment<2>(2 * k);
    }
    if (camera_rows_) g += camera_root_ * y.segment(observation_rows(), camera_rows_);
    for (int j = 0; j < st_.num_cameras; ++j) {
      g.segment(j * d(), d()) = factors_.camera[j]
                                    .triangularView<Eigen::Upper>()
                                    .transpose()
                                    .solve(g.segment(j * d(), d()));
    }
    return g;
  }
  Eigen::VectorXd transpose_point(const Eigen::VectorXd& y) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(point_dim());
    for (std::size_t k = 0; k < b_.size(); ++k) {
      g.segment<3>(3 * st_.block_point[k]).noalias() += b_[k].transpose() * y.segment<2>(2 * k);
    }
    if (point_rows_) g += point_root_ * y.tail(point_rows_);
    for (int i = 0; i < st_.num_points; ++i) {
      g.segment<3>(3 * i) =
          factors_.point[i].triangularView<Eigen::Upper>().transpose().solve(g.segment<3>(3 * i));
    }
    return g;
  }

 private:
  const BlockStructure& st_;
  const BlockQrFactors& factors_;
  double camera_root_;
  double point_root_;
  int camera_rows_;
  int point_rows_;
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> a_;
  std::vector<Eigen::Matrix<double, 2, 3>> b_;
  std::vector<Eigen::Matrix2d> weight_roots_;
};

}  // namespace

CGResult block_qr_cg(const BlockStructure& st, const JacobianBlocks& blocks,
                     std::span<const WeightMatrix> weights, const Eigen::VectorXd& residual,
                     const BlockQrFactors& factors, const CGConfig& cfg, BlockQrTrace* trace,
                     const Eigen::VectorXd* point_prior_rhs) {
  const PreconditionedJacobian jhat(st, blocks, weights, factors);
  const int nc = jhat.camera_dim();
  const int np = jhat.point_dim();
  const int max_iterations =
      cfg.max_iterations > 0 ? cfg.max_iterations : default_max_iterations(nc + np);

  const Eigen::VectorXd r = jhat.weighted(residual, point_prior_rhs);
  const Eigen::VectorXd b_c = jhat.transpose_camera(r);
  const Eigen::VectorXd b_p = jhat.transpose_point(r);
  const double rhs_norm = std::sqrt(b_c.squaredNorm() + b_p.squaredNorm());

  // The point columns of Jhat are orthonormal, so x_c = 0, x_p = b_p makes
  // the point half of the normal residual vanish.
  Eigen::VectorXd x_c = Eigen::VectorXd::Zero(nc);
  Eigen::VectorXd x_p = b_p;
  const Eigen::VectorXd data_residual = r - jhat.apply_point(x_p);
  Eigen::VectorXd s_c = jhat.transpose_camera(data_residual);
  Eigen::VectorXd s_p = Eigen::VectorXd::Zero(np);

  auto record = [&]() {
    if (!trace) return;
    const Eigen::VectorXd rt = r - jhat.apply_camera(x_c) - jhat.apply_point(x_p);
    trace->camera_residual.push_back(jhat.transpose_camera(rt).norm());
    trace->point_residual.push_back(jhat.transpose_point(rt).norm());
  };
  record();

  const double s0_norm = s_c.norm();
  const double threshold =
      std::max(cfg.eta * std::min(s0_norm, rhs_norm), cfg.absolute_tolerance);

  Eigen::VectorXd p_c = s_c;
  Eigen::VectorXd p_p = s_p;
  double gamma = s_c.squaredNorm();
  Eigen::VectorXd q = jhat.apply_camera(p_c);
  CGResult out;
  int k = 0;
  while (std::sqrt(gamma) > threshold && k < max_iterations) {
    const double qq = q.squaredNorm();
    if (!(qq > 0.0)) break;
    const double alpha = gamma / qq;
    x_c += alpha * p_c;
    x_p += alpha * p_p;
    const bool camera_half_live = (k % 2) == 1;  // s^{k+1} lives in this half
    if (camera_half_live) {
      s_c = -alpha * jhat.transpose_camera(q);
      s_p.setZero();
    } else {
      s_p = -alpha * jhat.transpose_point(q);
      s_c.setZero();
    }
    const double gamma_next = camera_half_live ? s_c.squaredNorm() : s_p.squaredNorm();
    const double beta = gamma_next / gamma;
    p_c = s_c + beta * p_c;
    p_p = s_p + beta * p_p;
    q = beta * q + (camera_half_live ? jhat.apply_camera(s_c) : jhat.apply_point(s_p));
    gamma = gamma_next;
    ++k;
    record();
    if (cfg.record_iterates) {
      Eigen::VectorXd it(nc + np);
      it << jhat.unscale_camera(x_c), jhat.unscale_point(x_p);
      out.iterates.push_back(std::move(it));
    }
  }

  out.iterations = k;
  out.rhs_norm = rhs_norm;
  const Eigen::VectorXd rt = r - jhat.apply_camera(x_c) - jhat.apply_point(x_p);
  out.residual_norm = std::sqrt(jhat.transpose_camera(rt).squaredNorm() +
                                jhat.transpose_point(rt).squaredNorm());
  out.status = out.residual_norm <= std::max(cfg.eta * rhs_norm, cfg.absolute_tolerance)
                   ? CGStatus::Converged
                   : CGStatus::MaxIterations;
  out.x.resize(nc + np);
  out.x << jhat.unscale_camera(x_c), jhat.unscale_point(x_p);
  return out;
}

std::string to_string(LinearSolverType type) {
  switch (type) {
    case LinearSolverType::ExplicitDirect: return "explicit-direct";
    case LinearSolverType::ExplicitSparse: return "explicit-sparse";
    case LinearSolverType::ExplicitJacobi: return "explicit-jacobi";
    case LinearSolverType::NormalJacobi: return "normal-jacobi";
    case LinearSolverType::ImplicitJacobi: return "implicit-jacobi";
    case LinearSolverType::ImplicitSsor: return "implicit-ssor";
    case LinearSolverType::BlockQr: return "block-qr";
  }
  return "unknown";
}

std::optional<LinearSolverType> parse_linear_solver(const std::string& name) {
  for (LinearSolverType t : kAllLinearSolvers) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

}  // namespace ba
