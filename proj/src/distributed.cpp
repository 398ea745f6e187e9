#include "ba/distributed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "ba/normal_equations.hpp"

namespace ba {

namespace {

// Averaged copies can land behind a camera while partitions disagree.
double consensus_cost(const Problem& problem) {
  try {
    return total_cost(problem);
  } catch (const CheiralityError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

std::vector<Partition> partition_cameras(const Problem& problem, int l) {
  const int m = problem.num_cameras();
  if (l < 1 || l > m) {
    throw InvalidPartitionCount("partition count " + std::to_string(l) + " outside [1, " +
                                std::to_string(m) + "]");
  }
  std::vector<Partition> out(l);
  int next = 0;
  for (int k = 0; k < l; ++k) {
    const int size = m / l + (k < m % l ? 1 : 0);
    out[k].index = k;
    for (int s = 0; s < size; ++s) out[k].cameras.push_back(next++);
  }
  return out;
}

std::vector<Partition> partition_cameras(const Problem& problem, int l,
                                         const PartitionStrategy& strategy) {
  if (l < 1 || l > problem.num_cameras()) {
    throw InvalidPartitionCount("partition count " + std::to_string(l) + " outside [1, " +
                                std::to_string(problem.num_cameras()) + "]");
  }
  std::vector<Partition> out = strategy(problem, l);
  for (auto& p : out) std::sort(p.cameras.begin(), p.cameras.end());
  validate_partitions(out, problem.num_cameras());
  return out;
}

void validate_partitions(const std::vector<Partition>& partitions, int num_cameras) {
  std::vector<int> owner(num_cameras, -1);
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    if (partitions[k].index != static_cast<int>(k)) {
      throw InvalidPartitionCount("partition indices must be 0..l-1 in order");
    }
    if (partitions[k].cameras.empty()) throw InvalidPartitionCount("empty partition");
    for (int j : partitions[k].cameras) {
      if (j < 0 || j >= num_cameras) throw InvalidPartitionCount("camera index out of range");
      if (owner[j] != -1) {
        throw InvalidPartitionCount("camera " + std::to_string(j) + " in two partitions");
      }
      owner[j] = static_cast<int>(k);
    }
  }
  for (int j = 0; j < num_cameras; ++j) {
    if (owner[j] == -1) {
      throw InvalidPartitionCount("camera " + std::to_string(j) + " in no partition");
    }
  }
}

VisibilityMask::VisibilityMask(const Problem& problem, const std::vector<Partition>& partitions)
    : num_partitions_(static_cast<int>(partitions.size())),
      observers_(problem.num_points()),
      points_(partitions.size()) {
  std::vector<int> owner(problem.num_cameras(), -1);
  for (const Partition& p : partitions) {
    for (int j : p.cameras) owner[j] = p.index;
  }
  for (int i = 0; i < problem.num_points(); ++i) {
    for (int obs : problem.observations_of_point(i)) {
      observers_[i].push_back(owner[problem.observations()[obs].camera]);
    }
    std::sort(observers_[i].begin(), observers_[i].end());
    observers_[i].erase(std::unique(observers_[i].begin(), observers_[i].end()), observers_[i].end());
    for (int k : observers_[i]) points_[k].push_back(i);
  }
}

bool VisibilityMask::operator()(int point, int partition) const {
  const auto& o = observers_[point];
  return std::binary_search(o.begin(), o.end(), partition);
}

LatentPoints LatentPoints::broadcast(const VisibilityMask& mask, const PointVector& points) {
  LatentPoints out;
  out.copies.resize(mask.num_partitions());
  for (int k = 0; k < mask.num_partitions(); ++k) {
    for (int i : mask.points(k)) out.copies[k].push_back(points[i]);
  }
  return out;
}

const Eigen::Vector3d& LatentPoints::at(const VisibilityMask& mask, int point,
                                        int partition) const {
  const auto& ids = mask.points(partition);
  const auto it = std::lower_bound(ids.begin(), ids.end(), point);
  if (it == ids.end() || *it != point) {
    throw IndexOutOfRange("point " + std::to_string(point) + " not visible in partition " +
                          std::to_string(partition));
  }
  return copies[partition][it - ids.begin()];
}

namespace {

// Position of every (point, observer) pair inside LatentPoints::copies.
std::vector<std::vector<int>> slots(const VisibilityMask& mask) {
  std::vector<std::vector<int>> out(mask.num_points());
  for (int k = 0; k < mask.num_partitions(); ++k) {
    const auto& ids = mask.points(k);
    for (std::size_t s = 0; s < ids.size(); ++s) out[ids[s]].push_back(static_cast<int>(s));
  }
  return out;
}

}  // namespace

LatentPoints prox_f2(const LatentPoints& copies, const VisibilityMask& mask) {
  LatentPoints out = copies;
  const auto slot = slots(mask);
  for (int i = 0; i < mask.num_points(); ++i) {
    const auto& obs = mask.observers(i);
    if (obs.size() < 2) continue;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (std::size_t r = 0; r < obs.size(); ++r) sum += copies.copies[obs[r]][slot[i][r]];
    const Eigen::Vector3d mean = sum / static_cast<double>(obs.size());
    for (std::size_t r = 0; r < obs.size(); ++r) out.copies[obs[r]][slot[i][r]] = mean;
  }
  return out;
}

double consensus_gap(const LatentPoints& latent, const VisibilityMask& mask) {
  const auto slot = slots(mask);
  double gap = 0.0;
  for (int i = 0; i < mask.num_points(); ++i) {
    const auto& obs = mask.observers(i);
    for (std::size_t a = 0; a < obs.size(); ++a) {
      for (std::size_t b = a + 1; b < obs.size(); ++b) {
        const double d =
            (latent.copies[obs[a]][slot[i][a]] - latent.copies[obs[b]][slot[i][b]]).norm();
        gap = std::max(gap, d);
      }
    }
  }
  return gap;
}

double RhoSchedule::at(int t) const {
  if (kind != Kind::Geometric) return rho0;
  return std::min(rho_max, rho0 * std::pow(growth, t));
}

double RhoSchedule::adapt(double rho, double cost_change) const {
  return cost_change < settle ? std::min(rho_max, rho * growth) : rho;
}

double default_rho(const Problem& problem) {
  return 0.1 * problem.num_observations() / std::max(1, problem.num_points());
}

double curvature_rho(const Problem& problem, double scale, const VisibilityMask* mask) {
  const BlockNormalEquations ne = assemble(problem, jacobian_blocks(problem));
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < problem.num_points(); ++i) {
    if (mask && mask->observers(i).size() < 2) continue;
    sum += ne.V[i].trace() / 3.0;
    ++count;
  }
  return count > 0 ? scale * sum / count : 0.0;
}

RhoSchedule auto_rho(const Problem& problem, const std::vector<Partition>& partitions) {
  const VisibilityMask mask(problem, partitions);
  RhoSchedule out;
  out.kind = RhoSchedule::Kind::Adaptive;
  out.growth = 1.2;
  out.rho0 = curvature_rho(problem, 0.1, &mask);
  if (out.rho0 <= 0.0) out.rho0 = curvature_rho(problem, 1e-6);
  return out;
}

PartitionWorker::PartitionWorker(const Problem& problem, const Partition& partition,
                                 const VisibilityMask& mask, const SolverOptions& inner)
    : partition_(partition.index),
      camera_ids_(partition.cameras),
      point_ids_(mask.points(partition.index)),
      inner_(inner),
      lambda_(inner.lambda0) {
  std::vector<int> local_point(problem.num_points(), -1);
  for (std::size_t s = 0; s < point_ids_.size(); ++s) local_point[point_ids_[s]] = static_cast<int>(s);

  CameraVector cameras;
  std::vector<Observation> observations;
  std::vector<WeightMatrix> weights;
  for (std::size_t c = 0; c < camera_ids_.size(); ++c) {
    cameras.push_back(problem.cameras()[camera_ids_[c]]);
    for (int obs : problem.observations_of_camera(camera_ids_[c])) {
      Observation o = problem.observations()[obs];
      o.camera = static_cast<int>(c);
      o.point = local_point[o.point];
      observations.push_back(o);
      weights.push_back(problem.weights()[obs]);
    }
  }
  PointVector points;
  for (int i : point_ids_) points.push_back(problem.points()[i]);
  sub_ = Problem(problem.layout(), std::move(cameras), std::move(points), std::move(observations),
                 std::move(weights));
}

double PartitionWorker::objective(double rho, const PointVector& anchors) const {
  const PointPrior prior{0.5 * rho, anchors};
  return ba::objective(sub_, &prior);
}

WorkerResponse PartitionWorker::handle(const WorkerRequest& request) {
  if (request.partition != partition_ || request.point_ids != point_ids_) {
    throw PartitionError(partition_, "request does not match the partition's visibility mask");
  }
  SolverOptions opts = inner_;
  opts.lambda0 = lambda_;
  const PointPrior prior{0.5 * request.rho, request.anchors};
  SolveSummary s;
  try {
    s = solve(sub_, opts, &prior);
  } catch (const Error& e) {
    throw PartitionError(partition_, e.what());
  }
  sub_.set_cameras(s.cameras);
  sub_.set_points(s.points);
  lambda_ = std::max(s.final_lambda, 1e-12);
  last_iterations_ = static_cast<int>(s.iterations.size());

  WorkerResponse out;
  out.partition = partition_;
  out.iteration = request.iteration;
  out.camera_block_size = sub_.camera_block_size();
  out.camera_ids = camera_ids_;
  for (const auto& c : sub_.cameras()) out.cameras.push_back(c.to_vector());
  out.point_ids = point_ids_;
  out.points = sub_.points();
  return out;
}

std::string PartitionWorker::handle_bytes(const std::string& request) {
  const bool text = request.rfind("ba-exchange", 0) == 0;
  return encode(handle(decode_request(request)),
                text ? ExchangeEncoding::Text : ExchangeEncoding::Binary);
}

ConsensusState init_consensus(const Problem& problem, std::vector<Partition> partitions,
                              const RhoSchedule& rho) {
  validate_partitions(partitions, problem.num_cameras());
  ConsensusState state;
  state.mask = VisibilityMask(problem, partitions);
  state.partitions = std::move(partitions);
  state.latent = LatentPoints::broadcast(state.mask, problem.points());
  state.z = state.latent;
  state.cameras = problem.cameras();
  state.rho = rho;
  state.rho_value = rho.at(0);
  return state;
}

int worker_threads(int requested, int partitions) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("BA_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(n, 1, std::max(1, partitions));
}

DistributedSolver::DistributedSolver(const Problem& problem, ConsensusState state,
                                     const DistributedOptions& opts)
    : problem_(problem), state_(std::move(state)), opts_(opts) {
  SolverOptions inner = opts.inner;
  inner.max_outer_iterations = opts.inner_iterations;
  for (const Partition& p : state_.partitions) {
    workers_.push_back(std::make_unique<PartitionWorker>(problem_, p, state_.mask, inner));
  }
}

void DistributedSolver::prox_f1() {
  const int l = static_cast<int>(workers_.size());
  const double rho = state_.rho_value;
  std::vector<std::string> replies(l);
  std::vector<std::exception_ptr> errors(l);

  auto run = [&](int k) {
    try {
      WorkerRequest req;
      req.partition = k;
      req.iteration = state_.t;
      req.rho = rho;
      req.point_ids = state_.mask.points(k);
      req.anchors = state_.z.copies[k];
      replies[k] = workers_[k]->handle_bytes(encode(req, opts_.encoding));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  const int threads = worker_threads(opts_.threads, l);
  if (threads == 1) {
    for (int k = 0; k < l; ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int k = w; k < l; k += threads) run(k);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (int k = 0; k < l; ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
  }

  for (int k = 0; k < l; ++k) {
    const WorkerResponse resp = decode_response(replies[k]);
    for (std::size_t c = 0; c < resp.camera_ids.size(); ++c) {
      CameraParams<double>& cam = state_.cameras[resp.camera_ids[c]];
      cam = cam.with_vector(resp.cameras[c]);
    }
    state_.latent.copies[k] = resp.points;
  }
}

void DistributedSolver::iterate() {
  prox_f1();
  LatentPoints reflected = state_.latent;
  for (std::size_t k = 0; k < reflected.copies.size(); ++k) {
    for (std::size_t s = 0; s < reflected.copies[k].size(); ++s) {
      reflected.copies[k][s] = 2.0 * state_.latent.copies[k][s] - state_.z.copies[k][s];
    }
  }
  const LatentPoints projected = prox_f2(reflected, state_.mask);
  for (std::size_t k = 0; k < reflected.copies.size(); ++k) {
    for (std::size_t s = 0; s < reflected.copies[k].size(); ++s) {
      state_.z.copies[k][s] += projected.copies[k][s] - state_.latent.copies[k][s];
    }
  }
  ++state_.t;
  if (state_.rho.kind != RhoSchedule::Kind::Adaptive) state_.rho_value = state_.rho.at(state_.t);
}

void DistributedSolver::set_rho(double rho) {
  const double scale = state_.rho_value / rho;
  state_.rho_value = rho;
  if (scale == 1.0) return;
  for (std::size_t k = 0; k < state_.z.copies.size(); ++k) {
    for (std::size_t s = 0; s < state_.z.copies[k].size(); ++s) {
      const Eigen::Vector3d& x = state_.latent.copies[k][s];
      state_.z.copies[k][s] = x + scale * (state_.z.copies[k][s] - x);
    }
  }
}

Problem DistributedSolver::consensus_problem() const {
  const LatentPoints mean = prox_f2(state_.latent, state_.mask);
  PointVector points(problem_.num_points());
  for (int i = 0; i < problem_.num_points(); ++i) {
    points[i] = mean.at(state_.mask, i, state_.mask.observers(i).front());
  }
  Problem out = problem_;
  out.set_cameras(state_.cameras);
  out.set_points(std::move(points));
  return out;
}

DistributedSummary solve_distributed(const Problem& problem, int l, const RhoSchedule& rho,
                                     const DistributedOptions& opts) {
  using Clock = std::chrono::steady_clock;
  DistributedSolver solver(problem, init_consensus(problem, partition_cameras(problem, l), rho),
                           opts);
  DistributedSummary summary;
  summary.initial_cost = total_cost(problem);
  double previous = summary.initial_cost;
  for (int t = 0; t < opts.max_iterations; ++t) {
    const auto start = Clock::now();
    DistributedIterationReport rep;
    rep.iteration = t;
    rep.rho = solver.state().rho_value;
    solver.iterate();
    for (int k = 0; k < l; ++k) rep.inner_iterations += solver.worker(k).last_iterations();
    rep.cost = consensus_cost(solver.consensus_problem());
    rep.gap = consensus_gap(solver.state().latent, solver.state().mask);
    rep.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    summary.iterations.push_back(rep);

    const double change = std::isfinite(rep.cost)
                              ? std::abs(previous - rep.cost) / std::max(rep.cost, 1e-300)
                              : std::numeric_limits<double>::infinity();
    previous = rep.cost;
    if (rep.gap <= opts.gap_tolerance && change <= opts.cost_tolerance) {
      summary.converged = true;
      break;
    }
    if (rho.kind == RhoSchedule::Kind::Adaptive && rep.gap > opts.gap_tolerance) {
      solver.set_rho(rho.adapt(solver.state().rho_value, change));
    }
  }
  const Problem final_problem = solver.consensus_problem();
  summary.cameras = final_problem.cameras();
  summary.points = final_problem.points();
  summary.final_cost = consensus_cost(final_problem);
  summary.final_gap = consensus_gap(solver.state().latent, solver.state().mask);
  return summary;
}

}  // namespace ba
