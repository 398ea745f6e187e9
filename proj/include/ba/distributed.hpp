#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "ba/exchange.hpp"
#include "ba/optimizer.hpp"
#include "ba/problem.hpp"

namespace ba {

struct Partition {
  int index = 0;
  std::vector<int> cameras;  // ascending
};

using PartitionStrategy = std::function<std::vector<Partition>(const Problem&, int)>;

// Contiguous blocks in camera order; the first m % l blocks get one extra.
std::vector<Partition> partition_cameras(const Problem& problem, int l);
std::vector<Partition> partition_cameras(const Problem& problem, int l,
                                         const PartitionStrategy& strategy);

// Throws InvalidPartitionCount unless the partitions are a disjoint cover.
void validate_partitions(const std::vector<Partition>& partitions, int num_cameras);

// w(i, k) = 1 iff a camera of partition k observes point i.
class VisibilityMask {
 public:
  VisibilityMask() = default;
  VisibilityMask(const Problem& problem, const std::vector<Partition>& partitions);

  int num_points() const { return static_cast<int>(observers_.size()); }
  int num_partitions() const { return num_partitions_; }
  bool operator()(int point, int partition) const;
  // Observing partitions of a point, ascending.
  const std::vector<int>& observers(int point) const { return observers_[point]; }
  // Visible points of a partition, ascending.
  const std::vector<int>& points(int partition) const { return points_[partition]; }

 private:
  int num_partitions_ = 0;
  std::vector<std::vector<int>> observers_;
  std::vector<std::vector<int>> points_;
};

// Per-partition point copies, stored only on the mask support. copies[k][s]
// belongs to point mask.points(k)[s].
struct LatentPoints {
  std::vector<PointVector> copies;

  static LatentPoints broadcast(const VisibilityMask& mask, const PointVector& points);
  const Eigen::Vector3d& at(const VisibilityMask& mask, int point, int partition) const;
};

// Mean of the copies of each point over its observing partitions (summed in
// ascending partition order), written back to every copy.
LatentPoints prox_f2(const LatentPoints& copies, const VisibilityMask& mask);

// Max pairwise distance between copies of the same point.
double consensus_gap(const LatentPoints& latent, const VisibilityMask& mask);

// rho(t): constant rho0, rho0 * growth^t capped at rho_max, or adaptive.
// Adaptive starts at rho0 and multiplies rho by `growth` (up to rho_max)
// after every iteration whose relative consensus-cost change is below
// `settle`, i.e. once the cost has settled but the copies still disagree.
struct RhoSchedule {
  enum class Kind { Constant, Geometric, Adaptive };
  Kind kind = Kind::Constant;
  double rho0 = 1.0;
  double growth = 1.0;
  double rho_max = 1e12;
  double settle = 1e-4;

  // Value at iteration t for the fixed kinds, rho0 for Adaptive.
  double at(int t) const;
  // Next adaptive value given the last relative cost change.
  double adapt(double rho, double cost_change) const;
};

// 0.1 x mean observations per point.
double default_rho(const Problem& problem);
// `scale` x mean of trace(V_i) / 3 at the current parameters, over the points
// seen by two or more partitions (all points when `mask` is null).
double curvature_rho(const Problem& problem, double scale = 0.1,
                     const VisibilityMask* mask = nullptr);
// Adaptive schedule from curvature_rho with growth 1.2. Without shared points
// rho only slows the partition solves down, so it starts at 1e-6 x the
// all-point curvature instead.
RhoSchedule auto_rho(const Problem& problem, const std::vector<Partition>& partitions);

// One partition's proximal bundle adjustment:
//   sum over its observations of r^T L r + (rho / 2) sum_i |Xbar_i - Z_i|^2.
// Owns the partition's cameras, latent copies and damping between calls.
class PartitionWorker {
 public:
  PartitionWorker(const Problem& problem, const Partition& partition, const VisibilityMask& mask,
                  const SolverOptions& inner);

  int partition() const { return partition_; }
  const Problem& subproblem() const { return sub_; }
  double lambda() const { return lambda_; }
  int last_iterations() const { return last_iterations_; }

  // Objective above at the worker's current state.
  double objective(double rho, const PointVector& anchors) const;

  WorkerResponse handle(const WorkerRequest& request);
  // Decodes, handles and encodes in the same encoding as the request.
  std::string handle_bytes(const std::string& request);

 private:
  int partition_ = 0;
  std::vector<int> camera_ids_;
  std::vector<int> point_ids_;
  Problem sub_;
  SolverOptions inner_;
  double lambda_ = 0.0;
  int last_iterations_ = 0;
};

struct ConsensusState {
  std::vector<Partition> partitions;
  VisibilityMask mask;
  LatentPoints latent;  // Xbar
  LatentPoints z;       // DR auxiliary variable
  CameraVector cameras;
  RhoSchedule rho;
  double rho_value = 0.0;  // rho for the next iteration
  int t = 0;
};

// Xbar^k = X0 and Z^k = X0 on the mask.
ConsensusState init_consensus(const Problem& problem, std::vector<Partition> partitions,
                              const RhoSchedule& rho);

struct DistributedOptions {
  int max_iterations = 100;
  double gap_tolerance = 1e-6;
  double cost_tolerance = 1e-6;  // relative change between iterations
  int inner_iterations = 5;
  SolverOptions inner;           // max_outer_iterations is replaced by inner_iterations
  int threads = 0;               // 0: BA_THREADS or hardware concurrency
  ExchangeEncoding encoding = ExchangeEncoding::Binary;
};

// Worker-thread count: BA_THREADS when set and positive, else the hardware
// concurrency, capped by the number of partitions.
int worker_threads(int requested, int partitions);

class DistributedSolver {
 public:
  DistributedSolver(const Problem& problem, ConsensusState state, const DistributedOptions& opts);

  // Xbar <- prox_f1(Z) for every partition in parallel.
  void prox_f1();
  // prox_f1 followed by Z <- Z + prox_f2(2 Xbar - Z) - Xbar.
  void iterate();
  // Changes rho for the next iteration, rescaling Z - Xbar by old / new.
  void set_rho(double rho);

  const ConsensusState& state() const { return state_; }
  // Cameras plus the mean of each point's copies.
  Problem consensus_problem() const;
  PartitionWorker& worker(int k) { return *workers_[k]; }

 private:
  Problem problem_;
  ConsensusState state_;
  DistributedOptions opts_;
  std::vector<std::unique_ptr<PartitionWorker>> workers_;
};

struct DistributedIterationReport {
  int iteration = 0;
  double rho = 0.0;
  double cost = 0.0;
  double gap = 0.0;
  int inner_iterations = 0;  // summed over partitions
  double wall_time_s = 0.0;
};

struct DistributedSummary {
  CameraVector cameras;
  PointVector points;
  std::vector<DistributedIterationReport> iterations;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double final_gap = 0.0;
  bool converged = false;
};

DistributedSummary solve_distributed(const Problem& problem, int l, const RhoSchedule& rho,
                                     const DistributedOptions& opts);

}  // namespace ba
