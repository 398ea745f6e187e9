#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace ba {

// Messages between the consensus coordinator and a partition worker.
//
// Binary framing (all integers u64 and all reals f64, little-endian):
//   magic "BAXM" | version u32 | kind u32 | payload length u64 | payload
// Request payload:  partition, iteration, rho, count, count x (point id, x, y, z)
// Response payload: partition, iteration, cameras, block size,
//                   cameras x (camera id, block values), count, count x (point id, x, y, z)
//
// Text framing: a "ba-exchange <version> <kind>" line, one "key value" line
// per scalar, then one record per line; reals use %.17g.

inline constexpr std::uint32_t kExchangeVersion = 1;

struct WorkerRequest {
  int partition = 0;
  int iteration = 0;
  double rho = 0.0;
  std::vector<int> point_ids;  // global indices on the partition's mask
  std::vector<Eigen::Vector3d> anchors;  // Z_i^k
};

struct WorkerResponse {
  int partition = 0;
  int iteration = 0;
  int camera_block_size = 0;
  std::vector<int> camera_ids;
  std::vector<Eigen::VectorXd> cameras;
  std::vector<int> point_ids;
  std::vector<Eigen::Vector3d> points;  // latent copies
};

enum class ExchangeEncoding { Binary, Text };

std::string encode(const WorkerRequest& msg, ExchangeEncoding encoding);
std::string encode(const WorkerResponse& msg, ExchangeEncoding encoding);

// Both throw ParseError on malformed or mismatched input.
WorkerRequest decode_request(const std::string& bytes);
WorkerResponse decode_response(const std::string& bytes);

}  // namespace ba
