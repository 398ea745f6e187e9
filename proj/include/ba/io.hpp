#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "ba/problem.hpp"

namespace ba {

// Sign convention of BAL camera files. PositiveDepth reads the nine camera
// values literally into this library's model (points in front have z > 0).
// NegativeZ converts files that follow the original BAL dataset convention
// (p = -P / P.z) by rotating the camera frame half a turn about x and
// flipping the observed y coordinate; write_bal applies the inverse.
enum class BalConvention { PositiveDepth, NegativeZ };

// Problem with the 9-parameter layout and identity weights.
Problem parse_bal(std::istream& in, BalConvention convention = BalConvention::PositiveDepth);
Problem read_bal_file(const std::string& path,
                      BalConvention convention = BalConvention::PositiveDepth);

// Values written with 17 significant digits. Requires the Bal9 layout.
void write_bal(std::ostream& out, const Problem& problem,
               BalConvention convention = BalConvention::PositiveDepth);

// JSON format carrying either camera layout and per-observation weights.
Problem parse_native(std::istream& in);
Problem read_native_file(const std::string& path);
void write_native(std::ostream& out, const Problem& problem);

struct SyntheticSpec {
  int num_cameras = 10;
  int num_points = 100;
  double noise_sigma = 0.0;  // pixels
  bool distortion = false;
  std::uint64_t seed = 1;
  CameraLayout layout = CameraLayout::Bal9;
  double focal = 500.0;
};

// Problem parameters are the ground truth; observations are the true
// projections plus Gaussian pixel noise.
struct SyntheticScene {
  Problem problem;
  CameraVector true_cameras;
  PointVector true_points;
  double scene_diameter = 1.0;
};

// Cameras on a ring around a unit-diameter point cloud. Each camera sees the
// points within a 100 degree azimuth window of its own position; points
// seen by fewer than two cameras get their nearest cameras added.
SyntheticScene generate_synthetic(const SyntheticSpec& spec);

// Initial-guess perturbation: random rotation of at most `rotation` radians,
// camera translation and point offsets of at most the given lengths.
struct Perturbation {
  double rotation = 0.05;
  double translation = 0.01;
  double point = 0.01;
};

void perturb(Problem& problem, const Perturbation& perturbation, std::uint64_t seed);

// Deterministic child seed for stream `index` of `seed` (SplitMix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ba
