#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ba/io.hpp"

namespace ba {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // SplitMix64 step from a state offset by the stream index.
  std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRingRadius = 2.5;
constexpr double kCloudRadius = 0.5;
constexpr double kHalfWindow = 50.0 * kPi / 180.0;

enum Stream : std::uint64_t { kCameraStream = 0, kPointStream = 1, kNoiseStream = 2 };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

double angle_between(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return d > kPi ? 2.0 * kPi - d : d;
}

// Camera at `center` looking at `target` with world -y roughly up in the image.
CameraParams<double> look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - center).normalized();
  Eigen::Vector3d right = Eigen::Vector3d::UnitY().cross(forward).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  const Eigen::AngleAxisd aa(r);
  CameraParams<double> cam;
  cam.pose.rotation = aa.axis() * aa.angle();
  cam.pose.translation = -r * center;
  return cam;
}

}  // namespace

SyntheticScene generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_cameras < 2 || spec.num_points < 4) {
    throw InfeasibleSpec("synthetic problems need at least 2 cameras and 4 points");
  }
  const int m = spec.num_cameras;
  const int n = spec.num_points;

  std::mt19937_64 cam_rng(derive_seed(spec.seed, kCameraStream));
  CameraVector cameras(m);
  std::vector<double> cam_azimuth(m);
  for (int j = 0; j < m; ++j) {
    const double az = 2.0 * kPi * j / m + uniform(cam_rng, -0.1, 0.1);
    cam_azimuth[j] = az;
    const Eigen::Vector3d center(kRingRadius * std::cos(az), uniform(cam_rng, -0.5, 0.5),
                                 kRingRadius * std::sin(az));
    const Eigen::Vector3d target(uniform(cam_rng, -0.1, 0.1), uniform(cam_rng, -0.1, 0.1),
                                 uniform(cam_rng, -0.1, 0.1));
    CameraParams<double> cam = look_at(center, target);
    cam.layout = spec.layout;
    const double f = spec.focal * uniform(cam_rng, 0.95, 1.05);
    cam.intrinsics.fx = f;
    cam.intrinsics.fy = f;
    if (spec.layout == CameraLayout::Full15) {
      cam.intrinsics.fy = f * uniform(cam_rng, 0.98, 1.02);
      cam.intrinsics.cx = uniform(cam_rng, -10.0, 10.0);
      cam.intrinsics.cy = uniform(cam_rng, -10.0, 10.0);
    }
    if (spec.distortion) {
      cam.distortion.k1 = uniform(cam_rng, -0.1, 0.1);
      cam.distortion.k2 = uniform(cam_rng, -0.05, 0.05);
      if (spec.layout == CameraLayout::Full15) {
        cam.distortion.k3 = uniform(cam_rng, -0.01, 0.01);
        cam.distortion.p1 = uniform(cam_rng, -0.01, 0.01);
        cam.distortion.p2 = uniform(cam_rng, -0.01, 0.01);
      }
    }
    cameras[j] = cam;
  }

  std::mt19937_64 pt_rng(derive_seed(spec.seed, kPointStream));
  PointVector points(n);
  std::vector<double> pt_azimuth(n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d p;
    do {
      p = {uniform(pt_rng, -1.0, 1.0), uniform(pt_rng, -1.0, 1.0), uniform(pt_rng, -1.0, 1.0)};
    } while (p.squaredNorm() > 1.0);
    points[i] = kCloudRadius * p;
    pt_azimuth[i] = std::atan2(points[i].z(), points[i].x());
  }

  // Visibility by azimuth window, then repairs.
  std::vector<std::vector<char>> visible(m, std::vector<char>(n, 0));
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      visible[j][i] = angle_between(cam_azimuth[j], pt_azimuth[i]) <= kHalfWindow;
    }
  }
  for (int i = 0; i < n; ++i) {
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return angle_between(cam_azimuth[a], pt_azimuth[i]) < angle_between(cam_azimuth[b], pt_azimuth[i]);
    });
    int count = 0;
    for (int j = 0; j < m; ++j) count += visible[j][i];
    for (int r = 0; count < 2 && r < m; ++r) {
      if (!visible[order[r]][i]) {
        visible[order[r]][i] = 1;
        ++count;
      }
    }
  }
  for (int j = 0; j < m; ++j) {
    if (std::find(visible[j].begin(), visible[j].end(), 1) != visible[j].end()) continue;
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (angle_between(cam_azimuth[j], pt_azimuth[i]) < angle_between(cam_azimuth[j], pt_azimuth[best])) {
        best = i;
      }
    }
    visible[j][best] = 1;
  }

  std::mt19937_64 noise_rng(derive_seed(spec.seed, kNoiseStream));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Observation> observations;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      if (!visible[j][i]) continue;
      Observation o;
      o.camera = j;
      o.point = i;
      try {
        o.pixel = reproject(cameras[j], points[i]);
      } catch (const CheiralityError&) {
        throw InfeasibleSpec("synthetic point behind a camera");
      }
      if (spec.noise_sigma > 0.0) {
        const double nx = noise(noise_rng);
        const double ny = noise(noise_rng);
        o.pixel += spec.noise_sigma * Eigen::Vector2d(nx, ny);
      }
      observations.push_back(o);
    }
  }

  SyntheticScene scene{Problem(spec.layout, cameras, points, std::move(observations)), cameras,
                       points, 2.0 * kCloudRadius};
  return scene;
}

void perturb(Problem& problem, const Perturbation& perturbation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CameraVector cameras = problem.cameras();
  for (auto& cam : cameras) {
    const Eigen::Vector3d axis = random_unit(rng);
    const double angle = uniform(rng, 0.0, perturbation.rotation);
    const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis).toRotationMatrix() *
                              rotation_matrix<double>(cam.pose.rotation);
    const Eigen::AngleAxisd aa(r);
    cam.pose.rotation = aa.axis() * aa.angle();
    const Eigen::Vector3d dir = random_unit(rng);
    cam.pose.translation += uniform(rng, 0.0, perturbation.translation) * dir;
  }
  problem.set_cameras(std::move(cameras));
  PointVector points = problem.points();
  for (auto& p : points) {
    const Eigen::Vector3d dir = random_unit(rng);
    p += uniform(rng, 0.0, perturbation.point) * dir;
  }
  problem.set_points(std::move(points));
}

}  // namespace ba
