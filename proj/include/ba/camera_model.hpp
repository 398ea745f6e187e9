#pragma once

// Pinhole camera with Brown-Conrady distortion. Projection chain:
//   world -> camera frame (R X + t) -> normalized plane (X/Z, Y/Z)
//   -> forward distortion -> pixel (K).
// All functions are pure and templated on the scalar type.

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "ba/errors.hpp"

namespace ba {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

// Depth below which a point is treated as behind the camera.
inline constexpr double kMinDepth = 1e-8;

template <typename Scalar = double>
struct Intrinsics {
  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};
  Scalar skew{0};
};

template <typename Scalar = double>
struct Distortion {
  Scalar k1{0};
  Scalar k2{0};
  Scalar k3{0};
  Scalar p1{0};
  Scalar p2{0};

  bool is_zero() const {
    return k1 == Scalar(0) && k2 == Scalar(0) && k3 == Scalar(0) &&
           p1 == Scalar(0) && p2 == Scalar(0);
  }
};

// Rotation is an axis-angle vector (unit axis scaled by the angle).
template <typename Scalar = double>
struct Pose {
  Vec3<Scalar> rotation = Vec3<Scalar>::Zero();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();
};

// Which camera fields are optimized.
//   Bal9:   [rot(3) t(3) f k1 k2] with fx = fy = f, cx = cy = 0, k3 = p1 = p2 = 0
//   Full15: [rot(3) t(3) fx fy cx cy k1 k2 k3 p1 p2]
enum class CameraLayout { Bal9, Full15 };

constexpr int camera_block_size(CameraLayout layout) {
  return layout == CameraLayout::Bal9 ? 9 : 15;
}

template <typename Scalar = double>
struct CameraParams {
  Pose<Scalar> pose;
  Intrinsics<Scalar> intrinsics;
  Distortion<Scalar> distortion;
  CameraLayout layout = CameraLayout::Bal9;

  int block_size() const { return camera_block_size(layout); }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> to_vector() const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v(block_size());
    v.template head<3>() = pose.rotation;
    v.template segment<3>(3) = pose.translation;
    if (layout == CameraLayout::Bal9) {
      v(6) = intrinsics.fx;
      v(7) = distortion.k1;
      v(8) = distortion.k2;
    } else {
      v(6) = intrinsics.fx;
      v(7) = intrinsics.fy;
      v(8) = intrinsics.cx;
      v(9) = intrinsics.cy;
      v(10) = distortion.k1;
      v(11) = distortion.k2;
      v(12) = distortion.k3;
      v(13) = distortion.p1;
      v(14) = distortion.p2;
    }
    return v;
  }

  // Fields outside the layout (e.g. skew) are kept from `this`.
  template <typename Derived>
  CameraParams with_vector(const Eigen::MatrixBase<Derived>& v) const {
    CameraParams out = *this;
    out.pose.rotation = v.template head<3>();
    out.pose.translation = v.template segment<3>(3);
    if (layout == CameraLayout::Bal9) {
      out.intrinsics.fx = v(6);
      out.intrinsics.fy = v(6);
      out.intrinsics.cx = Scalar(0);
      out.intrinsics.cy = Scalar(0);
      out.distortion = Distortion<Scalar>{v(7), v(8), Scalar(0), Scalar(0),
                                          Scalar(0)};
    } else {
      out.intrinsics.fx = v(6);
      out.intrinsics.fy = v(7);
      out.intrinsics.cx = v(8);
      out.intrinsics.cy = v(9);
      out.distortion =
          Distortion<Scalar>{v(10), v(11), v(12), v(13), v(14)};
    }
    return out;
  }
};

template <typename Scalar>
Mat3<Scalar> skew_matrix(const Vec3<Scalar>& v) {
  Mat3<Scalar> m;
  m << Scalar(0), -v.z(), v.y(),  //
      v.z(), Scalar(0), -v.x(),   //
      -v.y(), v.x(), Scalar(0);
  return m;
}

// Rodrigues' formula, with a second-order series near the identity.
template <typename Scalar>
Mat3<Scalar> rotation_matrix(const Vec3<Scalar>& axis_angle) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = axis_angle.squaredNorm();
  const Mat3<Scalar> k = skew_matrix(axis_angle);
  if (theta2 < Scalar(1e-16)) {
    return Mat3<Scalar>::Identity() + k + Scalar(0.5) * k * k;
  }
  const Scalar theta = sqrt(theta2);
  const Scalar a = sin(theta) / theta;
  const Scalar b = (Scalar(1) - cos(theta)) / theta2;
  return Mat3<Scalar>::Identity() + a * k + b * k * k;
}

// Maps an axis-angle vector to the equivalent one with norm <= pi.
template <typename Scalar>
Vec3<Scalar> canonicalize_rotation(const Vec3<Scalar>& axis_angle) {
  using std::floor;
  using std::sqrt;
  const Scalar theta = axis_angle.norm();
  const Scalar pi = Scalar(std::numbers::pi);
  if (theta <= pi) return axis_angle;
  const Vec3<Scalar> axis = axis_angle / theta;
  Scalar wrapped = theta - Scalar(2) * pi * floor((theta + pi) / (Scalar(2) * pi));
  return axis * wrapped;
}

template <typename Scalar>
Vec3<Scalar> world_to_camera(const Pose<Scalar>& pose, const Vec3<Scalar>& xw) {
  return rotation_matrix(pose.rotation) * xw + pose.translation;
}

template <typename Scalar>
Vec2<Scalar> project_to_normalized(const Vec3<Scalar>& xc) {
  if (!(xc.z() > Scalar(kMinDepth))) throw CheiralityError();
  return Vec2<Scalar>(xc.x() / xc.z(), xc.y() / xc.z());
}

template <typename Scalar>
Vec2<Scalar> apply_distortion(const Distortion<Scalar>& d, const Vec2<Scalar>& p) {
  const Scalar x = p.x();
  const Scalar y = p.y();
  const Scalar r2 = x * x + y * y;
  const Scalar radial = Scalar(1) + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  return Vec2<Scalar>(
      x * radial + Scalar(2) * d.p1 * x * y + d.p2 * (r2 + Scalar(2) * x * x),
      y * radial + d.p1 * (r2 + Scalar(2) * y * y) + Scalar(2) * d.p2 * x * y);
}

// Inverts apply_distortion by Newton iteration from p = pd. Where the
// forward map folds (det of its Jacobian <= 0) the preimage is not unique and
// the one found may differ from the original point.
template <typename Scalar>
Vec2<Scalar> undistort(const Distortion<Scalar>& d, const Vec2<Scalar>& pd,
                       int max_iterations = 50, Scalar tolerance = Scalar(1e-9)) {
  if (d.is_zero()) return pd;
  Vec2<Scalar> p = pd;
  for (int it = 0; it < max_iterations; ++it) {
    const Vec2<Scalar> residual = apply_distortion(d, p) - pd;
    if (residual.norm() <= tolerance * Scalar(1e-3)) return p;
    const Scalar x = p.x();
    const Scalar y = p.y();
    const Scalar r2 = x * x + y * y;
    const Scalar radial = Scalar(1) + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    const Scalar dradial = Scalar(2) * (d.k1 + r2 * (Scalar(2) * d.k2 + Scalar(3) * r2 * d.k3));
    Mat2<Scalar> j;
    j(0, 0) = radial + x * x * dradial + Scalar(2) * d.p1 * y + Scalar(6) * d.p2 * x;
    j(0, 1) = x * y * dradial + Scalar(2) * d.p1 * x + Scalar(2) * d.p2 * y;
    j(1, 0) = j(0, 1);
    j(1, 1) = radial + y * y * dradial + Scalar(6) * d.p1 * y + Scalar(2) * d.p2 * x;
    const Scalar det = j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0);
    if (det == Scalar(0)) break;
    p -= Vec2<Scalar>(j(1, 1) * residual.x() - j(0, 1) * residual.y(),
                      j(0, 0) * residual.y() - j(1, 0) * residual.x()) / det;
  }
  if (!((apply_distortion(d, p) - pd).norm() <= tolerance)) {
    throw NoConvergence("undistort did not converge");
  }
  return p;
}

template <typename Scalar>
Vec2<Scalar> normalized_to_pixel(const Intrinsics<Scalar>& k, const Vec2<Scalar>& pc) {
  return Vec2<Scalar>(k.fx * pc.x() + k.skew * pc.y() + k.cx,
                      k.fy * pc.y() + k.cy);
}

template <typename Scalar>
Vec2<Scalar> reproject(const CameraParams<Scalar>& cam, const Vec3<Scalar>& xw) {
  const Vec3<Scalar> xc = world_to_camera(cam.pose, xw);
  const Vec2<Scalar> pn = project_to_normalized(xc);
  const Vec2<Scalar> pd = apply_distortion(cam.distortion, pn);
  return normalized_to_pixel(cam.intrinsics, pd);
}

// Reprojection together with its analytic derivatives with respect to the
// camera parameter vector (layout order) and the world point.
struct ProjectionJacobian {
  Eigen::Vector2d pixel;
  Eigen::Matrix<double, 2, Eigen::Dynamic> camera;
  Eigen::Matrix<double, 2, 3> point;
};

inline ProjectionJacobian reproject_with_jacobian(const CameraParams<double>& cam,
                                                  const Eigen::Vector3d& xw) {
  using Eigen::Matrix;
  using Eigen::Matrix3d;
  using Eigen::Vector2d;
  using Eigen::Vector3d;

  const Vector3d& w = cam.pose.rotation;
  const Matrix3d rot = rotation_matrix(w);
  const Vector3d xc = rot * xw + cam.pose.translation;
  if (!(xc.z() > kMinDepth)) throw CheiralityError();

  // d(R X)/dw = -R [X]x (w w^T + (R^T - I)[w]x) / theta^2
  Matrix3d d_xc_d_rot;
  const double theta2 = w.squaredNorm();
  if (theta2 < 1e-16) {
    d_xc_d_rot = -rot * skew_matrix<double>(xw);
  } else {
    d_xc_d_rot = -rot * skew_matrix<double>(xw) *
                 (w * w.transpose() +
                  (rot.transpose() - Matrix3d::Identity()) * skew_matrix<double>(w)) /
                 theta2;
  }

  const double inv_z = 1.0 / xc.z();
  const double x = xc.x() * inv_z;
  const double y = xc.y() * inv_z;
  Matrix<double, 2, 3> d_pn_d_xc;
  d_pn_d_xc << inv_z, 0.0, -x * inv_z,  //
      0.0, inv_z, -y * inv_z;

  const Distortion<double>& d = cam.distortion;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double d_radial = d.k1 + r2 * (2.0 * d.k2 + 3.0 * r2 * d.k3);
  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;

  Eigen::Matrix2d d_pd_d_pn;
  d_pd_d_pn(0, 0) = radial + 2.0 * x * x * d_radial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
  d_pd_d_pn(0, 1) = 2.0 * x * y * d_radial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  d_pd_d_pn(1, 0) = 2.0 * x * y * d_radial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  d_pd_d_pn(1, 1) = radial + 2.0 * y * y * d_radial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;

  const Intrinsics<double>& k = cam.intrinsics;
  Eigen::Matrix2d d_px_d_pd;
  d_px_d_pd << k.fx, k.skew,  //
      0.0, k.fy;

  const Matrix<double, 2, 3> d_px_d_xc = d_px_d_pd * d_pd_d_pn * d_pn_d_xc;

  ProjectionJacobian out;
  out.pixel = Vector2d(k.fx * xd + k.skew * yd + k.cx, k.fy * yd + k.cy);
  out.point = d_px_d_xc * rot;
  out.camera.setZero(2, cam.block_size());
  out.camera.leftCols<3>() = d_px_d_xc * d_xc_d_rot;
  out.camera.middleCols<3>(3) = d_px_d_xc;

  // Distortion coefficient derivatives in the distorted plane.
  Matrix<double, 2, 5> d_pd_d_coeff;
  d_pd_d_coeff << x * r2, x * r2 * r2, x * r2 * r2 * r2, 2.0 * x * y, r2 + 2.0 * x * x,
      y * r2, y * r2 * r2, y * r2 * r2 * r2, r2 + 2.0 * y * y, 2.0 * x * y;
  const Matrix<double, 2, 5> d_px_d_coeff = d_px_d_pd * d_pd_d_coeff;

  if (cam.layout == CameraLayout::Bal9) {
    out.camera.col(6) = Vector2d(xd, yd);
    out.camera.middleCols<2>(7) = d_px_d_coeff.leftCols<2>();
  } else {
    out.camera(0, 6) = xd;
    out.camera(1, 7) = yd;
    out.camera(0, 8) = 1.0;
    out.camera(1, 9) = 1.0;
    out.camera.middleCols<5>(10) = d_px_d_coeff;
  }
  return out;
}

}  // namespace ba
