#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sccalib/error.hpp"

namespace sccalib {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Quaternions are stored as (w, x, y, z). Eigen::Quaterniond keeps x,y,z,w in
// memory, so we do not use it for storage to keep serialization unambiguous.
using Quat = Eigen::Vector4d;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

inline Quat normalized_quat(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidParameter("quaternion has zero or non-finite norm");
  }
  return q / n;
}

inline Quat quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n == 0.0) return identity_quat();
  const Vec3 a = axis / n;
  const double s = std::sin(0.5 * angle_rad);
  return Quat(std::cos(0.5 * angle_rad), a.x() * s, a.y() * s, a.z() * s);
}

// Hamilton product a*b.
inline Quat quat_multiply(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

/// Rotation matrix of a (w,x,y,z) quaternion. The input is normalized first,
/// so q and -q (and any positive multiple) give the same matrix.
inline Mat3 quat_to_rotation(const Quat& q_in) {
  const Quat q = normalized_quat(q_in);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

inline Quat rotation_to_quat(const Mat3& r) {
  const Eigen::Quaterniond eq(r);
  Quat q(eq.w(), eq.x(), eq.y(), eq.z());
  if (q[0] < 0.0) q = -q;
  return normalized_quat(q);
}

/// Pose of one frame. Maps world points into the camera: x_cam = R(quat) * x + trans.
struct CameraParams {
  Quat quat = identity_quat();
  Vec3 trans = Vec3::Zero();
  int frame_index = 0;

  Mat3 rotation() const { return quat_to_rotation(quat); }
  // Camera center in world coordinates.
  Vec3 center() const { return -(rotation().transpose() * trans); }
};

/// Pinhole intrinsics shared by every frame of a sequence. The principal
/// point sits at the image center and is never optimized.
struct Intrinsics {
  double focal = 1.0;
  int width = 0;
  int height = 0;
  double cx = 0.0;
  double cy = 0.0;
  double znear = 0.01;
  double zfar = 100.0;

  static Intrinsics centered(double focal, int width, int height, double znear = 0.01,
                             double zfar = 100.0) {
    Intrinsics in;
    in.focal = focal;
    in.width = width;
    in.height = height;
    in.cx = 0.5 * width;
    in.cy = 0.5 * height;
    in.znear = znear;
    in.zfar = zfar;
    return in;
  }

  void validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) throw InvalidParameter("focal must be positive");
    if (width <= 0 || height <= 0) throw InvalidParameter("image size must be positive");
    if (!(znear > 0.0) || !(zfar > znear)) throw InvalidParameter("require 0 < znear < zfar");
  }
};

struct ProjectionMatrices {
  Mat4 w2c = Mat4::Identity();
  Mat4 pp = Mat4::Identity();
};

/// [R | t; 0 0 0 1] for the frame.
inline Mat4 build_w2c(const CameraParams& cam) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = cam.rotation();
  m.topRightCorner<3, 1>() = cam.trans;
  return m;
}

/// Perspective matrix in the 3D Gaussian Splatting convention: the field of
/// view follows from focal and image size, and the view depth lands in w.
inline Mat4 build_perspective(const Intrinsics& intr) {
  intr.validate();
  const double tan_half_x = intr.width / (2.0 * intr.focal);
  const double tan_half_y = intr.height / (2.0 * intr.focal);
  const double n = intr.znear;
  const double f = intr.zfar;
  const double top = tan_half_y * n;
  const double bottom = -top;
  const double right = tan_half_x * n;
  const double left = -right;

  Mat4 p = Mat4::Zero();
  p(0, 0) = 2.0 * n / (right - left);
  p(1, 1) = 2.0 * n / (top - bottom);
  p(0, 2) = (right + left) / (right - left);
  p(1, 2) = (top + bottom) / (top - bottom);
  p(3, 2) = 1.0;
  p(2, 2) = f / (f - n);
  p(2, 3) = -(f * n) / (f - n);
  return p;
}

inline ProjectionMatrices build_matrices(const CameraParams& cam, const Intrinsics& intr) {
  return {build_w2c(cam), build_perspective(intr)};
}

struct ProjectedPoints {
  std::vector<Vec2> pixels;
  std::vector<double> wdepth;
};

/// Homogeneous projection of sp3d[indices] through w2c and the perspective
/// matrix, divided by w and mapped from NDC to pixels. Points behind the camera
/// still produce pixels; their negative w is reported in wdepth.
inline ProjectedPoints project_points(std::span<const Vec3> sp3d, std::span<const int> indices,
                                      const CameraParams& cam, const Intrinsics& intr) {
  const Mat4 full = build_perspective(intr) * build_w2c(cam);
  ProjectedPoints out;
  out.pixels.reserve(indices.size());
  out.wdepth.reserve(indices.size());
  for (const int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= sp3d.size()) {
      throw InvalidParameter("point index " + std::to_string(idx) + " out of range [0, " +
                             std::to_string(sp3d.size()) + ")");
    }
    const Eigen::Vector4d clip = full * sp3d[idx].homogeneous();
    const double w = clip[3];
    const double ndc_x = clip[0] / w;
    const double ndc_y = clip[1] / w;
    out.pixels.emplace_back((ndc_x + 1.0) * 0.5 * intr.width, (ndc_y + 1.0) * 0.5 * intr.height);
    out.wdepth.push_back(w);
  }
  return out;
}

/// Closed form of project_points for a single view-space point:
/// (cx + f*x/z, cy + f*y/z). Used by the optimizer's inner loop.
inline Vec2 pinhole_pixel(const Vec3& view, const Intrinsics& intr) {
  return Vec2(intr.cx + intr.focal * view.x() / view.z(), intr.cy + intr.focal * view.y() / view.z());
}

/// Camera that sits at `eye` and looks at `target`; image y points along -up.
inline CameraParams look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int frame_index = 0) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;  // rows are the camera axes in world coordinates
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  CameraParams cam;
  cam.quat = rotation_to_quat(r);
  cam.trans = -r * eye;
  cam.frame_index = frame_index;
  return cam;
}

}  // namespace sccalib
