#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "sccalib/geometry.hpp"
#include "sccalib/image.hpp"

namespace sccalib {

/// Camera-to-world pose: orientation of the camera axes and camera centre.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
};

using Trajectory = std::vector<Pose>;

inline Trajectory trajectory_from(const std::vector<CameraParams>& cams) {
  Trajectory t;
  t.reserve(cams.size());
  for (const auto& c : cams) {
    const Mat3 r = c.rotation();
    t.push_back({r.transpose(), -(r.transpose() * c.trans)});
  }
  return t;
}

/// x -> scale * rotation * x + translation
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Pose apply(const Pose& p) const { return {rotation * p.rotation, apply(p.center)}; }
  Sim3 inverse() const {
    Sim3 inv;
    inv.scale = 1.0 / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.scale * (inv.rotation * translation));
    return inv;
  }
};

inline Trajectory transformed(const Trajectory& t, const Sim3& s) {
  Trajectory out;
  out.reserve(t.size());
  for (const auto& p : t) out.push_back(s.apply(p));
  return out;
}

/// Rotation angle of a rotation matrix in radians, accurate near zero.
inline double rotation_angle(const Mat3& r) {
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
}

namespace detail {

inline Eigen::Matrix3Xd centers_of(const Trajectory& t) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = t[i].center;
  return m;
}

inline bool collinear(const Eigen::Matrix3Xd& pts) {
  const Eigen::Matrix3Xd centered = pts.colwise() - pts.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto sv = svd.singularValues();
  return !(sv[0] > 0.0) || sv[1] <= 1e-9 * sv[0];
}

}  // namespace detail

/// Least-squares similarity taking the estimated camera centres onto the
/// ground-truth ones (closed-form SVD solution, det(R) = +1).
inline Sim3 umeyama_align(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) throw InvalidParameter("umeyama_align: trajectories differ in length");
  if (est.size() < 3) throw AlignmentFailure("umeyama_align: need at least 3 poses");
  const Eigen::Matrix3Xd src = detail::centers_of(est);
  const Eigen::Matrix3Xd dst = detail::centers_of(gt);
  if (detail::collinear(src) || detail::collinear(dst)) {
    throw AlignmentFailure("umeyama_align: camera centres are collinear");
  }
  const Mat4 t = Eigen::umeyama(src, dst, true);
  Sim3 s;
  const Mat3 sr = t.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = t.topRightCorner<3, 1>();
  if (!(s.scale > 0.0) || !std::isfinite(s.scale)) throw AlignmentFailure("umeyama_align: degenerate scale");
  return s;
}

/// RMSE of camera-centre distances after Sim(3) alignment.
inline double ate(const Trajectory& est, const Trajectory& gt) {
  const Sim3 s = umeyama_align(est, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (gt[i].center - s.apply(est[i].center)).squaredNorm();
  return std::sqrt(sum / static_cast<double>(est.size()));
}

struct RpeResult {
  double trans = 0.0;
  double rot_deg = 0.0;
};

namespace detail {

struct Rigid {
  Mat3 r;
  Vec3 t;
};

inline Rigid relative(const Pose& a, const Pose& b) {
  // a^-1 * b
  return {a.rotation.transpose() * b.rotation, a.rotation.transpose() * (b.center - a.center)};
}

}  // namespace detail

/// Relative pose error over frame gap `delta`. Estimated translations are
/// scaled by `est_scale` (the Sim(3) alignment scale) before comparison.
inline RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta, double est_scale) {
  if (est.size() != gt.size()) throw InvalidParameter("rpe: trajectories differ in length");
  if (delta < 1 || static_cast<std::size_t>(delta) >= est.size()) {
    throw InvalidParameter("rpe: need 1 <= delta < trajectory length");
  }
  double st = 0.0, sr = 0.0;
  const std::size_t m = est.size() - static_cast<std::size_t>(delta);
  for (std::size_t i = 0; i < m; ++i) {
    detail::Rigid e = detail::relative(est[i], est[i + delta]);
    e.t *= est_scale;
    const detail::Rigid g = detail::relative(gt[i], gt[i + delta]);
    // g^-1 * e
    const Mat3 dr = g.r.transpose() * e.r;
    const Vec3 dt = g.r.transpose() * (e.t - g.t);
    st += dt.squaredNorm();
    const double ang = rotation_angle(dr) * 180.0 / std::numbers::pi;
    sr += ang * ang;
  }
  return {std::sqrt(st / m), std::sqrt(sr / m)};
}

/// RPE with the scale taken from the Sim(3) alignment of the two trajectories.
inline RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta = 1) {
  return rpe(est, gt, delta, umeyama_align(est, gt).scale);
}

struct TrajectoryReport {
  double ate = 0.0;
  double rpe_trans = 0.0;
  double rpe_rot = 0.0;
  Sim3 sim3;
};

inline TrajectoryReport evaluate_trajectory(const Trajectory& est, const Trajectory& gt, int delta = 1) {
  TrajectoryReport r;
  r.sim3 = umeyama_align(est, gt);
  r.ate = ate(est, gt);
  const RpeResult e = rpe(est, gt, delta, r.sim3.scale);
  r.rpe_trans = e.trans;
  r.rpe_rot = e.rot_deg;
  return r;
}

/// Largest distance between any two gt camera centres.
inline double trajectory_extent(const Trajectory& t) {
  double best = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j) best = std::max(best, (t[i].center - t[j].center).norm());
  return best;
}

// ---------------------------------------------------------------------------
// Image metrics

inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline double channel(double v, int) { return v; }
inline double channel(const Rgb& v, int c) { return v[c]; }
inline constexpr int channels_of(double) { return 1; }
inline constexpr int channels_of(const Rgb&) { return 3; }

}  // namespace detail

template <typename T>
double mse(const Grid<T>& a, const Grid<T>& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw InvalidParameter("mse: empty image");
  const int nc = detail::channels_of(T{});
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int c = 0; c < nc; ++c) {
      const double d = detail::channel(a.data()[i], c) - detail::channel(b.data()[i], c);
      s += d * d;
    }
  }
  return s / (static_cast<double>(a.size()) * nc);
}

inline double psnr_from_mse(double mse_value, double max_value) {
  if (mse_value <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse_value));
}

/// 10 log10(MAX² / MSE) in dB, capped at 99 dB for identical images.
template <typename T>
double psnr(const Grid<T>& a, const Grid<T>& b, double max_value = 1.0) {
  return psnr_from_mse(mse(a, b), max_value);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Gaussian-weighted mean over every fully contained window ("valid" region).
inline ScalarField filter_valid(const ScalarField& in, const std::vector<double>& k) {
  const int size = static_cast<int>(k.size());
  const int rows = in.rows() - size + 1;
  const int cols = in.cols() - size + 1;
  ScalarField tmp(in.rows(), cols);
  for (int r = 0; r < in.rows(); ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = 0; i < size; ++i) s += k[i] * in(r, c + i);
      tmp(r, c) = s;
    }
  ScalarField out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = 0; i < size; ++i) s += k[i] * tmp(r + i, c);
      out(r, c) = s;
    }
  return out;
}

inline double ssim_channel(const ScalarField& a, const ScalarField& b) {
  constexpr double kL = 1.0;
  constexpr double c1 = (0.01 * kL) * (0.01 * kL);
  constexpr double c2 = (0.03 * kL) * (0.03 * kL);
  const auto k = gaussian_kernel(11, 1.5);
  ScalarField aa(a.rows(), a.cols()), bb(a.rows(), a.cols()), ab(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa.data()[i] = a.data()[i] * a.data()[i];
    bb.data()[i] = b.data()[i] * b.data()[i];
    ab.data()[i] = a.data()[i] * b.data()[i];
  }
  const ScalarField mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
  const ScalarField e_aa = filter_valid(aa, k), e_bb = filter_valid(bb, k), e_ab = filter_valid(ab, k);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data()[i], mb = mu_b.data()[i];
    const double va = e_aa.data()[i] - ma * ma;
    const double vb = e_bb.data()[i] - mb * mb;
    const double cov = e_ab.data()[i] - ma * mb;
    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace detail

/// Mean SSIM over 11x11 Gaussian windows (sigma 1.5), k1 = 0.01, k2 = 0.03,
/// dynamic range 1. Colour images average the per-channel values.
template <typename T>
double ssim(const Grid<T>& a, const Grid<T>& b) {
  require_same_shape(a, b, "ssim");
  if (a.rows() < 11 || a.cols() < 11) throw InvalidParameter("ssim: images must be at least 11x11");
  const int nc = detail::channels_of(T{});
  double total = 0.0;
  for (int c = 0; c < nc; ++c) {
    ScalarField ca(a.rows(), a.cols()), cb(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ca.data()[i] = detail::channel(a.data()[i], c);
      cb.data()[i] = detail::channel(b.data()[i], c);
    }
    total += detail::ssim_channel(ca, cb);
  }
  return total / nc;
}

}  // namespace sccalib
