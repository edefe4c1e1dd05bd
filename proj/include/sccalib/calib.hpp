#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include "sccalib/geometry.hpp"
#include "sccalib/spe.hpp"

namespace sccalib {

/// Everything the calibration optimizes: N poses, one focal, H points.
struct CalibParams {
  std::vector<CameraParams> cameras;
  Intrinsics intrinsics;
  std::vector<Vec3> sp3d;

  // 7N + 1 + 3H
  std::size_t num_scalars() const { return 7 * cameras.size() + 1 + 3 * sp3d.size(); }
  bool operator==(const CalibParams& o) const {
    if (cameras.size() != o.cameras.size() || sp3d != o.sp3d || intrinsics.focal != o.intrinsics.focal) return false;
    for (std::size_t i = 0; i < cameras.size(); ++i)
      if (cameras[i].quat != o.cameras[i].quat || cameras[i].trans != o.cameras[i].trans) return false;
    return true;
  }
};

/// Same layout as CalibParams. Quaternion entries are derivatives with respect
/// to the raw (unnormalized) components.
struct CalibGradient {
  std::vector<Quat> quat;
  std::vector<Vec3> trans;
  double focal = 0.0;
  std::vector<Vec3> points;

  double squared_norm() const {
    double s = focal * focal;
    for (const auto& q : quat) s += q.squaredNorm();
    for (const auto& t : trans) s += t.squaredNorm();
    for (const auto& p : points) s += p.squaredNorm();
    return s;
  }
};

struct LossBreakdown {
  double projection = 0.0;
  double distance = 0.0;
  double depth = 0.0;
  double total() const { return projection + distance + depth; }
};

struct OptimizerConfig {
  double lr_quat = 0.01;
  double lr_trans = 0.01;
  double lr_focal = 1.0;
  double lr_points = 0.01;
  int iterations = 2000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (!(lr_quat > 0.0 && lr_trans > 0.0 && lr_focal > 0.0 && lr_points > 0.0)) {
      throw InvalidParameter("learning rates must be positive");
    }
    if (iterations < 0) throw InvalidParameter("iterations must be >= 0");
    if (threads < 1) throw InvalidParameter("threads must be >= 1");
  }
};

namespace detail {

// Static-chunk parallel loop over [0, n). Work items must not share output.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& body) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    body(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

// Derivatives of the rotation matrix with respect to each unit-quaternion component.
inline void rotation_partials(const Quat& q, Mat3 d[4]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
}

}  // namespace detail

/// ℒ = ℒ_proj + ℒ_de + ℒ_dr over a complete structural point table, with an
/// analytic gradient. Tracked pairwise distances are precomputed once.
class CalibrationProblem {
 public:
  explicit CalibrationProblem(const StructuralPointTable& table) : table_(&table) {
    if (!table.complete()) throw InvalidParameter("calibration needs a complete table (empty slots remain)");
    const int tau = table.tau();
    pairs_ = tau * (tau - 1) / 2;
    if (tau >= 2) {
      tracked_dist_.resize(static_cast<std::size_t>(table.n()) * pairs_);
      for (int f = 0; f < table.n(); ++f) {
        const auto pos = table.frame_positions(f);
        double* out = tracked_dist_.data() + static_cast<std::size_t>(f) * pairs_;
        for (int s = 0; s < tau; ++s)
          for (int r = s + 1; r < tau; ++r) *out++ = (pos[s] - pos[r]).norm();
      }
    }
  }

  const StructuralPointTable& table() const { return *table_; }

  /// Loss terms; fills `grad` when non-null.
  LossBreakdown evaluate(const CalibParams& params, CalibGradient* grad, int threads = 1,
                         bool with_distance = true) const {
    check(params);
    const StructuralPointTable& table = *table_;
    const int n = table.n();
    const int tau = table.tau();
    if (with_distance && tau < 2) throw InvalidParameter("distance loss needs tau >= 2");

    std::vector<LossBreakdown> frame_loss(static_cast<std::size_t>(n));
    std::vector<double> frame_dfocal;
    std::vector<Vec3> slot_dpoint;  // n*tau, reduced in frame order afterwards
    if (grad) {
      grad->quat.assign(static_cast<std::size_t>(n), Quat::Zero());
      grad->trans.assign(static_cast<std::size_t>(n), Vec3::Zero());
      grad->points.assign(params.sp3d.size(), Vec3::Zero());
      grad->focal = 0.0;
      frame_dfocal.assign(static_cast<std::size_t>(n), 0.0);
      slot_dpoint.assign(static_cast<std::size_t>(n) * tau, Vec3::Zero());
    }

    detail::parallel_for(n, threads, [&](int begin, int end) {
      std::vector<Vec3> view(static_cast<std::size_t>(tau));
      std::vector<Vec2> proj(static_cast<std::size_t>(tau));
      std::vector<Vec2> g_pix(static_cast<std::size_t>(tau));
      for (int f = begin; f < end; ++f) {
        evaluate_frame(params, f, grad != nullptr, with_distance, view, proj, g_pix, frame_loss[f],
                       grad ? &grad->quat[f] : nullptr, grad ? &grad->trans[f] : nullptr,
                       grad ? &frame_dfocal[f] : nullptr,
                       grad ? slot_dpoint.data() + static_cast<std::size_t>(f) * tau : nullptr);
      }
    });

    LossBreakdown total;
    for (int f = 0; f < n; ++f) {
      total.projection += frame_loss[f].projection;
      total.distance += frame_loss[f].distance;
      total.depth += frame_loss[f].depth;
    }
    if (grad) {
      for (int f = 0; f < n; ++f) {
        grad->focal += frame_dfocal[f];
        const auto idx = table.frame_indices(f);
        for (int s = 0; s < tau; ++s) grad->points[idx[s]] += slot_dpoint[static_cast<std::size_t>(f) * tau + s];
      }
    }
    return total;
  }

 private:
  void check(const CalibParams& params) const {
    if (static_cast<int>(params.cameras.size()) != table_->n()) {
      throw InvalidParameter("camera count does not match the table");
    }
    if (static_cast<int>(params.sp3d.size()) != table_->h_total()) {
      throw InvalidParameter("point count does not match the table");
    }
  }

  void evaluate_frame(const CalibParams& params, int f, bool want_grad, bool with_distance, std::vector<Vec3>& view,
                      std::vector<Vec2>& proj, std::vector<Vec2>& g_pix, LossBreakdown& loss, Quat* g_quat,
                      Vec3* g_trans, double* g_focal, Vec3* g_point_slots) const {
    const StructuralPointTable& table = *table_;
    const int tau = table.tau();
    const CameraParams& cam = params.cameras[f];
    const double qn = cam.quat.norm();
    const Quat qu = normalized_quat(cam.quat);
    const Mat3 rot = quat_to_rotation(qu);
    const Intrinsics& in = params.intrinsics;
    const auto idx = table.frame_indices(f);
    const auto tracked = table.frame_positions(f);

    double proj_sum = 0.0;
    double depth_sum = 0.0;
    for (int s = 0; s < tau; ++s) {
      view[s] = rot * params.sp3d[idx[s]] + cam.trans;
      proj[s] = pinhole_pixel(view[s], in);
      const Vec2 r = proj[s] - tracked[s];
      proj_sum += r.squaredNorm();
      if (view[s].z() < 0.0) depth_sum -= view[s].z();
      if (want_grad) g_pix[s] = (2.0 / tau) * r;
    }
    loss.projection = proj_sum / tau;
    loss.depth = depth_sum;

    if (with_distance && tau >= 2) {
      const double* dist = tracked_dist_.data() + static_cast<std::size_t>(f) * pairs_;
      const double inv_pairs = 1.0 / pairs_;
      double de_sum = 0.0;
      for (int s = 0; s < tau; ++s) {
        const double px = proj[s].x(), py = proj[s].y();
        for (int r = s + 1; r < tau; ++r) {
          const double dx = px - proj[r].x();
          const double dy = py - proj[r].y();
          const double d = std::sqrt(dx * dx + dy * dy);
          const double e = d - *dist++;
          de_sum += e * e;
          if (want_grad && d > 0.0) {
            const double c = 2.0 * e * inv_pairs / d;
            g_pix[s].x() += c * dx;
            g_pix[s].y() += c * dy;
            g_pix[r].x() -= c * dx;
            g_pix[r].y() -= c * dy;
          }
        }
      }
      loss.distance = de_sum * inv_pairs;
    }
    if (!want_grad) return;

    Mat3 g_rot = Mat3::Zero();
    Vec3 g_t = Vec3::Zero();
    double g_f = 0.0;
    for (int s = 0; s < tau; ++s) {
      const Vec3& v = view[s];
      const double iz = 1.0 / v.z();
      const double a = v.x() * iz, b = v.y() * iz;
      const Vec2& gp = g_pix[s];
      g_f += gp.x() * a + gp.y() * b;
      Vec3 gv(in.focal * iz * gp.x(), in.focal * iz * gp.y(), -in.focal * iz * (a * gp.x() + b * gp.y()));
      if (v.z() < 0.0) gv.z() -= 1.0;
      g_t += gv;
      g_point_slots[s] = rot.transpose() * gv;
      g_rot.noalias() += gv * params.sp3d[idx[s]].transpose();
    }
    Mat3 dr[4];
    detail::rotation_partials(qu, dr);
    Quat g_unit;
    for (int k = 0; k < 4; ++k) g_unit[k] = (g_rot.array() * dr[k].array()).sum();
    *g_quat = (g_unit - qu * qu.dot(g_unit)) / qn;
    *g_trans = g_t;
    *g_focal = g_f;
  }

  const StructuralPointTable* table_;
  int pairs_ = 0;
  std::vector<double> tracked_dist_;
};

/// Σ_frames mean_points |proj - tracked|², pixels².
inline double loss_projection(const StructuralPointTable& table, const CalibParams& params) {
  return CalibrationProblem(table).evaluate(params, nullptr, 1, false).projection;
}

/// Σ_frames mean over point pairs of (projected distance - tracked distance)².
inline double loss_distance(const StructuralPointTable& table, const CalibParams& params) {
  if (table.tau() < 2) throw InvalidParameter("loss_distance: tau must be >= 2");
  return CalibrationProblem(table).evaluate(params, nullptr, 1, true).distance;
}

/// Σ ReLU(-w) over every projected structural point.
inline double loss_depth(const StructuralPointTable& table, const CalibParams& params) {
  return CalibrationProblem(table).evaluate(params, nullptr, 1, false).depth;
}

inline double total_loss(const StructuralPointTable& table, const CalibParams& params) {
  return loss_projection(table, params) + loss_distance(table, params) + loss_depth(table, params);
}

inline CalibGradient grad_total_loss(const StructuralPointTable& table, const CalibParams& params) {
  CalibGradient g;
  CalibrationProblem(table).evaluate(params, &g);
  return g;
}

struct InitNoise {
  double rot_sigma_deg = 1.0;
  double trans_sigma = 0.01;
};

/// Identity rig with small random jitter, focal = image width, all points at 0.5.
inline CalibParams init_cameras(int n, const Intrinsics& intr_guess, std::uint64_t seed, int num_points = 0,
                                const InitNoise& noise = {}) {
  if (n < 2) throw InvalidParameter("init_cameras: need at least 2 frames");
  Intrinsics intr = Intrinsics::centered(static_cast<double>(intr_guess.width), intr_guess.width, intr_guess.height,
                                         intr_guess.znear, intr_guess.zfar);
  intr.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rot_sigma = noise.rot_sigma_deg * std::numbers::pi / 180.0;

  CalibParams p;
  p.intrinsics = intr;
  p.cameras.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 rv(normal(rng), normal(rng), normal(rng));
    const Vec3 tv(normal(rng), normal(rng), normal(rng));
    const Vec3 rotvec = rot_sigma * rv;
    p.cameras[i].quat = quat_from_axis_angle(rotvec, rotvec.norm());
    p.cameras[i].trans = noise.trans_sigma * tv;
    p.cameras[i].frame_index = i;
  }
  p.sp3d.assign(static_cast<std::size_t>(std::max(num_points, 0)), Vec3::Constant(0.5));
  return p;
}

struct CalibResult {
  CalibParams params;
  std::vector<double> loss_trace;  // iterations + 1 entries, starting with the initial loss
};

namespace detail {

template <typename V>
void adam_update(V& value, const V& grad, V& m, V& v, double lr, double b1, double b2, double eps, double c1,
                 double c2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  value -= (lr * (m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
}

}  // namespace detail

using IterationCallback = std::function<void(int iteration, const LossBreakdown& loss)>;

/// Adam with constant per-group learning rates on all 7N + 1 + 3H scalars.
/// Quaternions are renormalized and focal kept positive after every step.
inline CalibResult calibrate(const StructuralPointTable& table, const CalibParams& init, const OptimizerConfig& cfg,
                             const IterationCallback& on_iteration = {}) {
  cfg.validate();
  const CalibrationProblem problem(table);
  CalibResult res{init, {}};
  CalibParams& p = res.params;
  const std::size_t n = p.cameras.size();
  const std::size_t h = p.sp3d.size();
  res.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);

  std::vector<Quat> mq(n, Quat::Zero()), vq(n, Quat::Zero());
  std::vector<Vec3> mt(n, Vec3::Zero()), vt(n, Vec3::Zero());
  std::vector<Vec3> mp(h, Vec3::Zero()), vp(h, Vec3::Zero());
  Eigen::Matrix<double, 1, 1> mf = Eigen::Matrix<double, 1, 1>::Zero(), vf = mf;

  CalibGradient g;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_eps;
  for (int it = 0; it < cfg.iterations; ++it) {
    const LossBreakdown loss = problem.evaluate(p, &g, cfg.threads);
    if (!std::isfinite(loss.total()) || !std::isfinite(g.squared_norm())) {
      throw DivergenceError(it, "non-finite loss or gradient");
    }
    res.loss_trace.push_back(loss.total());
    if (on_iteration) on_iteration(it, loss);

    const double c1 = 1.0 - std::pow(b1, it + 1);
    const double c2 = 1.0 - std::pow(b2, it + 1);
    for (std::size_t i = 0; i < n; ++i) {
      detail::adam_update(p.cameras[i].quat, g.quat[i], mq[i], vq[i], cfg.lr_quat, b1, b2, eps, c1, c2);
      p.cameras[i].quat = normalized_quat(p.cameras[i].quat);
      detail::adam_update(p.cameras[i].trans, g.trans[i], mt[i], vt[i], cfg.lr_trans, b1, b2, eps, c1, c2);
    }
    Eigen::Matrix<double, 1, 1> f(p.intrinsics.focal), gf(g.focal);
    detail::adam_update(f, gf, mf, vf, cfg.lr_focal, b1, b2, eps, c1, c2);
    p.intrinsics.focal = std::max(f[0], 1e-6);
    for (std::size_t j = 0; j < h; ++j) {
      detail::adam_update(p.sp3d[j], g.points[j], mp[j], vp[j], cfg.lr_points, b1, b2, eps, c1, c2);
    }
  }
  const double final_loss = problem.evaluate(p, nullptr, cfg.threads).total();
  if (!std::isfinite(final_loss)) throw DivergenceError(cfg.iterations, "non-finite loss");
  res.loss_trace.push_back(final_loss);
  return res;
}

/// Pixel distance between projected and tracked positions for every table entry.
inline std::vector<double> reprojection_errors(const StructuralPointTable& table, const CalibParams& params) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(table.n()) * table.tau());
  for (int f = 0; f < table.n(); ++f) {
    const Mat3 rot = params.cameras[f].rotation();
    for (int s = 0; s < table.tau(); ++s) {
      const Vec3 v = rot * params.sp3d.at(table.index(f, s)) + params.cameras[f].trans;
      out.push_back((pinhole_pixel(v, params.intrinsics) - table.pos(f, s)).norm());
    }
  }
  return out;
}

inline double mean_reprojection_error(const StructuralPointTable& table, const CalibParams& params) {
  const auto e = reprojection_errors(table, params);
  double s = 0.0;
  for (double v : e) s += v;
  return e.empty() ? 0.0 : s / static_cast<double>(e.size());
}

}  // namespace sccalib
