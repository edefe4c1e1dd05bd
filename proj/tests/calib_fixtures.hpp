#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sccalib/calib.hpp"

namespace sccalib::testing {

// Random problem: n cameras looking roughly down +z at h points, tau slots per
// frame drawn from the points, tracked positions random near the image centre.
struct Problem {
  StructuralPointTable table;
  CalibParams params;
};

inline Problem random_problem(std::mt19937_64& rng, int n, int tau, int h, bool allow_behind, bool tiny_quat) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Problem p{StructuralPointTable(n, tau), {}};
  p.params.intrinsics = Intrinsics::centered(300.0 + 400.0 * std::abs(u(rng)), 320, 240);
  for (int k = 0; k < h; ++k) p.params.sp3d.emplace_back(u(rng), u(rng), u(rng));
  for (int i = 0; i < n; ++i) {
    CameraParams c;
    const Vec3 axis = Vec3(g(rng), g(rng), g(rng)).normalized();
    c.quat = quat_from_axis_angle(axis, 0.3 * u(rng));
    if (tiny_quat) c.quat *= 0.02;
    if (i == 0 && tiny_quat) c.quat = Quat(1e-3, 0.8, -0.6, 1e-3);  // near a half turn, w ~ 0
    c.trans = Vec3(0.3 * u(rng), 0.3 * u(rng), 4.0 + u(rng));
    c.frame_index = i;
    p.params.cameras.push_back(c);
  }
  if (allow_behind) {
    // Push two points far behind every camera's image plane.
    for (int k = 0; k < std::min(2, h); ++k) p.params.sp3d[k].z() = -6.0 - std::abs(u(rng));
  }
  for (int i = 0; i < n; ++i) {
    std::vector<int> ids(h);
    for (int k = 0; k < h; ++k) ids[k] = k;
    std::shuffle(ids.begin(), ids.end(), rng);
    for (int s = 0; s < tau; ++s) {
      p.table.index(i, s) = ids[s];
      p.table.pos(i, s) = Vec2(160 + 60 * u(rng), 120 + 60 * u(rng));
    }
  }
  p.table.set_h_total(h);
  p.table.sp3d() = p.params.sp3d;
  return p;
}

// Flatten/unflatten all 7N + 1 + 3H scalars.
inline std::vector<double*> scalars(CalibParams& p) {
  std::vector<double*> out;
  for (auto& c : p.cameras) {
    for (int k = 0; k < 4; ++k) out.push_back(&c.quat[k]);
    for (int k = 0; k < 3; ++k) out.push_back(&c.trans[k]);
  }
  out.push_back(&p.intrinsics.focal);
  for (auto& x : p.sp3d)
    for (int k = 0; k < 3; ++k) out.push_back(&x[k]);
  return out;
}

inline std::vector<double> flatten(const CalibGradient& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.quat.size(); ++i) {
    for (int k = 0; k < 4; ++k) out.push_back(g.quat[i][k]);
    for (int k = 0; k < 3; ++k) out.push_back(g.trans[i][k]);
  }
  out.push_back(g.focal);
  for (const auto& x : g.points)
    for (int k = 0; k < 3; ++k) out.push_back(x[k]);
  return out;
}

inline double fd_relative_error(const StructuralPointTable& table, const CalibParams& params) {
  const std::vector<double> analytic = flatten(grad_total_loss(table, params));
  CalibParams work = params;
  const auto ptrs = scalars(work);
  if (ptrs.size() != params.num_scalars()) throw Error("parameter count mismatch");
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t k = 0; k < ptrs.size(); ++k) {
    const double x0 = *ptrs[k];
    const double h = 1e-5 * std::max(std::abs(x0), 1e-2);
    *ptrs[k] = x0 + h;
    const double fp = total_loss(table, work);
    *ptrs[k] = x0 - h;
    const double fm = total_loss(table, work);
    *ptrs[k] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    diff2 += (fd - analytic[k]) * (fd - analytic[k]);
    ref2 += fd * fd;
  }
  return std::sqrt(diff2 / std::max(ref2, 1e-300));
}

}  // namespace sccalib::testing
