#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sccalib/geometry.hpp"
#include "sccalib/image.hpp"

namespace sccalib {

using Mat2 = Eigen::Matrix2d;

/// One 3D Gaussian primitive with a constant (degree-0) colour.
struct Gaussian3D {
  Vec3 mu = Vec3::Zero();
  Quat quat = identity_quat();
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  Vec3 color = Vec3::Ones();

  void validate() const {
    if (!(scale.minCoeff() > 0.0)) throw InvalidParameter("Gaussian3D: scale must be positive");
    if (!(opacity >= 0.0 && opacity <= 1.0)) throw InvalidParameter("Gaussian3D: opacity outside [0,1]");
    normalized_quat(quat);
  }
};

using GaussianCloud = std::vector<Gaussian3D>;

/// Σ = R S Sᵀ Rᵀ with S = diag(scale).
inline Mat3 covariance_from(const Vec3& scale, const Quat& quat) {
  if (!(scale.minCoeff() > 0.0)) throw InvalidParameter("covariance_from: scale must be positive");
  const Mat3 r = quat_to_rotation(quat);
  const Mat3 s = scale.asDiagonal();
  return r * s * s.transpose() * r.transpose();
}

/// Screen-space covariance J W Σ Wᵀ Jᵀ, with W the rotation of the camera
/// and J the Jacobian of (x,y,z) -> (f x/z, f y/z) at the view-space centre.
inline Mat2 project_covariance(const Mat3& sigma, const CameraParams& cam, const Intrinsics& intr, const Vec3& mu) {
  const Mat3 w = cam.rotation();
  const Vec3 v = w * mu + cam.trans;
  if (!(v.z() > 0.0)) throw BehindCamera("project_covariance: centre has non-positive view depth");
  const double f = intr.focal;
  const double iz = 1.0 / v.z();
  Eigen::Matrix<double, 2, 3> j;
  j << f * iz, 0.0, -f * v.x() * iz * iz, 0.0, f * iz, -f * v.y() * iz * iz;
  const Mat2 out = j * w * sigma * w.transpose() * j.transpose();
  return 0.5 * (out + out.transpose());
}

inline constexpr double kMaxCondition = 1e12;

/// exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ)).
template <int D>
double gaussian_weight(const Eigen::Matrix<double, D, 1>& mean, const Eigen::Matrix<double, D, D>& cov,
                       const Eigen::Matrix<double, D, 1>& x) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> es(cov);
  const auto ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0) || ev.maxCoeff() / ev.minCoeff() > kMaxCondition) {
    throw NumericalError("gaussian_weight: covariance is singular or ill-conditioned");
  }
  const Eigen::Matrix<double, D, 1> d = x - mean;
  const Eigen::Matrix<double, D, 1> y = es.eigenvectors().transpose() * d;
  return std::exp(-0.5 * (y.array().square() / ev.array()).sum());
}

inline double gaussian_weight(const Gaussian3D& g, const Vec3& x) {
  return gaussian_weight<3>(g.mu, covariance_from(g.scale, g.quat), x);
}

struct SplatSample {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;  // opacity times Gaussian weight
};

inline constexpr double kMaxAlpha = 0.999;

/// Front-to-back compositing C = Σ c_k α_k Π_{j<k}(1 - α_j) over a depth-sorted
/// list; whatever transmittance is left shows a black background.
inline Vec3 alpha_blend_pixel(std::span<const SplatSample> splats) {
  Vec3 c = Vec3::Zero();
  double transmittance = 1.0;
  for (const auto& s : splats) {
    const double a = std::clamp(s.alpha, 0.0, kMaxAlpha);
    c += s.color * (a * transmittance);
    transmittance *= 1.0 - a;
  }
  return c;
}

/// CPU forward render at the intrinsics' resolution: every pixel blends, in
/// view-depth order, the splats whose alpha there is at least 1/255.
inline RgbImage render_preview(const GaussianCloud& cloud, const CameraParams& cam, const Intrinsics& intr) {
  if (cloud.empty()) throw InvalidParameter("render_preview: empty cloud");
  intr.validate();
  struct Hit {
    double depth;
    std::size_t order;
    SplatSample sample;
  };
  Grid<std::vector<Hit>> hits(intr.height, intr.width);
  const Mat3 rot = cam.rotation();
  for (std::size_t gi = 0; gi < cloud.size(); ++gi) {
    const Gaussian3D& g = cloud[gi];
    g.validate();
    const Vec3 v = rot * g.mu + cam.trans;
    if (!(v.z() > intr.znear) || v.z() > intr.zfar) continue;
    const Vec2 center = pinhole_pixel(v, intr);
    const Mat2 cov = project_covariance(covariance_from(g.scale, g.quat), cam, intr, g.mu);
    const Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    if (!(es.eigenvalues().minCoeff() > 0.0)) continue;
    const double radius = 3.0 * std::sqrt(es.eigenvalues().maxCoeff());
    const int c0 = std::max(0, static_cast<int>(std::floor(center.x() - radius)));
    const int c1 = std::min(intr.width - 1, static_cast<int>(std::ceil(center.x() + radius)));
    const int r0 = std::max(0, static_cast<int>(std::floor(center.y() - radius)));
    const int r1 = std::min(intr.height - 1, static_cast<int>(std::ceil(center.y() + radius)));
    const Mat2 inv = cov.inverse();
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Vec2 d(c - center.x(), r - center.y());
        const double alpha = g.opacity * std::exp(-0.5 * d.dot(inv * d));
        if (alpha < 1.0 / 255.0) continue;
        hits(r, c).push_back({v.z(), gi, {g.color, alpha}});
      }
    }
  }
  RgbImage out(intr.height, intr.width, Rgb{0.0f, 0.0f, 0.0f});
  std::vector<SplatSample> sorted;
  for (int r = 0; r < intr.height; ++r) {
    for (int c = 0; c < intr.width; ++c) {
      auto& list = hits(r, c);
      if (list.empty()) continue;
      std::sort(list.begin(), list.end(), [](const Hit& a, const Hit& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.order < b.order);
      });
      sorted.clear();
      for (const auto& h : list) sorted.push_back(h.sample);
      const Vec3 px = alpha_blend_pixel(sorted);
      out(r, c) = Rgb{static_cast<float>(px.x()), static_cast<float>(px.y()), static_cast<float>(px.z())};
    }
  }
  return out;
}

/// Isotropic 2D splats drawn directly in pixel space, composited in list
/// order. Used as the reference image for overlay checks.
inline RgbImage render_splats_2d(std::span<const Vec2> centers, double sigma_px, const Vec3& color, int rows,
                                 int cols) {
  if (!(sigma_px > 0.0)) throw InvalidParameter("render_splats_2d: sigma must be positive");
  Grid<std::vector<SplatSample>> hits(rows, cols);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  for (const Vec2& c : centers) {
    const int cc = static_cast<int>(std::lround(c.x()));
    const int cr = static_cast<int>(std::lround(c.y()));
    for (int r = cr - radius; r <= cr + radius; ++r) {
      for (int q = cc - radius; q <= cc + radius; ++q) {
        if (!hits.contains(r, q)) continue;
        const Vec2 d(q - c.x(), r - c.y());
        const double alpha = std::exp(-0.5 * d.squaredNorm() / (sigma_px * sigma_px));
        if (alpha >= 1.0 / 255.0) hits(r, q).push_back({color, alpha});
      }
    }
  }
  RgbImage out(rows, cols, Rgb{0.0f, 0.0f, 0.0f});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (hits(r, c).empty()) continue;
      const Vec3 px = alpha_blend_pixel(hits(r, c));
      out(r, c) = Rgb{static_cast<float>(px.x()), static_cast<float>(px.y()), static_cast<float>(px.z())};
    }
  return out;
}

/// Raw input followed by sin(2^l π x), cos(2^l π x) for l = 0..L-1, per input
/// dimension. Output size d + 2dL.
inline std::vector<double> positional_encoding(std::span<const double> x, int levels) {
  if (levels < 1) throw InvalidParameter("positional_encoding: L must be >= 1");
  std::vector<double> out(x.begin(), x.end());
  out.reserve(x.size() * (1 + 2 * static_cast<std::size_t>(levels)));
  for (const double v : x) {
    for (int l = 0; l < levels; ++l) {
      const double a = std::ldexp(std::numbers::pi, l) * v;
      out.push_back(std::sin(a));
      out.push_back(std::cos(a));
    }
  }
  return out;
}

}  // namespace sccalib
