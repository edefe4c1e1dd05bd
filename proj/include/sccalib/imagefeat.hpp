#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sccalib/image.hpp"

namespace sccalib {

struct PixelPos {
  int row = 0;
  int col = 0;
  auto operator<=>(const PixelPos&) const = default;
};

/// Maxima of the edge-restricted gradient magnitude on the static part of a frame.
struct CandidatePool {
  int frame_index = 0;
  std::vector<PixelPos> points;
  std::vector<double> scores;

  std::size_t size() const noexcept { return points.size(); }
};

struct FeatureParams {
  double canny_low = 0.1;
  double canny_high = 0.2;
  int window = 9;
};

inline ScalarField grayscale(const RgbImage& rgb) {
  if (rgb.empty()) throw InvalidParameter("grayscale: empty image");
  ScalarField out(rgb.rows(), rgb.cols());
  for (int r = 0; r < rgb.rows(); ++r) {
    for (int c = 0; c < rgb.cols(); ++c) {
      const Rgb& p = rgb(r, c);
      out(r, c) = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

namespace detail {

struct SobelResponse {
  double gx = 0.0;
  double gy = 0.0;
};

// 3x3 Sobel with replicate padding; `value(r, c)` must accept out-of-range indices.
template <typename Sample>
SobelResponse sobel_at(int r, int c, Sample&& value) {
  const double tl = value(r - 1, c - 1), tc = value(r - 1, c), tr = value(r - 1, c + 1);
  const double ml = value(r, c - 1), mr = value(r, c + 1);
  const double bl = value(r + 1, c - 1), bc = value(r + 1, c), br = value(r + 1, c + 1);
  return {(tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl), (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr)};
}

}  // namespace detail

/// sqrt of the summed squared Sobel responses of the three colour channels.
inline ScalarField gradient_magnitude(const RgbImage& rgb) {
  if (rgb.rows() < 3 || rgb.cols() < 3) throw InvalidParameter("gradient_magnitude: image smaller than 3x3");
  ScalarField out(rgb.rows(), rgb.cols());
  for (int r = 0; r < rgb.rows(); ++r) {
    for (int c = 0; c < rgb.cols(); ++c) {
      double sum = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const auto s = detail::sobel_at(r, c, [&](int rr, int cc) { return double(rgb.clamped(rr, cc)[ch]); });
        sum += s.gx * s.gx + s.gy * s.gy;
      }
      out(r, c) = std::sqrt(sum);
    }
  }
  return out;
}

/// Canny edge map. Thresholds are fractions of the maximum Sobel magnitude.
inline BinaryField canny_edges(const ScalarField& gray, double low_frac, double high_frac) {
  if (!(low_frac > 0.0) || !(low_frac < high_frac) || !(high_frac <= 1.0)) {
    throw InvalidParameter("canny_edges: require 0 < low_frac < high_frac <= 1");
  }
  if (gray.rows() < 3 || gray.cols() < 3) throw InvalidParameter("canny_edges: image smaller than 3x3");
  const int rows = gray.rows();
  const int cols = gray.cols();

  ScalarField mag(rows, cols);
  Grid<std::uint8_t> dir(rows, cols);  // 0: horizontal gradient, 1: 45deg, 2: vertical, 3: 135deg
  double max_mag = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto s = detail::sobel_at(r, c, [&](int rr, int cc) { return gray.clamped(rr, cc); });
      const double m = std::hypot(s.gx, s.gy);
      mag(r, c) = m;
      max_mag = std::max(max_mag, m);
      double angle = std::atan2(s.gy, s.gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      std::uint8_t d = 0;
      if (angle >= 22.5 && angle < 67.5) d = 1;
      else if (angle >= 67.5 && angle < 112.5) d = 2;
      else if (angle >= 112.5 && angle < 157.5) d = 3;
      dir(r, c) = d;
    }
  }

  BinaryField edges(rows, cols, 0);
  if (max_mag <= 0.0) return edges;
  const double low = low_frac * max_mag;
  const double high = high_frac * max_mag;

  auto mag_at = [&](int r, int c) { return mag.contains(r, c) ? mag(r, c) : 0.0; };

  // Non-maximum suppression. Strict on the negative side, non-strict on the
  // positive side, so a plateau two pixels wide thins to its first pixel.
  static constexpr int kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
  Grid<std::uint8_t> state(rows, cols, 0);  // 0 none, 1 weak, 2 strong
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double m = mag(r, c);
      if (m < low || m <= 0.0) continue;
      const int dr = kStep[dir(r, c)][0];
      const int dc = kStep[dir(r, c)][1];
      if (!(m > mag_at(r - dr, c - dc) && m >= mag_at(r + dr, c + dc))) continue;
      state(r, c) = m >= high ? 2 : 1;
    }
  }

  // Hysteresis: grow strong pixels through 8-connected weak ones.
  std::vector<PixelPos> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (state(r, c) == 2) {
        edges(r, c) = 1;
        stack.push_back({r, c});
      }
    }
  }
  while (!stack.empty()) {
    const PixelPos p = stack.back();
    stack.pop_back();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = p.row + dr, cc = p.col + dc;
        if (!state.contains(rr, cc) || edges(rr, cc) || state(rr, cc) == 0) continue;
        edges(rr, cc) = 1;
        stack.push_back({rr, cc});
      }
    }
  }
  return edges;
}

/// Maximum filter over the edge-restricted gradient, intersected with the
/// static mask. Equal maxima inside one window keep only the lowest (row, col).
inline CandidatePool select_candidates(const ScalarField& grad, const BinaryField& edges, const BinaryField& mask,
                                       int window) {
  require_same_shape(grad, edges, "select_candidates");
  require_same_shape(grad, mask, "select_candidates");
  if (window < 3 || window % 2 == 0) throw InvalidParameter("select_candidates: window must be odd and >= 3");

  const int rows = grad.rows();
  const int cols = grad.cols();
  const int half = window / 2;
  ScalarField f(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (edges(r, c)) f(r, c) = grad(r, c);

  CandidatePool pool;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = f(r, c);
      if (!(v > 0.0) || !mask(r, c)) continue;
      bool keep = true;
      for (int rr = std::max(0, r - half); keep && rr <= std::min(rows - 1, r + half); ++rr) {
        for (int cc = std::max(0, c - half); cc <= std::min(cols - 1, c + half); ++cc) {
          const double u = f(rr, cc);
          if (u > v || (u == v && PixelPos{rr, cc} < PixelPos{r, c})) {
            keep = false;
            break;
          }
        }
      }
      if (keep) {
        pool.points.push_back({r, c});
        pool.scores.push_back(grad(r, c));
      }
    }
  }
  return pool;
}

/// Candidate pool of one frame: Canny on the grayscale image, colour gradient
/// magnitude, maximum filter, motion mask.
inline CandidatePool build_pool(const RgbImage& rgb, const BinaryField& mask, const FeatureParams& params,
                                int frame_index) {
  require_same_shape(rgb, mask, "build_pool");
  const BinaryField edges = canny_edges(grayscale(rgb), params.canny_low, params.canny_high);
  CandidatePool pool = select_candidates(gradient_magnitude(rgb), edges, mask, params.window);
  pool.frame_index = frame_index;
  return pool;
}

}  // namespace sccalib
