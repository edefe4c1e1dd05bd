#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "sccalib/frames.hpp"
#include "sccalib/geometry.hpp"
#include "sccalib/spe.hpp"
#include "sccalib/tracking.hpp"

namespace sccalib {

/// Parameters of the built-in synthetic dataset: cameras on a circular arc
/// looking at a cube of static points, optionally with a moving (masked) blob
/// and a staggered occlusion schedule.
struct SynthConfig {
  int frames = 20;
  int points = 200;
  int width = 640;
  int height = 360;
  double focal = 500.0;
  double radius = 4.0;
  double arc_deg = 60.0;
  double elevation = 0.8;    // camera height above the cube centre
  double cube_size = 1.0;
  double noise_sigma = 0.0;
  double dropout = 0.0;
  double occlude_fraction = 0.0;  // share of points hidden at staggered frames
  int occlude_length = 0;         // frames each hidden point stays hidden; 0 = forever
  bool dynamic_object = false;    // a moving square masked out as dynamic
  std::uint64_t seed = 0;
};

inline SyntheticScene make_arc_scene(const SynthConfig& cfg) {
  if (cfg.frames < 2 || cfg.points < 1) throw InvalidParameter("synth: need >= 2 frames and >= 1 point");
  SyntheticScene scene;
  scene.gt_intrinsics = Intrinsics::centered(cfg.focal, cfg.width, cfg.height);
  scene.noise_sigma = cfg.noise_sigma;
  scene.dropout = cfg.dropout;
  scene.seed = cfg.seed;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  scene.gt_points.reserve(static_cast<std::size_t>(cfg.points));
  for (int p = 0; p < cfg.points; ++p) {
    const double x = unit(rng), y = unit(rng), z = unit(rng);
    scene.gt_points.emplace_back(cfg.cube_size * x, cfg.cube_size * y, cfg.cube_size * z);
  }

  const double arc = cfg.arc_deg * std::numbers::pi / 180.0;
  for (int i = 0; i < cfg.frames; ++i) {
    const double theta = -0.5 * arc + arc * i / (cfg.frames - 1);
    const Vec3 eye(cfg.radius * std::sin(theta), -cfg.elevation, -cfg.radius * std::cos(theta));
    scene.gt_cameras.push_back(look_at(eye, Vec3::Zero(), Vec3(0.0, -1.0, 0.0), i));
  }

  if (cfg.occlude_fraction > 0.0) {
    const int hidden = static_cast<int>(std::lround(cfg.occlude_fraction * cfg.points));
    std::vector<int> order(static_cast<std::size_t>(cfg.points));
    for (int p = 0; p < cfg.points; ++p) order[p] = p;
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < hidden; ++k) {
      // Stagger the start frames over the middle of the sequence.
      const int begin = 1 + (k * std::max(1, cfg.frames - 2)) / std::max(1, hidden);
      OcclusionSpan span{order[k], begin, cfg.occlude_length > 0 ? begin + cfg.occlude_length : cfg.frames};
      scene.occlusions.push_back(span);
    }
  }
  return scene;
}

/// Complete table with one slot per gt point, tracked positions from the exact
/// projections plus the scene's pixel noise. Requires every point visible in
/// every frame.
inline StructuralPointTable table_from_scene(const SyntheticScene& scene, std::uint64_t noise_seed) {
  const int n = scene.num_frames();
  const int h = static_cast<int>(scene.gt_points.size());
  StructuralPointTable table(n, h);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int f = 0; f < n; ++f) {
    for (int p = 0; p < h; ++p) {
      const auto o = scene.observe(p, f);
      if (!o.visible) throw InvalidParameter("table_from_scene: point " + std::to_string(p) + " hidden in frame " +
                                             std::to_string(f));
      const double nx = normal(rng), ny = normal(rng);
      table.index(f, p) = p;
      table.pos(f, p) = o.pixel + scene.noise_sigma * Vec2(nx, ny);
    }
  }
  table.set_h_total(h);
  table.sp3d().assign(static_cast<std::size_t>(h), Vec3::Constant(0.5));
  return table;
}

/// Square of the moving object in frame `i` as (row0, col0, size); size 0 if none.
inline std::array<int, 3> dynamic_square(const SynthConfig& cfg, int i) {
  if (!cfg.dynamic_object) return {0, 0, 0};
  const int size = std::max(8, cfg.height / 6);
  const int span = std::max(1, cfg.width - size - 2);
  const int col = 1 + (i * 7) % span;
  const int row = cfg.height - size - 2;
  return {row, col, size};
}

/// Dark frame with each visible gt point drawn as a white 2x2 square whose
/// top-left pixel is the rounded projection; the moving object is a textured
/// square under a dynamic (0) mask.
inline FramePacket render_synthetic_frame(const SyntheticScene& scene, const SynthConfig& cfg, int i) {
  const Intrinsics& in = scene.gt_intrinsics;
  FramePacket pk;
  pk.index = i;
  pk.time = normalized_time(i, scene.num_frames());
  pk.rgb = RgbImage(in.height, in.width, Rgb{0.05f, 0.05f, 0.05f});
  pk.motion_mask = BinaryField(in.height, in.width, 1);

  const auto [r0, c0, size] = dynamic_square(cfg, i);
  for (int r = r0; r < r0 + size; ++r) {
    for (int c = c0; c < c0 + size; ++c) {
      const bool check = ((r - r0) / 3 + (c - c0) / 3) % 2 == 0;
      pk.rgb(r, c) = check ? Rgb{0.9f, 0.3f, 0.2f} : Rgb{0.2f, 0.3f, 0.9f};
    }
  }
  // Dilated mask so the object's border gradients are dynamic too.
  for (int r = r0 - 3; r < r0 + size + 3; ++r)
    for (int c = c0 - 3; c < c0 + size + 3; ++c)
      if (size > 0 && pk.motion_mask.contains(r, c)) pk.motion_mask(r, c) = 0;

  for (int p = 0; p < static_cast<int>(scene.gt_points.size()); ++p) {
    const auto o = scene.observe(p, i);
    if (!o.visible) continue;
    const int c = static_cast<int>(std::lround(o.pixel.x()));
    const int r = static_cast<int>(std::lround(o.pixel.y()));
    for (int dr = 0; dr < 2; ++dr)
      for (int dc = 0; dc < 2; ++dc)
        if (pk.rgb.contains(r + dr, c + dc)) pk.rgb(r + dr, c + dc) = Rgb{1.0f, 1.0f, 1.0f};
  }
  return pk;
}

/// Synthetic frames rendered on demand, so long sequences stay small in memory.
class SyntheticFrames final : public FrameSequence {
 public:
  SyntheticFrames(SyntheticScene scene, SynthConfig cfg) : scene_(std::move(scene)), cfg_(cfg) {
    masks_.reserve(static_cast<std::size_t>(scene_.num_frames()));
    for (int i = 0; i < scene_.num_frames(); ++i) {
      masks_.push_back(render_synthetic_frame(scene_, cfg_, i).motion_mask);
    }
  }

  int size() const override { return scene_.num_frames(); }
  int width() const override { return scene_.gt_intrinsics.width; }
  int height() const override { return scene_.gt_intrinsics.height; }
  RgbImage rgb(int i) const override { return render_synthetic_frame(scene_, cfg_, i).rgb; }
  const BinaryField& mask(int i) const override { return masks_.at(static_cast<std::size_t>(i)); }
  double time(int i) const override { return normalized_time(i, size()); }

  const SyntheticScene& scene() const noexcept { return scene_; }

 private:
  SyntheticScene scene_;
  SynthConfig cfg_;
  std::vector<BinaryField> masks_;
};

}  // namespace sccalib
