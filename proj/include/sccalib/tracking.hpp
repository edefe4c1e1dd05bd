#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sccalib/frames.hpp"
#include "sccalib/geometry.hpp"

namespace sccalib {

/// Tracks of B query points from a seed frame to the end of the video.
/// Row 0 is the seed frame and holds the queries themselves.
class TrackResult {
 public:
  TrackResult() = default;
  TrackResult(int seed_frame, int num_frames, int num_points)
      : seed_frame_(seed_frame), num_frames_(num_frames), num_points_(num_points),
        positions_(static_cast<std::size_t>(num_frames) * num_points, Vec2::Zero()),
        visibility_(static_cast<std::size_t>(num_frames) * num_points, 0) {
    if (num_frames < 1 || num_points < 0) throw InvalidParameter("TrackResult: bad dimensions");
  }

  int seed_frame() const noexcept { return seed_frame_; }
  int num_frames() const noexcept { return num_frames_; }
  int num_points() const noexcept { return num_points_; }

  // `f` counts frames from the seed frame (f = 0 is the seed).
  Vec2& pos(int f, int b) { return positions_[slot(f, b)]; }
  const Vec2& pos(int f, int b) const { return positions_[slot(f, b)]; }
  std::uint8_t& vis(int f, int b) { return visibility_[slot(f, b)]; }
  std::uint8_t vis(int f, int b) const { return visibility_[slot(f, b)]; }

  /// Invariants: finite visible positions, queries in row 0, all visible there.
  void validate(std::span<const Vec2> queries = {}) const {
    for (int f = 0; f < num_frames_; ++f) {
      for (int b = 0; b < num_points_; ++b) {
        if (vis(f, b) > 1) throw InvalidParameter("visibility must be 0 or 1");
        if (vis(f, b) && !pos(f, b).allFinite()) {
          throw InvalidParameter("non-finite visible position at frame row " + std::to_string(f));
        }
      }
    }
    for (int b = 0; b < num_points_; ++b) {
      if (!vis(0, b)) throw InvalidParameter("track " + std::to_string(b) + " not visible at its seed frame");
    }
    if (!queries.empty()) {
      if (static_cast<int>(queries.size()) != num_points_) throw InvalidParameter("query count mismatch");
      for (int b = 0; b < num_points_; ++b) {
        if (pos(0, b) != queries[b]) {
          throw InvalidParameter("track " + std::to_string(b) + " does not start at its query");
        }
      }
    }
  }

  bool operator==(const TrackResult& o) const = default;

 private:
  std::size_t slot(int f, int b) const { return static_cast<std::size_t>(f) * num_points_ + b; }

  int seed_frame_ = 0;
  int num_frames_ = 0;
  int num_points_ = 0;
  std::vector<Vec2> positions_;
  std::vector<std::uint8_t> visibility_;
};

/// Point tracker contract: positions and visibility of `queries` (x = col,
/// y = row, pixels) from `seed_frame` to the last frame.
class TrackOracle {
 public:
  virtual ~TrackOracle() = default;
  virtual TrackResult track(const FrameSequence& frames, int seed_frame, std::span<const Vec2> queries) const = 0;
};

// ---------------------------------------------------------------------------
// Synthetic ground truth

/// A point hidden from the tracker (and from rendered frames) on [begin, end).
struct OcclusionSpan {
  int point = 0;
  int begin = 0;
  int end = std::numeric_limits<int>::max();
};

struct SyntheticScene {
  std::vector<Vec3> gt_points;
  std::vector<CameraParams> gt_cameras;
  Intrinsics gt_intrinsics;
  double noise_sigma = 0.0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  std::vector<OcclusionSpan> occlusions;

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw InvalidParameter("noise_sigma must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidParameter("dropout must be in [0,1)");
    gt_intrinsics.validate();
  }

  int num_frames() const noexcept { return static_cast<int>(gt_cameras.size()); }

  bool occluded(int point, int frame) const {
    return std::any_of(occlusions.begin(), occlusions.end(), [&](const OcclusionSpan& o) {
      return o.point == point && frame >= o.begin && frame < o.end;
    });
  }

  struct Observation {
    Vec2 pixel;
    double w = 0.0;
    bool visible = false;
  };

  /// Exact projection of a gt point; visible means in front, inside the image
  /// (pixel centres at integers) and not occluded.
  Observation observe(int point, int frame) const {
    const CameraParams& cam = gt_cameras.at(frame);
    const Vec3 view = cam.rotation() * gt_points.at(point) + cam.trans;
    Observation o;
    o.w = view.z();
    o.pixel = pinhole_pixel(view, gt_intrinsics);
    o.visible = o.w > 0.0 && inside_image(o.pixel) && !occluded(point, frame);
    return o;
  }

  bool inside_image(const Vec2& px) const {
    if (!px.allFinite()) return false;
    const double c = std::round(px.x()), r = std::round(px.y());
    return c >= 0.0 && r >= 0.0 && c <= gt_intrinsics.width - 1 && r <= gt_intrinsics.height - 1;
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined words
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Index of the visible gt point whose seed-frame projection lies within half a
// pixel of `query` on both axes, or -1.
inline int associate_query(const SyntheticScene& scene, int seed_frame, const Vec2& query) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int p = 0; p < static_cast<int>(scene.gt_points.size()); ++p) {
    const auto o = scene.observe(p, seed_frame);
    if (!o.visible) continue;
    const Vec2 d = o.pixel - query;
    if (std::abs(d.x()) > 0.5 || std::abs(d.y()) > 0.5) continue;
    if (d.squaredNorm() < best_d) {
      best_d = d.squaredNorm();
      best = p;
    }
  }
  return best;
}

inline TrackResult synthetic_track_impl(const SyntheticScene& scene, int seed_frame, std::span<const Vec2> queries,
                                        bool strict) {
  scene.validate();
  const int n = scene.num_frames();
  if (seed_frame < 0 || seed_frame >= n) throw InvalidParameter("seed frame out of range");
  TrackResult out(seed_frame, n - seed_frame, static_cast<int>(queries.size()));

  std::vector<int> assoc(queries.size());
  for (std::size_t b = 0; b < queries.size(); ++b) {
    if (!scene.inside_image(queries[b])) throw InvalidParameter("query " + std::to_string(b) + " outside image");
    assoc[b] = associate_query(scene, seed_frame, queries[b]);
    if (assoc[b] < 0 && strict) {
      throw InvalidParameter("query " + std::to_string(b) + " (" + std::to_string(queries[b].x()) + ", " +
                             std::to_string(queries[b].y()) + ") has no ground-truth point at frame " +
                             std::to_string(seed_frame));
    }
  }

  std::mt19937_64 rng(mix_seed(scene.seed, static_cast<std::uint64_t>(seed_frame)));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t b = 0; b < queries.size(); ++b) {
    out.pos(0, static_cast<int>(b)) = queries[b];
    out.vis(0, static_cast<int>(b)) = 1;
  }
  for (int f = 1; f < out.num_frames(); ++f) {
    for (int b = 0; b < out.num_points(); ++b) {
      // Draw the same number of variates for every slot so one track's
      // visibility never shifts another track's noise.
      const double nx = noise(rng), ny = noise(rng), drop = coin(rng);
      if (assoc[b] < 0) {
        out.pos(f, b) = queries[b];
        out.vis(f, b) = 0;
        continue;
      }
      const auto o = scene.observe(assoc[b], seed_frame + f);
      Vec2 px = o.pixel + scene.noise_sigma * Vec2(nx, ny);
      bool visible = o.visible && drop >= scene.dropout;
      if (!px.allFinite()) {
        px = Vec2(-1.0, -1.0);
        visible = false;
      }
      out.pos(f, b) = px;
      out.vis(f, b) = visible ? 1 : 0;
    }
  }
  return out;
}

}  // namespace detail

/// Ground-truth tracks: reprojections of the gt points associated with the
/// queries, plus Gaussian pixel noise and dropout. Throws if a query has no gt
/// point within half a pixel.
inline TrackResult synthetic_track(const SyntheticScene& scene, int seed_frame, std::span<const Vec2> queries) {
  return detail::synthetic_track_impl(scene, seed_frame, queries, true);
}

/// TrackOracle over a SyntheticScene. In lenient mode a query that matches no
/// gt point (image clutter, overlapping points) is reported lost after its seed
/// frame instead of failing the whole request.
class SyntheticTracker final : public TrackOracle {
 public:
  explicit SyntheticTracker(SyntheticScene scene, bool strict = false) : scene_(std::move(scene)), strict_(strict) {}

  TrackResult track(const FrameSequence& frames, int seed_frame, std::span<const Vec2> queries) const override {
    if (frames.size() != scene_.num_frames()) throw InvalidParameter("scene and frame sequence lengths differ");
    return detail::synthetic_track_impl(scene_, seed_frame, queries, strict_);
  }

  const SyntheticScene& scene() const noexcept { return scene_; }

 private:
  SyntheticScene scene_;
  bool strict_;
};

// ---------------------------------------------------------------------------
// Track files

inline nlohmann::json tracks_to_json(const TrackResult& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int f = 0; f < t.num_frames(); ++f) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < t.num_points(); ++b) {
      row.push_back({t.pos(f, b).x(), t.pos(f, b).y(), static_cast<int>(t.vis(f, b))});
    }
    rows.push_back(std::move(row));
  }
  return {{"seed_frame", t.seed_frame()},
          {"num_frames", t.num_frames()},
          {"num_points", t.num_points()},
          {"tracks", std::move(rows)}};
}

inline void save_tracks(const std::filesystem::path& path, const TrackResult& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << tracks_to_json(t).dump() << '\n';
}

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace detail

inline TrackResult tracks_from_json_text(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ":" + std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
  }
  auto fail = [&](const std::string& msg) -> ParseError { return ParseError(origin + ": " + msg); };
  for (const char* key : {"seed_frame", "num_frames", "num_points", "tracks"}) {
    if (!j.contains(key)) throw fail(std::string("missing key '") + key + "'");
  }
  if (!j["seed_frame"].is_number_integer() || !j["num_frames"].is_number_integer() ||
      !j["num_points"].is_number_integer()) {
    throw fail("seed_frame, num_frames and num_points must be integers");
  }
  const int seed = j["seed_frame"].get<int>();
  const int nf = j["num_frames"].get<int>();
  const int np = j["num_points"].get<int>();
  const auto& rows = j["tracks"];
  if (nf < 1 || np < 0 || seed < 0) throw fail("invalid dimensions");
  if (!rows.is_array() || static_cast<int>(rows.size()) != nf) {
    throw fail("expected " + std::to_string(nf) + " frame rows in 'tracks'");
  }
  TrackResult t(seed, nf, np);
  for (int f = 0; f < nf; ++f) {
    const auto& row = rows[f];
    if (!row.is_array() || static_cast<int>(row.size()) != np) {
      throw fail("dimension error in row " + std::to_string(f) + ": expected " + std::to_string(np) + " points, got " +
                 std::to_string(row.is_array() ? row.size() : 0));
    }
    for (int b = 0; b < np; ++b) {
      const auto& e = row[b];
      if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number()) {
        throw fail("row " + std::to_string(f) + ", point " + std::to_string(b) + ": expected [x, y, v]");
      }
      if (!e[2].is_number_integer() || (e[2].get<int>() != 0 && e[2].get<int>() != 1)) {
        throw fail("row " + std::to_string(f) + ", point " + std::to_string(b) + ": visibility must be 0 or 1");
      }
      t.pos(f, b) = Vec2(e[0].get<double>(), e[1].get<double>());
      t.vis(f, b) = static_cast<std::uint8_t>(e[2].get<int>());
      if (t.vis(f, b) && !t.pos(f, b).allFinite()) {
        throw fail("row " + std::to_string(f) + ", point " + std::to_string(b) + ": non-finite visible position");
      }
    }
  }
  try {
    t.validate();
  } catch (const InvalidParameter& e) {
    throw fail(e.what());
  }
  return t;
}

inline TrackResult load_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return tracks_from_json_text(ss.str(), path.string());
}

inline std::filesystem::path track_file_for_seed(const std::filesystem::path& dir, int seed_frame) {
  return dir / ("tracks_" + frame_file_name(seed_frame).substr(0, 5) + ".json");
}

/// Reads tracks exported by an external tracker, one file per seed frame:
/// <dir>/tracks_%05d.json. The file's first row must equal the queries.
class FileTracker final : public TrackOracle {
 public:
  explicit FileTracker(std::filesystem::path dir) : dir_(std::move(dir)) {}

  TrackResult track(const FrameSequence& frames, int seed_frame, std::span<const Vec2> queries) const override {
    const auto path = track_file_for_seed(dir_, seed_frame);
    if (!std::filesystem::exists(path)) {
      throw IoError("no track file for seed frame " + std::to_string(seed_frame) + " (expected " + path.string() +
                    "; track the points of pools/" + frame_file_name(seed_frame).substr(0, 5) + ".json)");
    }
    TrackResult t = load_tracks(path);
    if (t.seed_frame() != seed_frame || t.num_frames() != frames.size() - seed_frame) {
      throw ParseError(path.string() + ": seed frame or frame count does not match the sequence");
    }
    try {
      t.validate(queries);
    } catch (const InvalidParameter& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    return t;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace sccalib
