#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "sccalib/synth.hpp"
#include "sccalib/tracking.hpp"
#include "test_util.hpp"

using namespace sccalib;

namespace {

SyntheticScene static_scene(int frames, std::vector<Vec3> points) {
  SyntheticScene s;
  s.gt_intrinsics = Intrinsics::centered(500, 640, 360);
  s.gt_points = std::move(points);
  for (int i = 0; i < frames; ++i) {
    CameraParams c;
    c.frame_index = i;
    s.gt_cameras.push_back(c);
  }
  return s;
}

std::vector<Vec2> seed_queries(const SyntheticScene& s, int frame) {
  std::vector<Vec2> q;
  for (int p = 0; p < static_cast<int>(s.gt_points.size()); ++p) q.push_back(s.observe(p, frame).pixel);
  return q;
}

}  // namespace

TEST(SyntheticTrack, StaticPointIsConstant) {
  const SyntheticScene s = static_scene(6, {{0.1, -0.05, 2.0}, {-0.3, 0.2, 3.0}});
  const auto q = seed_queries(s, 0);
  const TrackResult t = synthetic_track(s, 0, q);
  ASSERT_EQ(t.num_frames(), 6);
  for (int f = 0; f < 6; ++f)
    for (int b = 0; b < 2; ++b) {
      EXPECT_EQ(t.vis(f, b), 1);
      EXPECT_LE((t.pos(f, b) - q[b]).norm(), 1e-12);
    }
}

TEST(SyntheticTrack, SeedRowEqualsQueries) {
  const SyntheticScene s = static_scene(4, {{0.1, -0.05, 2.0}});
  const std::vector<Vec2> q{s.observe(0, 1).pixel + Vec2(0.3, -0.2)};
  const TrackResult t = synthetic_track(s, 1, q);
  EXPECT_EQ(t.seed_frame(), 1);
  EXPECT_EQ(t.num_frames(), 3);
  EXPECT_EQ(t.pos(0, 0), q[0]);
  EXPECT_EQ(t.vis(0, 0), 1);
}

TEST(SyntheticTrack, LastFrameSeedHasSingleRow) {
  const SyntheticScene s = static_scene(4, {{0.1, -0.05, 2.0}});
  const auto q = seed_queries(s, 3);
  const TrackResult t = synthetic_track(s, 3, q);
  EXPECT_EQ(t.num_frames(), 1);
  EXPECT_EQ(t.pos(0, 0), q[0]);
}

TEST(SyntheticTrack, BehindCameraIsInvisible) {
  SyntheticScene s = static_scene(6, {{0.0, 0.0, 2.0}});
  for (int i = 3; i < 6; ++i) s.gt_cameras[i].trans = Vec3(0, 0, -3.0);  // point now at z = -1
  const TrackResult t = synthetic_track(s, 0, seed_queries(s, 0));
  for (int f = 0; f < 6; ++f) EXPECT_EQ(t.vis(f, 0), f < 3 ? 1 : 0) << f;
}

TEST(SyntheticTrack, OutsideImageIsInvisible) {
  SyntheticScene s = static_scene(3, {{0.0, 0.0, 2.0}});
  s.gt_cameras[2].trans = Vec3(2.0, 0, 0);  // shifts the point 500 px right
  const TrackResult t = synthetic_track(s, 0, seed_queries(s, 0));
  EXPECT_EQ(t.vis(1, 0), 1);
  EXPECT_EQ(t.vis(2, 0), 0);
}

TEST(SyntheticTrack, OcclusionSpanHidesPoint) {
  SyntheticScene s = static_scene(8, {{0.0, 0.0, 2.0}});
  s.occlusions.push_back({0, 3, 5});
  const TrackResult t = synthetic_track(s, 0, seed_queries(s, 0));
  for (int f = 0; f < 8; ++f) EXPECT_EQ(t.vis(f, 0), (f == 3 || f == 4) ? 0 : 1);
}

TEST(SyntheticTrack, UnassociatedQueryThrows) {
  const SyntheticScene s = static_scene(3, {{0.0, 0.0, 2.0}});
  const std::vector<Vec2> q{Vec2(100, 100)};
  EXPECT_THROW(synthetic_track(s, 0, q), InvalidParameter);
  const std::vector<Vec2> off{s.observe(0, 0).pixel + Vec2(0.6, 0.0)};
  EXPECT_THROW(synthetic_track(s, 0, off), InvalidParameter);
}

TEST(SyntheticTrack, LenientTrackerMarksUnassociatedLost) {
  const SyntheticScene s = static_scene(3, {{0.0, 0.0, 2.0}});
  SynthConfig cfg;
  cfg.frames = 3;
  const SyntheticFrames frames(s, cfg);
  const std::vector<Vec2> q{Vec2(100, 100), s.observe(0, 0).pixel};
  const TrackResult t = SyntheticTracker(s).track(frames, 0, q);
  EXPECT_EQ(t.vis(0, 0), 1);
  EXPECT_EQ(t.vis(1, 0), 0);
  EXPECT_EQ(t.vis(1, 1), 1);
  EXPECT_THROW(SyntheticTracker(s, true).track(frames, 0, q), InvalidParameter);
}

TEST(SyntheticTrack, NoiseMeanAbsoluteDeviation) {
  // 100 points x 51 frames x 2 axes = 10200 noisy samples.
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(-0.4 + 0.008 * i, 0.3 * std::sin(i), 3.0);
  SyntheticScene s = static_scene(52, pts);
  s.noise_sigma = 1.0;
  s.seed = 2024;
  const TrackResult t = synthetic_track(s, 0, seed_queries(s, 0));
  double sum = 0.0;
  int n = 0;
  for (int f = 1; f < t.num_frames(); ++f)
    for (int b = 0; b < t.num_points(); ++b) {
      const Vec2 d = t.pos(f, b) - s.observe(b, f).pixel;
      sum += std::abs(d.x()) + std::abs(d.y());
      n += 2;
    }
  ASSERT_GE(n, 10000);
  const double expected = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(sum / n, expected, 0.05 * expected);
}

TEST(SyntheticTrack, DropoutRateAndDeterminism) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(-0.4 + 0.016 * i, 0.0, 3.0);
  SyntheticScene s = static_scene(101, pts);
  s.dropout = 0.3;
  s.seed = 5;
  const auto q = seed_queries(s, 0);
  const TrackResult a = synthetic_track(s, 0, q);
  const TrackResult b = synthetic_track(s, 0, q);
  EXPECT_EQ(a, b);
  int hidden = 0;
  for (int f = 1; f < a.num_frames(); ++f)
    for (int k = 0; k < a.num_points(); ++k) hidden += a.vis(f, k) == 0;
  EXPECT_NEAR(hidden / 5000.0, 0.3, 0.03);
}

TEST(SyntheticTrackProperty, NoiseFreeEqualsProjection) {
  SynthConfig cfg;
  cfg.frames = 12;
  cfg.points = 60;
  cfg.seed = 3;
  const SyntheticScene s = make_arc_scene(cfg);
  const auto q = seed_queries(s, 0);
  const TrackResult t = synthetic_track(s, 0, q);
  std::vector<int> idx(60);
  for (int i = 0; i < 60; ++i) idx[i] = i;
  for (int f = 1; f < 12; ++f) {
    const auto proj = project_points(s.gt_points, idx, s.gt_cameras[f], s.gt_intrinsics);
    for (int b = 0; b < 60; ++b) EXPECT_LE((t.pos(f, b) - proj.pixels[b]).norm(), 1e-9);
  }
}

TEST(SyntheticScene, ValidatesParameters) {
  SyntheticScene s = static_scene(2, {{0, 0, 1}});
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), InvalidParameter);
  s.noise_sigma = 0;
  s.dropout = 1.0;
  EXPECT_THROW(s.validate(), InvalidParameter);
}

TEST(TrackFiles, RoundTripIsIdentity) {
  SyntheticScene s = static_scene(5, {{0.1, -0.05, 2.0}, {-0.3, 0.2, 3.0}, {0.0, 0.0, 4.0}});
  s.noise_sigma = 0.7;
  s.dropout = 0.2;
  s.seed = 9;
  const TrackResult t = synthetic_track(s, 0, seed_queries(s, 0));
  const auto dir = sccalib::testing::scratch_dir("tracks");
  const auto path = track_file_for_seed(dir, 0);
  save_tracks(path, t);
  EXPECT_EQ(path.filename(), "tracks_00000.json");
  EXPECT_EQ(load_tracks(path), t);
}

TEST(TrackFiles, WrongRowWidthNamesRow) {
  const std::string text =
      "{\"seed_frame\": 0, \"num_frames\": 3, \"num_points\": 2, \"tracks\": [\n"
      "[[1,2,1],[3,4,1]],\n"
      "[[1,2,1],[3,4,1]],\n"
      "[[1,2,1]]]}";
  try {
    tracks_from_json_text(text, "t.json");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(TrackFiles, BadVisibilityToken) {
  const std::string text =
      "{\"seed_frame\": 0, \"num_frames\": 1, \"num_points\": 1, \"tracks\": [[[1.5, 2.5, 2]]]}";
  EXPECT_THROW(tracks_from_json_text(text, "t.json"), ParseError);
  const std::string text2 =
      "{\"seed_frame\": 0, \"num_frames\": 1, \"num_points\": 1, \"tracks\": [[[1.5, 2.5, \"yes\"]]]}";
  EXPECT_THROW(tracks_from_json_text(text2, "t.json"), ParseError);
}

TEST(TrackFiles, SyntaxErrorReportsLine) {
  const std::string text = "{\"seed_frame\": 0,\n\"num_frames\": 1,\n\"num_points\": ,\n}";
  try {
    tracks_from_json_text(text, "t.json");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("t.json:3"), std::string::npos) << e.what();
  }
}

TEST(TrackFiles, SeedRowMustBeVisible) {
  const std::string text =
      "{\"seed_frame\": 0, \"num_frames\": 2, \"num_points\": 1, \"tracks\": [[[1, 2, 0]], [[1, 2, 1]]]}";
  EXPECT_THROW(tracks_from_json_text(text, "t.json"), ParseError);
}

TEST(FileTracker, ServesMatchingFileAndRejectsMismatch) {
  SyntheticScene s = static_scene(4, {{0.1, -0.05, 2.0}, {-0.3, 0.2, 3.0}});
  SynthConfig cfg;
  cfg.frames = 4;
  const SyntheticFrames frames(s, cfg);
  const auto q = seed_queries(s, 1);
  const TrackResult t = synthetic_track(s, 1, q);
  const auto dir = sccalib::testing::scratch_dir("ft");
  save_tracks(track_file_for_seed(dir, 1), t);
  const FileTracker ft(dir);
  EXPECT_EQ(ft.track(frames, 1, q), t);

  std::vector<Vec2> other = q;
  other[0] += Vec2(1.0, 0.0);
  EXPECT_THROW(ft.track(frames, 1, other), ParseError);
  EXPECT_THROW(ft.track(frames, 0, q), IoError);
}
