#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sccalib/calib.hpp"
#include "sccalib/eval.hpp"
#include "sccalib/frames.hpp"
#include "sccalib/gsplat.hpp"
#include "sccalib/imagefeat.hpp"
#include "sccalib/io/formats.hpp"
#include "sccalib/io/png.hpp"
#include "sccalib/io/toml_lite.hpp"
#include "sccalib/spe.hpp"
#include "sccalib/synth.hpp"
#include "sccalib/tracking.hpp"

namespace sccalib::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct PipelineConfig {
  fs::path dataset_dir;
  fs::path output_dir;
  int tau = 100;
  int window = 9;
  double canny_low = 0.1;
  double canny_high = 0.2;
  std::string tracker = "synthetic";  // or "file:<dir>"
  OptimizerConfig optimizer;
  InitNoise init;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int check_frames = 4;  // frames used by render-check and report overlays
  SynthConfig synth;

  FeatureParams features() const { return {canny_low, canny_high, window}; }

  void validate() const {
    if (tau < 4) throw InvalidParameter("config: tau must be >= 4");
    if (window < 3 || window % 2 == 0) throw InvalidParameter("config: window must be odd and >= 3");
    if (!(canny_low > 0.0 && canny_low < canny_high && canny_high <= 1.0)) {
      throw InvalidParameter("config: require 0 < canny_low < canny_high <= 1");
    }
    if (tracker != "synthetic" && tracker.rfind("file:", 0) != 0) {
      throw InvalidParameter("config: tracker must be 'synthetic' or 'file:<dir>'");
    }
    if (check_frames < 1) throw InvalidParameter("config: check_frames must be >= 1");
    optimizer.validate();
  }
};

namespace detail {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config key '") + key + "': " + e.what());
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Relative paths in the file are taken relative to the file's directory.
inline PipelineConfig config_from_json(const json& j, const fs::path& base) {
  PipelineConfig c;
  std::string dataset, output;
  detail::take(j, "dataset_dir", dataset);
  detail::take(j, "output_dir", output);
  if (dataset.empty() || output.empty()) throw ParseError("config: dataset_dir and output_dir are required");
  c.dataset_dir = detail::resolve(base, dataset);
  c.output_dir = detail::resolve(base, output);
  detail::take(j, "tau", c.tau);
  detail::take(j, "window", c.window);
  detail::take(j, "canny_low", c.canny_low);
  detail::take(j, "canny_high", c.canny_high);
  detail::take(j, "tracker", c.tracker);
  if (c.tracker.rfind("file:", 0) == 0) c.tracker = "file:" + detail::resolve(base, c.tracker.substr(5)).string();
  detail::take(j, "seed", c.seed);
  detail::take(j, "deterministic", c.deterministic);
  detail::take(j, "check_frames", c.check_frames);
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    auto& oc = c.optimizer;
    detail::take(o, "lr_quat", oc.lr_quat);
    detail::take(o, "lr_trans", oc.lr_trans);
    detail::take(o, "lr_focal", oc.lr_focal);
    detail::take(o, "lr_points", oc.lr_points);
    detail::take(o, "iterations", oc.iterations);
    detail::take(o, "adam_beta1", oc.adam_beta1);
    detail::take(o, "adam_beta2", oc.adam_beta2);
    detail::take(o, "adam_eps", oc.adam_eps);
    detail::take(o, "threads", oc.threads);
  }
  if (j.contains("init")) {
    detail::take(j["init"], "rot_sigma_deg", c.init.rot_sigma_deg);
    detail::take(j["init"], "trans_sigma", c.init.trans_sigma);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    auto& sc = c.synth;
    detail::take(s, "frames", sc.frames);
    detail::take(s, "points", sc.points);
    detail::take(s, "width", sc.width);
    detail::take(s, "height", sc.height);
    detail::take(s, "focal", sc.focal);
    detail::take(s, "radius", sc.radius);
    detail::take(s, "arc_deg", sc.arc_deg);
    detail::take(s, "elevation", sc.elevation);
    detail::take(s, "cube_size", sc.cube_size);
    detail::take(s, "noise_sigma", sc.noise_sigma);
    detail::take(s, "dropout", sc.dropout);
    detail::take(s, "occlude_fraction", sc.occlude_fraction);
    detail::take(s, "occlude_length", sc.occlude_length);
    detail::take(s, "dynamic_object", sc.dynamic_object);
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  const json j = io::TomlLite::parse(io::read_text(path), path.string());
  PipelineConfig c = config_from_json(j, fs::absolute(path).parent_path());
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(io::read_text(p)); }

/// Stage record: outputs with content hashes, wall time, stage metrics.
class StageRecorder {
 public:
  StageRecorder(const PipelineConfig& cfg, std::string stage)
      : cfg_(cfg), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

  void output(const fs::path& p) { outputs_.push_back(p); }
  json& metrics() { return metrics_; }

  /// Appends to <output_dir>/manifest.json, keeping execution order.
  void commit() {
    fs::create_directories(cfg_.output_dir);
    const fs::path path = cfg_.output_dir / "manifest.json";
    json manifest = fs::exists(path) ? io::read_json(path) : json{{"stages", json::array()}};
    json outs = json::array();
    for (const auto& p : outputs_) {
      outs.push_back({{"path", fs::relative(p, cfg_.output_dir).generic_string()}, {"sha256", sha256_file(p)}});
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest["stages"].push_back({{"stage", stage_},
                                  {"seed", cfg_.seed},
                                  {"seconds", secs},
                                  {"outputs", std::move(outs)},
                                  {"metrics", metrics_.is_null() ? json::object() : metrics_}});
    io::write_json(path, manifest);
  }

 private:
  const PipelineConfig& cfg_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> outputs_;
  json metrics_;
};

// ---------------------------------------------------------------------------
// Shared file locations

inline fs::path pools_dir(const PipelineConfig& c) { return c.output_dir / "pools"; }
inline fs::path pool_path(const PipelineConfig& c, int i) {
  return pools_dir(c) / (frame_file_name(i).substr(0, 5) + ".json");
}
inline fs::path table_path(const PipelineConfig& c) { return c.output_dir / "table.json"; }
inline fs::path cameras_path(const PipelineConfig& c) { return c.output_dir / "cameras.json"; }
inline fs::path points_path(const PipelineConfig& c) { return c.output_dir / "points.ply"; }
inline fs::path gt_cameras_path(const PipelineConfig& c) { return c.dataset_dir / "gt_cameras.json"; }
inline fs::path scene_path(const PipelineConfig& c) { return c.dataset_dir / "scene.json"; }

inline void require_input(const fs::path& p, const std::string& stage_hint) {
  if (!fs::exists(p)) throw MissingStageInput("missing " + p.string() + "; run the " + stage_hint + " stage first");
}

// ---------------------------------------------------------------------------
// Synthetic scene file

inline json scene_to_json(const SyntheticScene& s, const SynthConfig& cfg) {
  json pts = json::array();
  for (const auto& p : s.gt_points) pts.push_back({p.x(), p.y(), p.z()});
  json occ = json::array();
  for (const auto& o : s.occlusions) occ.push_back({o.point, o.begin, o.end});
  return {{"intrinsics", {{"focal", s.gt_intrinsics.focal}, {"width", s.gt_intrinsics.width},
                          {"height", s.gt_intrinsics.height}}},
          {"noise_sigma", s.noise_sigma},
          {"dropout", s.dropout},
          {"seed", s.seed},
          {"points", std::move(pts)},
          {"cameras", io::cameras_to_json(s.gt_cameras, s.gt_intrinsics)["frames"]},
          {"occlusions", std::move(occ)},
          {"dynamic_object", cfg.dynamic_object}};
}

inline SyntheticScene scene_from_json(const json& j) {
  try {
    SyntheticScene s;
    const json& in = j.at("intrinsics");
    s.gt_intrinsics = Intrinsics::centered(in.at("focal").get<double>(), in.at("width").get<int>(),
                                           in.at("height").get<int>());
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.dropout = j.at("dropout").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("points")) s.gt_points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                                                   p.at(2).get<double>());
    json cams = {{"focal", s.gt_intrinsics.focal}, {"width", s.gt_intrinsics.width},
                 {"height", s.gt_intrinsics.height}, {"frames", j.at("cameras")}};
    s.gt_cameras = io::cameras_from_json(cams).cameras;
    for (const auto& o : j.at("occlusions")) s.occlusions.push_back({o.at(0).get<int>(), o.at(1).get<int>(), o.at(2).get<int>()});
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stages

/// Writes a synthetic dataset: frames, masks, gt cameras/points/tracks, scene.json.
inline void cmd_synth(const PipelineConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const SyntheticScene scene = make_arc_scene(sc);
  const fs::path root = cfg.dataset_dir;
  fs::create_directories(root / "frames");
  fs::create_directories(root / "masks");
  fs::create_directories(root / "gt_tracks");
  StageRecorder rec(cfg, "synth");
  for (int i = 0; i < scene.num_frames(); ++i) {
    const FramePacket pk = render_synthetic_frame(scene, sc, i);
    io::write_png_rgb(root / "frames" / frame_file_name(i), pk.rgb);
    io::write_png_mask(root / "masks" / frame_file_name(i), pk.motion_mask);
  }
  io::write_json(scene_path(cfg), scene_to_json(scene, sc));
  io::save_cameras(gt_cameras_path(cfg), scene.gt_cameras, scene.gt_intrinsics);
  io::save_ply(root / "gt_points.ply", scene.gt_points);

  // Ground-truth tracks of every point visible in frame 0, seeded at its exact projection.
  std::vector<Vec2> queries;
  for (int p = 0; p < static_cast<int>(scene.gt_points.size()); ++p) {
    const auto o = scene.observe(p, 0);
    if (o.visible) queries.push_back(o.pixel);
  }
  const fs::path gt_tracks = track_file_for_seed(root / "gt_tracks", 0);
  save_tracks(gt_tracks, synthetic_track(scene, 0, queries));

  for (const auto& p : {scene_path(cfg), gt_cameras_path(cfg), root / "gt_points.ply", gt_tracks}) rec.output(p);
  rec.metrics() = {{"frames", scene.num_frames()}, {"points", scene.gt_points.size()}};
  rec.commit();
}

/// Candidate pools of every frame, cached as pools/%05d.json.
inline void cmd_extract(const PipelineConfig& cfg) {
  const DirectoryFrames frames(cfg.dataset_dir);
  fs::create_directories(pools_dir(cfg));
  StageRecorder rec(cfg, "extract");
  std::size_t total = 0;
  for (int i = 0; i < frames.size(); ++i) {
    const CandidatePool pool = build_pool(frames.rgb(i), frames.mask(i), cfg.features(), i);
    total += pool.size();
    const fs::path p = pool_path(cfg, i);
    io::write_json(p, io::pool_to_json(pool));
    rec.output(p);
  }
  rec.metrics() = {{"frames", frames.size()}, {"mean_pool_size", double(total) / frames.size()}};
  rec.commit();
}

inline std::unique_ptr<TrackOracle> make_tracker(const PipelineConfig& cfg) {
  if (cfg.tracker == "synthetic") {
    require_input(scene_path(cfg), "synth");
    return std::make_unique<SyntheticTracker>(scene_from_json(io::read_json(scene_path(cfg))));
  }
  return std::make_unique<FileTracker>(fs::path(cfg.tracker.substr(5)));
}

/// Structural point extraction over the cached pools; writes table.json.
inline SpeResult cmd_spe(const PipelineConfig& cfg) {
  const DirectoryFrames frames(cfg.dataset_dir);
  require_input(pools_dir(cfg), "extract");
  for (int i = 0; i < frames.size(); ++i) require_input(pool_path(cfg, i), "extract");
  const auto tracker = make_tracker(cfg);
  StageRecorder rec(cfg, "spe");
  PoolSource pools = [&cfg](int i) { return io::pool_from_json(io::read_json(pool_path(cfg, i))); };
  SpeResult res = run_spe_detailed(frames, *tracker, {cfg.tau, cfg.features(), cfg.seed}, pools);
  const auto issues = validate_table(res.table, frames);
  if (!issues.empty()) throw Error("SPE produced an invalid table: " + issues.front());
  save_table(table_path(cfg), res.table);
  json gens = json::array();
  for (const auto& g : res.generations) {
    gens.push_back({{"seed_frame", g.seed_frame}, {"h_start", g.h_start}, {"num", g.num}, {"pool_size", g.pool_size},
                    {"commit_frame", g.commit_frame}, {"last_frame", g.last_frame}});
  }
  io::write_json(cfg.output_dir / "generations.json", gens);
  rec.output(table_path(cfg));
  rec.output(cfg.output_dir / "generations.json");
  rec.metrics() = {{"h_total", res.table.h_total()}, {"generations", res.generations.size()}};
  rec.commit();
  return res;
}

inline Intrinsics dataset_intrinsics_guess(const PipelineConfig& cfg) {
  const DirectoryFrames frames(cfg.dataset_dir);
  return Intrinsics::centered(frames.width(), frames.width(), frames.height());
}

/// Joint camera/point optimization; writes cameras.json, points.ply, loss_trace.csv.
inline CalibResult cmd_calibrate(const PipelineConfig& cfg) {
  require_input(table_path(cfg), "spe");
  const StructuralPointTable table = load_table(table_path(cfg));
  const Intrinsics guess = dataset_intrinsics_guess(cfg);
  StageRecorder rec(cfg, "calibrate");
  const CalibParams init = init_cameras(table.n(), guess, cfg.seed, table.h_total(), cfg.init);

  std::ostringstream trace;
  trace << "iteration,total,projection,distance,depth\n";
  trace << std::setprecision(17);
  auto row = [&trace](int it, const LossBreakdown& l) {
    trace << it << ',' << l.total() << ',' << l.projection << ',' << l.distance << ',' << l.depth << '\n';
  };
  OptimizerConfig oc = cfg.optimizer;
  oc.seed = cfg.seed;
  const CalibResult res = calibrate(table, init, oc, row);
  row(oc.iterations, CalibrationProblem(table).evaluate(res.params, nullptr, oc.threads));

  io::save_cameras(cameras_path(cfg), res.params.cameras, res.params.intrinsics);
  io::save_ply(points_path(cfg), res.params.sp3d);
  io::write_text(cfg.output_dir / "loss_trace.csv", trace.str());
  for (const auto& p : {cameras_path(cfg), points_path(cfg), cfg.output_dir / "loss_trace.csv"}) rec.output(p);
  rec.metrics() = {{"final_loss", res.loss_trace.back()},
                   {"initial_loss", res.loss_trace.front()},
                   {"focal", res.params.intrinsics.focal},
                   {"mean_reprojection_px", mean_reprojection_error(table, res.params)}};
  rec.commit();
  return res;
}

struct Calibrated {
  StructuralPointTable table;
  CalibParams params;
};

inline Calibrated load_calibrated(const PipelineConfig& cfg) {
  require_input(table_path(cfg), "spe");
  require_input(cameras_path(cfg), "calibrate");
  require_input(points_path(cfg), "calibrate");
  Calibrated c{load_table(table_path(cfg)), {}};
  const io::CameraFile cams = io::load_cameras(cameras_path(cfg));
  c.params.cameras = cams.cameras;
  c.params.intrinsics = cams.intrinsics;
  c.params.sp3d = io::load_ply(points_path(cfg));
  if (static_cast<int>(c.params.cameras.size()) != c.table.n() ||
      static_cast<int>(c.params.sp3d.size()) != c.table.h_total()) {
    throw Error("calibration outputs do not match table.json; rerun the calibrate stage");
  }
  return c;
}

inline std::vector<int> check_frame_indices(int n, int count) {
  std::vector<int> out;
  count = std::min(count, n);
  for (int k = 0; k < count; ++k) {
    const int i = count == 1 ? 0 : static_cast<int>(std::lround(double(k) * (n - 1) / (count - 1)));
    if (out.empty() || out.back() != i) out.push_back(i);
  }
  return out;
}

struct OverlayCheck {
  int frame = 0;
  RgbImage rendered;
  RgbImage reference;
  double psnr = 0.0;
  double ssim = 0.0;
  double mean_peak_offset = 0.0;
  double max_peak_offset = 0.0;
  double within_2px = 0.0;
};

/// Renders the calibrated points as small isotropic Gaussians from frame `f`
/// and compares against 2D splats at the tracked positions.
inline OverlayCheck overlay_check(const Calibrated& c, int f) {
  const CameraParams& cam = c.params.cameras[f];
  const Intrinsics& in = c.params.intrinsics;
  const Mat3 rot = cam.rotation();
  const auto idx = c.table.frame_indices(f);
  const auto tracked = c.table.frame_positions(f);

  GaussianCloud cloud;
  std::vector<Vec2> projected;
  for (std::size_t s = 0; s < idx.size(); ++s) {
    const Vec3& p = c.params.sp3d[idx[s]];
    const Vec3 v = rot * p + cam.trans;
    projected.push_back(pinhole_pixel(v, in));
    if (!(v.z() > in.znear)) continue;
    Gaussian3D g;
    g.mu = p;
    g.scale = Vec3::Constant(v.z() / in.focal);  // about one pixel on screen
    g.opacity = 1.0;
    cloud.push_back(g);
  }
  OverlayCheck out;
  out.frame = f;
  out.rendered = cloud.empty() ? RgbImage(in.height, in.width, Rgb{0, 0, 0}) : render_preview(cloud, cam, in);
  out.reference = render_splats_2d(tracked, 1.0, Vec3::Ones(), in.height, in.width);
  out.psnr = psnr(out.rendered, out.reference);
  out.ssim = ssim(out.rendered, out.reference);

  // Brightest rendered pixel within 3 px of each tracked point.
  double sum = 0.0;
  int within = 0;
  for (const Vec2& t : tracked) {
    const int tc = static_cast<int>(std::lround(t.x())), tr = static_cast<int>(std::lround(t.y()));
    double best = -1.0;
    Vec2 peak = t;
    for (int r = tr - 3; r <= tr + 3; ++r)
      for (int q = tc - 3; q <= tc + 3; ++q) {
        if (!out.rendered.contains(r, q)) continue;
        const double v = out.rendered(r, q)[0];
        if (v > best) {
          best = v;
          peak = Vec2(q, r);
        }
      }
    const double d = best > 0.0 ? (peak - t).norm() : 1e9;
    sum += std::min(d, 1e9);
    out.max_peak_offset = std::max(out.max_peak_offset, d);
    if (d <= 2.0) ++within;
  }
  out.mean_peak_offset = sum / static_cast<double>(tracked.size());
  out.within_2px = double(within) / static_cast<double>(tracked.size());
  return out;
}

inline void cmd_render_check(const PipelineConfig& cfg) {
  const Calibrated c = load_calibrated(cfg);
  StageRecorder rec(cfg, "render-check");
  fs::create_directories(cfg.output_dir / "render");
  json frames = json::array();
  double psnr_sum = 0.0, ssim_sum = 0.0, worst = 0.0, within = 0.0;
  const auto ids = check_frame_indices(c.table.n(), cfg.check_frames);
  for (const int f : ids) {
    const OverlayCheck oc = overlay_check(c, f);
    const fs::path p = cfg.output_dir / "render" / frame_file_name(f);
    io::write_png_rgb(p, oc.rendered);
    rec.output(p);
    frames.push_back({{"frame", f}, {"psnr", oc.psnr}, {"ssim", oc.ssim}, {"mean_peak_offset", oc.mean_peak_offset},
                      {"max_peak_offset", oc.max_peak_offset}, {"within_2px", oc.within_2px}});
    psnr_sum += oc.psnr;
    ssim_sum += oc.ssim;
    worst = std::max(worst, oc.max_peak_offset);
    within += oc.within_2px;
  }
  const double k = static_cast<double>(ids.size());
  const json summary = {{"frames", frames}, {"psnr", psnr_sum / k}, {"ssim", ssim_sum / k},
                        {"max_peak_offset", worst}, {"within_2px", within / k}};
  io::write_json(cfg.output_dir / "render_check.json", summary);
  rec.output(cfg.output_dir / "render_check.json");
  rec.metrics() = {{"psnr", summary["psnr"]}, {"within_2px", summary["within_2px"]}};
  rec.commit();
}

inline json reprojection_stats(const Calibrated& c) {
  std::vector<double> e = reprojection_errors(c.table, c.params);
  std::sort(e.begin(), e.end());
  double sum = 0.0, sq = 0.0;
  for (double v : e) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(e.size());
  return {{"mean_px", sum / n}, {"rmse_px", std::sqrt(sq / n)}, {"median_px", e[e.size() / 2]},
          {"max_px", e.back()}, {"count", e.size()}};
}

/// Metrics of the calibrated rig. Trajectory terms need gt_cameras.json.
inline json compute_metrics(const PipelineConfig& cfg, const Calibrated& c) {
  json out;
  out["reprojection"] = reprojection_stats(c);
  if (!fs::exists(gt_cameras_path(cfg))) return out;
  const io::CameraFile gt = io::load_cameras(gt_cameras_path(cfg));
  const Trajectory est_t = trajectory_from(c.params.cameras);
  const Trajectory gt_t = trajectory_from(gt.cameras);
  const TrajectoryReport tr = evaluate_trajectory(est_t, gt_t);
  const Quat q = rotation_to_quat(tr.sim3.rotation);
  double psnr_sum = 0.0, ssim_sum = 0.0;
  const auto ids = check_frame_indices(c.table.n(), cfg.check_frames);
  for (const int f : ids) {
    const OverlayCheck oc = overlay_check(c, f);
    psnr_sum += oc.psnr;
    ssim_sum += oc.ssim;
  }
  out["ate"] = tr.ate;
  out["rpe_trans"] = tr.rpe_trans;
  out["rpe_rot"] = tr.rpe_rot;
  out["psnr"] = psnr_sum / ids.size();
  out["ssim"] = ssim_sum / ids.size();
  out["sim3"] = {{"scale", tr.sim3.scale},
                 {"quat", {q[0], q[1], q[2], q[3]}},
                 {"trans", {tr.sim3.translation.x(), tr.sim3.translation.y(), tr.sim3.translation.z()}}};
  out["focal"] = c.params.intrinsics.focal;
  out["gt_focal"] = gt.intrinsics.focal;
  out["trajectory_extent"] = trajectory_extent(gt_t);
  return out;
}

inline json cmd_eval(const PipelineConfig& cfg) {
  const Calibrated c = load_calibrated(cfg);
  StageRecorder rec(cfg, "eval");
  const json m = compute_metrics(cfg, c);
  io::write_json(cfg.output_dir / "eval.json", m);
  rec.output(cfg.output_dir / "eval.json");
  rec.commit();
  return m;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct SvgTrack {
  std::string name;
  std::string color;
  Trajectory poses;
};

// Top-down (x, z) view; each camera is a <g class="camera"> with a dot and a
// tick along its viewing direction.
inline std::string trajectory_svg(const std::vector<SvgTrack>& tracks) {
  double minx = 1e300, maxx = -1e300, minz = 1e300, maxz = -1e300;
  for (const auto& t : tracks)
    for (const auto& p : t.poses) {
      minx = std::min(minx, p.center.x());
      maxx = std::max(maxx, p.center.x());
      minz = std::min(minz, p.center.z());
      maxz = std::max(maxz, p.center.z());
    }
  const double span = std::max({maxx - minx, maxz - minz, 1e-9});
  const double size = 600.0, margin = 40.0;
  const double scale = (size - 2 * margin) / span;
  const double tick = 0.06 * span;
  auto sx = [&](double x) { return margin + (x - minx) * scale; };
  auto sy = [&](double z) { return size - margin - (z - minz) * scale; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  svg << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (const auto& t : tracks) {
    svg << "<g class=\"trajectory\" id=\"" << t.name << "\">\n";
    for (std::size_t i = 0; i < t.poses.size(); ++i) {
      const Pose& p = t.poses[i];
      const Vec3 dir = p.rotation.col(2);
      const Vec3 end = p.center + tick * dir;
      svg << "<g class=\"camera\" data-frame=\"" << i << "\">"
          << "<circle cx=\"" << fmt(sx(p.center.x())) << "\" cy=\"" << fmt(sy(p.center.z()))
          << "\" r=\"3\" fill=\"" << t.color << "\"/>"
          << "<line x1=\"" << fmt(sx(p.center.x())) << "\" y1=\"" << fmt(sy(p.center.z())) << "\" x2=\""
          << fmt(sx(end.x())) << "\" y2=\"" << fmt(sy(end.z())) << "\" stroke=\"" << t.color
          << "\" stroke-width=\"1.5\"/></g>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void draw_cross(RgbImage& img, const Vec2& p, const Rgb& color) {
  const int c = static_cast<int>(std::lround(p.x())), r = static_cast<int>(std::lround(p.y()));
  for (int d = -2; d <= 2; ++d) {
    if (img.contains(r + d, c)) img(r + d, c) = color;
    if (img.contains(r, c + d)) img(r, c + d) = color;
  }
}

}  // namespace detail

/// report.json, trajectory.svg and overlays/%05d.png (green: tracked, red: projected).
inline json cmd_report(const PipelineConfig& cfg) {
  const Calibrated c = load_calibrated(cfg);
  StageRecorder rec(cfg, "report");
  const json metrics = compute_metrics(cfg, c);
  io::write_json(cfg.output_dir / "report.json", metrics);
  rec.output(cfg.output_dir / "report.json");

  std::vector<detail::SvgTrack> tracks;
  Trajectory est = trajectory_from(c.params.cameras);
  if (fs::exists(gt_cameras_path(cfg))) {
    const Trajectory gt = trajectory_from(io::load_cameras(gt_cameras_path(cfg)).cameras);
    est = transformed(est, umeyama_align(est, gt));
    tracks.push_back({"ground_truth", "#1f77b4", gt});
  }
  tracks.push_back({"estimated", "#ff7f0e", est});
  io::write_text(cfg.output_dir / "trajectory.svg", detail::trajectory_svg(tracks));
  rec.output(cfg.output_dir / "trajectory.svg");

  const DirectoryFrames frames(cfg.dataset_dir);
  fs::create_directories(cfg.output_dir / "overlays");
  for (const int f : check_frame_indices(c.table.n(), cfg.check_frames)) {
    RgbImage img = frames.rgb(f);
    const auto proj = project_points(c.params.sp3d, c.table.frame_indices(f), c.params.cameras[f], c.params.intrinsics);
    for (const Vec2& t : c.table.frame_positions(f)) detail::draw_cross(img, t, Rgb{0.1f, 0.9f, 0.1f});
    for (const Vec2& p : proj.pixels) detail::draw_cross(img, p, Rgb{0.95f, 0.1f, 0.1f});
    const fs::path p = cfg.output_dir / "overlays" / frame_file_name(f);
    io::write_png_rgb(p, img);
    rec.output(p);
  }
  rec.commit();
  return metrics;
}

}  // namespace sccalib::pipeline
