#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "sccalib/pipeline.hpp"
#include "test_util.hpp"

using namespace sccalib;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(SCCALIB_CLI) + " " + args + " > /dev/null 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = io::read_text(err);
  return r;
}

std::string small_config(const std::string& extra_top = "", const std::string& extra_opt = "") {
  return "dataset_dir = \"data\"\n"
         "output_dir = \"out\"\n"
         "tau = 20\n"
         "seed = 3\n"
         "check_frames = 2\n" +
         extra_top +
         "[synth]\n"
         "frames = 6\n"
         "points = 60\n"
         "width = 320\n"
         "height = 180\n"
         "focal = 250.0\n"
         "[optimizer]\n"
         "iterations = 40\n" +
         extra_opt;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  io::write_text(dir / "cfg.toml", text);
  return dir / "cfg.toml";
}

std::string run_all(const fs::path& cfg, const fs::path& dir) {
  for (const char* stage : {"synth", "extract", "spe", "calibrate", "render-check", "eval", "report"}) {
    const CliRun r = cli(std::string(stage) + " --config " + cfg.string(), dir);
    if (r.code != 0) return std::string(stage) + " failed: " + r.err;
  }
  return "";
}

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Cli, FullRunWritesEveryArtifact) {
  const auto dir = sccalib::testing::scratch_dir("full");
  const fs::path cfg = write_config(dir, small_config());
  ASSERT_EQ(run_all(cfg, dir), "");
  const fs::path out = dir / "out";
  for (const char* f : {"table.json", "generations.json", "cameras.json", "points.ply", "loss_trace.csv",
                        "render_check.json", "eval.json", "report.json", "trajectory.svg", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  for (int i = 0; i < 6; ++i) EXPECT_TRUE(fs::exists(out / "pools" / (frame_file_name(i).substr(0, 5) + ".json")));
  EXPECT_TRUE(fs::exists(out / "overlays" / "00000.png"));
  EXPECT_TRUE(fs::exists(out / "overlays" / "00005.png"));
  EXPECT_TRUE(fs::exists(dir / "data" / "gt_cameras.json"));
  EXPECT_TRUE(fs::exists(dir / "data" / "gt_tracks" / "tracks_00000.json"));

  // Trace: header plus iterations + 1 rows.
  std::istringstream trace(io::read_text(out / "loss_trace.csv"));
  std::string line;
  std::getline(trace, line);
  EXPECT_EQ(line, "iteration,total,projection,distance,depth");
  int rows = 0;
  while (std::getline(trace, line)) ++rows;
  EXPECT_EQ(rows, 41);

  const json report = io::read_json(out / "report.json");
  for (const char* k : {"ate", "rpe_trans", "rpe_rot", "psnr", "ssim", "sim3", "reprojection"}) {
    EXPECT_TRUE(report.contains(k)) << k;
  }
  EXPECT_TRUE(report["sim3"].contains("scale"));
  EXPECT_EQ(report["sim3"]["quat"].size(), 4u);

  const std::string svg = io::read_text(out / "trajectory.svg");
  EXPECT_EQ(count(svg, "class=\"trajectory\""), 2);
  EXPECT_EQ(count(svg, "<g class=\"camera\""), 12);
  const auto gt_start = svg.find("id=\"ground_truth\""), est_start = svg.find("id=\"estimated\"");
  ASSERT_NE(gt_start, std::string::npos);
  ASSERT_NE(est_start, std::string::npos);
  EXPECT_EQ(count(svg.substr(gt_start, est_start - gt_start), "<g class=\"camera\""), 6);
  EXPECT_EQ(count(svg.substr(est_start), "<g class=\"camera\""), 6);
}

TEST(Cli, ManifestRecordsStagesInOrderWithHashes) {
  const auto dir = sccalib::testing::scratch_dir("manifest");
  const fs::path cfg = write_config(dir, small_config());
  ASSERT_EQ(run_all(cfg, dir), "");
  const json m = io::read_json(dir / "out" / "manifest.json");
  std::vector<std::string> stages;
  for (const auto& s : m["stages"]) stages.push_back(s["stage"]);
  EXPECT_EQ(stages, (std::vector<std::string>{"synth", "extract", "spe", "calibrate", "render-check", "eval", "report"}));
  for (const auto& s : m["stages"]) {
    EXPECT_EQ(s["seed"], 3);
    EXPECT_GE(s["seconds"].get<double>(), 0.0);
    for (const auto& o : s["outputs"]) {
      const std::string rel = o["path"];
      const fs::path p = dir / "out" / rel;
      EXPECT_EQ(o["sha256"], pipeline::sha256_file(p)) << rel;
    }
  }
  const json calib = m["stages"][3];
  EXPECT_TRUE(calib["metrics"].contains("final_loss"));
  EXPECT_LT(calib["metrics"]["final_loss"].get<double>(), calib["metrics"]["initial_loss"].get<double>());
}

TEST(Cli, ExtractRerunGivesIdenticalHashes) {
  const auto dir = sccalib::testing::scratch_dir("rerun");
  const fs::path cfg = write_config(dir, small_config());
  ASSERT_EQ(cli("synth --config " + cfg.string(), dir).code, 0);
  ASSERT_EQ(cli("extract --config " + cfg.string(), dir).code, 0);
  ASSERT_EQ(cli("extract --config " + cfg.string(), dir).code, 0);
  const json m = io::read_json(dir / "out" / "manifest.json");
  ASSERT_EQ(m["stages"].size(), 3u);
  EXPECT_EQ(m["stages"][1]["outputs"], m["stages"][2]["outputs"]);
  EXPECT_EQ(m["stages"][1]["outputs"].size(), 6u);
}

TEST(Cli, LaterStageWithoutInputsFailsCleanly) {
  const auto dir = sccalib::testing::scratch_dir("missing");
  const fs::path cfg = write_config(dir, small_config());
  ASSERT_EQ(cli("synth --config " + cfg.string(), dir).code, 0);
  const CliRun calib = cli("calibrate --config " + cfg.string(), dir);
  EXPECT_EQ(calib.code, 3);
  EXPECT_NE(calib.err.find("run the spe stage first"), std::string::npos) << calib.err;
  const CliRun spe = cli("spe --config " + cfg.string(), dir);
  EXPECT_EQ(spe.code, 3);
  EXPECT_NE(spe.err.find("run the extract stage first"), std::string::npos) << spe.err;
  EXPECT_FALSE(fs::exists(dir / "out" / "table.json"));
  EXPECT_FALSE(fs::exists(dir / "out" / "pools"));
}

TEST(Cli, MissingDatasetNamesTheFile) {
  const auto dir = sccalib::testing::scratch_dir("nodata");
  const fs::path cfg = write_config(dir, small_config());
  const CliRun r = cli("extract --config " + cfg.string(), dir);
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("frames"), std::string::npos) << r.err;
}

TEST(Cli, ReportWithoutGroundTruthHasReprojectionOnly) {
  const auto dir = sccalib::testing::scratch_dir("nogt");
  const fs::path cfg = write_config(dir, small_config());
  for (const char* stage : {"synth", "extract", "spe", "calibrate"}) ASSERT_EQ(cli(std::string(stage) + " --config " + cfg.string(), dir).code, 0);
  fs::remove(dir / "data" / "gt_cameras.json");
  ASSERT_EQ(cli("report --config " + cfg.string(), dir).code, 0);
  const json report = io::read_json(dir / "out" / "report.json");
  EXPECT_EQ(report.size(), 1u);
  EXPECT_TRUE(report.contains("reprojection"));
  const std::string svg = io::read_text(dir / "out" / "trajectory.svg");
  EXPECT_EQ(count(svg, "class=\"trajectory\""), 1);
  EXPECT_EQ(count(svg, "<g class=\"camera\""), 6);
}

TEST(Cli, DivergenceExitsNonzeroWithIteration) {
  const auto dir = sccalib::testing::scratch_dir("diverge");
  const fs::path cfg = write_config(dir, small_config("", "lr_focal = 1e300\n"));
  for (const char* stage : {"synth", "extract", "spe"}) ASSERT_EQ(cli(std::string(stage) + " --config " + cfg.string(), dir).code, 0);
  const CliRun r = cli("calibrate --config " + cfg.string(), dir);
  EXPECT_EQ(r.code, 4);
  EXPECT_TRUE(std::regex_search(r.err, std::regex("iteration [0-9]+"))) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out" / "cameras.json"));
}

TEST(Cli, BadConfigAndFlagOverrides) {
  const auto dir = sccalib::testing::scratch_dir("badcfg");
  const fs::path bad = dir / "bad.toml";
  io::write_text(bad, "dataset_dir = \"data\"\noutput_dir = \"out\"\ntau = 2\n");
  EXPECT_EQ(cli("extract --config " + bad.string(), dir).code, 2);
  io::write_text(bad, "dataset_dir = \"data\"\noutput_dir = \n");
  const CliRun syntax = cli("extract --config " + bad.string(), dir);
  EXPECT_EQ(syntax.code, 2);
  EXPECT_NE(syntax.err.find("bad.toml:2"), std::string::npos) << syntax.err;
  EXPECT_NE(cli("extract --config " + (dir / "absent.toml").string(), dir).code, 0);

  const fs::path cfg = write_config(dir, small_config());
  ASSERT_EQ(cli("synth --config " + cfg.string() + " --seed 11 --deterministic", dir).code, 0);
  const json m = io::read_json(dir / "out" / "manifest.json");
  EXPECT_EQ(m["stages"][0]["seed"], 11);
}

TEST(PipelineConfig, ResolvesPathsAgainstConfigDirectory) {
  const auto dir = sccalib::testing::scratch_dir("paths");
  const fs::path cfg = write_config(dir, small_config("tracker = \"file:tracks\"\n"));
  const pipeline::PipelineConfig c = pipeline::load_config(cfg);
  EXPECT_EQ(c.dataset_dir, fs::absolute(dir) / "data");
  EXPECT_EQ(c.output_dir, fs::absolute(dir) / "out");
  EXPECT_EQ(c.tracker, "file:" + (fs::absolute(dir) / "tracks").string());
  EXPECT_EQ(c.tau, 20);
  EXPECT_EQ(c.synth.frames, 6);
  EXPECT_EQ(c.optimizer.iterations, 40);
  EXPECT_NO_THROW(c.validate());
}

TEST(PipelineConfig, Sha256KnownAnswer) {
  EXPECT_EQ(pipeline::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(pipeline::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(PipelineReport, CheckFrameIndicesSpanSequence) {
  EXPECT_EQ(pipeline::check_frame_indices(20, 4), (std::vector<int>{0, 6, 13, 19}));
  EXPECT_EQ(pipeline::check_frame_indices(3, 10), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(pipeline::check_frame_indices(5, 1), (std::vector<int>{0}));
}
