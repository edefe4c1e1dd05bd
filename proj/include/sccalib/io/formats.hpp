#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sccalib/calib.hpp"
#include "sccalib/error.hpp"
#include "sccalib/geometry.hpp"
#include "sccalib/imagefeat.hpp"

namespace sccalib::io {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// cameras.json: {focal, width, height, frames: [{index, quat: [w,x,y,z], trans: [x,y,z]}]}

inline nlohmann::json cameras_to_json(const std::vector<CameraParams>& cams, const Intrinsics& intr) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& c : cams) {
    frames.push_back({{"index", c.frame_index},
                      {"quat", {c.quat[0], c.quat[1], c.quat[2], c.quat[3]}},
                      {"trans", {c.trans.x(), c.trans.y(), c.trans.z()}}});
  }
  return {{"focal", intr.focal}, {"width", intr.width}, {"height", intr.height}, {"frames", std::move(frames)}};
}

struct CameraFile {
  std::vector<CameraParams> cameras;
  Intrinsics intrinsics;
};

inline CameraFile cameras_from_json(const nlohmann::json& j) {
  try {
    CameraFile out;
    out.intrinsics = Intrinsics::centered(j.at("focal").get<double>(), j.at("width").get<int>(),
                                          j.at("height").get<int>());
    for (const auto& f : j.at("frames")) {
      CameraParams c;
      c.frame_index = f.at("index").get<int>();
      const auto& q = f.at("quat");
      const auto& t = f.at("trans");
      c.quat = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>());
      c.trans = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
      out.cameras.push_back(c);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cameras: ") + e.what());
  }
}

inline void save_cameras(const std::filesystem::path& path, const std::vector<CameraParams>& cams,
                         const Intrinsics& intr) {
  write_json(path, cameras_to_json(cams, intr));
}

inline CameraFile load_cameras(const std::filesystem::path& path) {
  try {
    return cameras_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Binary little-endian PLY with double x, y, z.

namespace detail {

inline void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_ply(const std::filesystem::path& path, const std::vector<Vec3>& points) {
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const auto& p : points) {
    detail::put_le(out, p.x());
    detail::put_le(out, p.y());
    detail::put_le(out, p.z());
  }
  write_text(path, out);
}

inline std::vector<Vec3> load_ply(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  const std::string end = "end_header\n";
  const auto pos = data.find(end);
  if (data.rfind("ply\n", 0) != 0 || pos == std::string::npos) throw ParseError(path.string() + ": not a PLY file");
  std::istringstream header(data.substr(0, pos));
  std::string line;
  std::size_t count = 0;
  bool binary_le = false;
  std::vector<std::string> props;
  while (std::getline(header, line)) {
    if (line == "format binary_little_endian 1.0") binary_le = true;
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    if (line.rfind("property ", 0) == 0) props.push_back(line);
  }
  if (!binary_le || props.size() != 3 || props[0] != "property double x" || props[1] != "property double y" ||
      props[2] != "property double z") {
    throw ParseError(path.string() + ": expected binary little-endian double x, y, z vertices");
  }
  const std::size_t body = pos + end.size();
  if (data.size() - body != count * 24) throw ParseError(path.string() + ": truncated vertex data");
  std::vector<Vec3> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = data.data() + body + i * 24;
    pts[i] = Vec3(detail::get_le(p), detail::get_le(p + 8), detail::get_le(p + 16));
  }
  return pts;
}

// ---------------------------------------------------------------------------
// pools/<frame>.json

inline nlohmann::json pool_to_json(const CandidatePool& pool) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : pool.points) pts.push_back({p.row, p.col});
  return {{"frame_index", pool.frame_index}, {"points", std::move(pts)}, {"scores", pool.scores}};
}

inline CandidatePool pool_from_json(const nlohmann::json& j) {
  try {
    CandidatePool pool;
    pool.frame_index = j.at("frame_index").get<int>();
    for (const auto& p : j.at("points")) pool.points.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    pool.scores = j.at("scores").get<std::vector<double>>();
    if (pool.scores.size() != pool.points.size()) throw ParseError("pool: points and scores differ in length");
    return pool;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("pool: ") + e.what());
  }
}

}  // namespace sccalib::io
