#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sccalib/frames.hpp"
#include "sccalib/geometry.hpp"
#include "sccalib/imagefeat.hpp"
#include "sccalib/tracking.hpp"

namespace sccalib {

inline constexpr int kEmptySlot = -1;

/// Per-frame structural points (tau slots per frame), their indices into the
/// shared 3D point set, and the 3D points themselves. Empty slots hold -1.
class StructuralPointTable {
 public:
  StructuralPointTable() = default;
  StructuralPointTable(int n, int tau)
      : n_(n), tau_(tau), p_pos_(static_cast<std::size_t>(n) * tau, Vec2(-1.0, -1.0)),
        p_index_(static_cast<std::size_t>(n) * tau, kEmptySlot) {
    if (n < 1 || tau < 1) throw InvalidParameter("StructuralPointTable: n and tau must be positive");
  }

  int n() const noexcept { return n_; }
  int tau() const noexcept { return tau_; }
  int h_total() const noexcept { return h_total_; }
  void set_h_total(int h) { h_total_ = h; }

  Vec2& pos(int frame, int slot) { return p_pos_[at(frame, slot)]; }
  const Vec2& pos(int frame, int slot) const { return p_pos_[at(frame, slot)]; }
  int& index(int frame, int slot) { return p_index_[at(frame, slot)]; }
  int index(int frame, int slot) const { return p_index_[at(frame, slot)]; }

  std::span<const Vec2> frame_positions(int frame) const { return {p_pos_.data() + at(frame, 0), std::size_t(tau_)}; }
  std::span<const int> frame_indices(int frame) const { return {p_index_.data() + at(frame, 0), std::size_t(tau_)}; }

  int empty_slots(int frame) const {
    const auto idx = frame_indices(frame);
    return static_cast<int>(std::count(idx.begin(), idx.end(), kEmptySlot));
  }

  bool complete() const {
    return std::none_of(p_index_.begin(), p_index_.end(), [](int v) { return v == kEmptySlot; });
  }

  std::vector<Vec3>& sp3d() noexcept { return sp3d_; }
  const std::vector<Vec3>& sp3d() const noexcept { return sp3d_; }

  bool operator==(const StructuralPointTable&) const = default;

 private:
  std::size_t at(int frame, int slot) const {
    return static_cast<std::size_t>(frame) * static_cast<std::size_t>(tau_) + static_cast<std::size_t>(slot);
  }

  int n_ = 0;
  int tau_ = 0;
  int h_total_ = 0;
  std::vector<Vec2> p_pos_;
  std::vector<int> p_index_;
  std::vector<Vec3> sp3d_;
};

/// Liveness of one generation's candidates while walking forward from its seed.
struct GenerationState {
  int seed_frame = 0;
  std::vector<std::uint8_t> credit;
  int h_start = 0;
  int num = 0;

  int alive() const { return static_cast<int>(std::count(credit.begin(), credit.end(), std::uint8_t{1})); }
};

/// Bookkeeping of one committed generation.
struct GenerationRecord {
  int seed_frame = 0;
  int h_start = 0;
  int num = 0;
  int pool_size = 0;
  int commit_frame = 0;  // first frame where survivors dropped below num; n if never
  int last_frame = 0;    // last frame still carrying a member
};

/// Rounded pixel of a sub-pixel position; false when outside the image.
inline bool pixel_of(const Vec2& pos, int rows, int cols, int& r, int& c) {
  if (!pos.allFinite()) return false;
  const double cr = std::round(pos.x());
  const double rr = std::round(pos.y());
  if (cr < 0.0 || rr < 0.0 || cr > cols - 1 || rr > rows - 1) return false;
  r = static_cast<int>(rr);
  c = static_cast<int>(cr);
  return true;
}

/// Kills candidates that are invisible, leave the image, or land on a dynamic
/// pixel. Credit never goes from 0 back to 1.
inline GenerationState update_credit(GenerationState state, std::span<const Vec2> pred_pos,
                                     std::span<const std::uint8_t> pred_vis, const BinaryField& mask) {
  if (pred_pos.size() != state.credit.size() || pred_vis.size() != state.credit.size()) {
    throw InvalidParameter("update_credit: length mismatch");
  }
  for (std::size_t j = 0; j < state.credit.size(); ++j) {
    if (!state.credit[j]) continue;
    int r = 0, c = 0;
    if (!pred_vis[j] || !pixel_of(pred_pos[j], mask.rows(), mask.cols(), r, c) || !mask(r, c)) {
      state.credit[j] = 0;
    }
  }
  return state;
}

struct SpeOptions {
  int tau = 100;
  FeatureParams features;
  std::uint64_t seed = 0;
};

/// Supplies the candidate pool of a frame (from the images, or from a cache).
using PoolSource = std::function<CandidatePool(int frame)>;

inline PoolSource pools_from_frames(const FrameSequence& frames, const FeatureParams& params) {
  return [&frames, params](int i) { return build_pool(frames.rgb(i), frames.mask(i), params, i); };
}

struct SpeResult {
  StructuralPointTable table;
  std::vector<GenerationRecord> generations;
};

namespace detail {

inline void place(StructuralPointTable& table, int frame, int index, const Vec2& pos) {
  for (int s = 0; s < table.tau(); ++s) {
    if (table.index(frame, s) == kEmptySlot) {
      table.index(frame, s) = index;
      table.pos(frame, s) = pos;
      return;
    }
  }
  throw Error("internal: no free slot in frame " + std::to_string(frame));
}

// Uniform random subset of `k` elements, in draw order.
inline std::vector<int> sample_subset(std::vector<int> items, int k, std::mt19937_64& rng) {
  for (int j = 0; j < k; ++j) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(j), items.size() - 1);
    std::swap(items[static_cast<std::size_t>(j)], items[pick(rng)]);
  }
  items.resize(static_cast<std::size_t>(k));
  return items;
}

}  // namespace detail

/// Structural point extraction. Walks the frames in order; whenever a frame
/// still has k empty slots it seeds a generation from that frame's candidate
/// pool, prunes the tracked candidates by credit, and commits k of them.
inline SpeResult run_spe_detailed(const FrameSequence& frames, const TrackOracle& tracker, const SpeOptions& opts,
                                  const PoolSource& pools) {
  if (opts.tau < 4) throw InvalidParameter("run_spe: tau must be >= 4");
  const int n = frames.size();
  if (n < 1) throw InvalidParameter("run_spe: empty frame sequence");

  SpeResult result{StructuralPointTable(n, opts.tau), {}};
  StructuralPointTable& table = result.table;
  std::mt19937_64 rng(opts.seed);
  int h = 0;

  for (int i = 0; i < n; ++i) {
    const int holes = table.empty_slots(i);
    if (holes == 0) continue;

    const CandidatePool pool = pools(i);
    const int b = static_cast<int>(pool.size());
    if (b < holes) {
      throw SeedingFailure(i, "candidate pool has " + std::to_string(b) + " points but " + std::to_string(holes) +
                                  " slots are empty");
    }
    std::vector<Vec2> queries;
    queries.reserve(pool.size());
    for (const auto& p : pool.points) queries.emplace_back(double(p.col), double(p.row));

    const TrackResult tr = tracker.track(frames, i, queries);
    if (tr.num_frames() != n - i || tr.num_points() != b) {
      throw InvalidParameter("tracker returned " + std::to_string(tr.num_frames()) + "x" +
                             std::to_string(tr.num_points()) + " tracks for seed frame " + std::to_string(i));
    }
    auto row_pos = [&](int frame) {
      std::vector<Vec2> v(static_cast<std::size_t>(b));
      for (int j = 0; j < b; ++j) v[j] = tr.pos(frame - i, j);
      return v;
    };
    auto row_vis = [&](int frame) {
      std::vector<std::uint8_t> v(static_cast<std::size_t>(b));
      for (int j = 0; j < b; ++j) v[j] = tr.vis(frame - i, j);
      return v;
    };

    GenerationState state{i, std::vector<std::uint8_t>(static_cast<std::size_t>(b), 1), h, holes};
    int crossing = n;
    for (int p = i + 1; p < n; ++p) {
      GenerationState next = update_credit(state, row_pos(p), row_vis(p), frames.mask(p));
      if (next.alive() < holes) {
        crossing = p;
        break;
      }
      state = std::move(next);
    }

    // `state` now holds the credit of the last frame with at least `holes` survivors.
    std::vector<int> alive;
    for (int j = 0; j < b; ++j)
      if (state.credit[j]) alive.push_back(j);
    const std::vector<int> chosen = detail::sample_subset(std::move(alive), holes, rng);

    for (int m = i; m < crossing; ++m)
      for (int k = 0; k < holes; ++k) detail::place(table, m, h + k, tr.pos(m - i, chosen[k]));

    int last = crossing - 1;
    std::vector<std::uint8_t> live(static_cast<std::size_t>(holes), 1);
    for (int p = crossing; p < n; ++p) {
      const BinaryField& mask = frames.mask(p);
      bool any = false;
      for (int k = 0; k < holes; ++k) {
        if (!live[k]) continue;
        int r = 0, c = 0;
        const Vec2& pos = tr.pos(p - i, chosen[k]);
        if (!tr.vis(p - i, chosen[k]) || !pixel_of(pos, mask.rows(), mask.cols(), r, c) || !mask(r, c)) {
          live[k] = 0;
          continue;
        }
        detail::place(table, p, h + k, pos);
        any = true;
      }
      if (!any) break;
      last = p;
    }

    result.generations.push_back({i, h, holes, b, crossing, last});
    h += holes;
  }

  table.set_h_total(h);
  table.sp3d().assign(static_cast<std::size_t>(h), Vec3::Constant(0.5));
  return result;
}

inline StructuralPointTable run_spe(const FrameSequence& frames, const TrackOracle& tracker, const SpeOptions& opts) {
  return run_spe_detailed(frames, tracker, opts, pools_from_frames(frames, opts.features)).table;
}

/// Every table invariant that fails, as human-readable lines. Empty means valid.
inline std::vector<std::string> validate_table(const StructuralPointTable& table, const FrameSequence& frames) {
  std::vector<std::string> issues;
  if (table.n() != frames.size()) {
    issues.push_back("table has " + std::to_string(table.n()) + " frames, sequence has " +
                     std::to_string(frames.size()));
    return issues;
  }
  if (static_cast<int>(table.sp3d().size()) != table.h_total()) {
    issues.push_back("sp3d has " + std::to_string(table.sp3d().size()) + " points, h_total is " +
                     std::to_string(table.h_total()));
  }
  std::vector<int> first(static_cast<std::size_t>(std::max(table.h_total(), 0)), -1);
  std::vector<int> last(first.size(), -1);
  std::vector<int> count(first.size(), 0);
  for (int f = 0; f < table.n(); ++f) {
    const BinaryField& mask = frames.mask(f);
    std::vector<int> seen;
    for (int s = 0; s < table.tau(); ++s) {
      const int idx = table.index(f, s);
      const Vec2& pos = table.pos(f, s);
      if (idx == kEmptySlot || pos == Vec2(-1.0, -1.0)) {
        issues.push_back("frame " + std::to_string(f) + " slot " + std::to_string(s) + ": empty");
        continue;
      }
      if (idx < 0 || idx >= table.h_total()) {
        issues.push_back("frame " + std::to_string(f) + " slot " + std::to_string(s) + ": index " +
                         std::to_string(idx) + " out of range");
        continue;
      }
      if (std::find(seen.begin(), seen.end(), idx) != seen.end()) {
        issues.push_back("frame " + std::to_string(f) + ": duplicated index " + std::to_string(idx));
      }
      seen.push_back(idx);
      int r = 0, c = 0;
      if (!pixel_of(pos, mask.rows(), mask.cols(), r, c)) {
        issues.push_back("frame " + std::to_string(f) + " index " + std::to_string(idx) + ": position outside image");
      } else if (!mask(r, c)) {
        issues.push_back("frame " + std::to_string(f) + " index " + std::to_string(idx) + ": position on dynamic mask");
      }
      if (first[idx] < 0) first[idx] = f;
      last[idx] = f;
      ++count[idx];
    }
  }
  for (std::size_t g = 0; g < first.size(); ++g) {
    if (first[g] >= 0 && count[g] != last[g] - first[g] + 1) {
      issues.push_back("index " + std::to_string(g) + ": frames are not a contiguous range");
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json table_to_json(const StructuralPointTable& t) {
  nlohmann::json pos = nlohmann::json::array();
  nlohmann::json idx = nlohmann::json::array();
  for (int f = 0; f < t.n(); ++f) {
    nlohmann::json prow = nlohmann::json::array();
    nlohmann::json irow = nlohmann::json::array();
    for (int s = 0; s < t.tau(); ++s) {
      prow.push_back({t.pos(f, s).x(), t.pos(f, s).y()});
      irow.push_back(t.index(f, s));
    }
    pos.push_back(std::move(prow));
    idx.push_back(std::move(irow));
  }
  return {{"n", t.n()}, {"tau", t.tau()}, {"h_total", t.h_total()}, {"p_pos", std::move(pos)},
          {"p_index", std::move(idx)}};
}

/// sp3d is not part of the document; it is reset to 0.5 per coordinate.
inline StructuralPointTable table_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const int tau = j.at("tau").get<int>();
    StructuralPointTable t(n, tau);
    t.set_h_total(j.at("h_total").get<int>());
    const auto& pos = j.at("p_pos");
    const auto& idx = j.at("p_index");
    if (static_cast<int>(pos.size()) != n || static_cast<int>(idx.size()) != n) {
      throw ParseError("table: expected " + std::to_string(n) + " frame rows");
    }
    for (int f = 0; f < n; ++f) {
      if (static_cast<int>(pos[f].size()) != tau || static_cast<int>(idx[f].size()) != tau) {
        throw ParseError("table: frame " + std::to_string(f) + " does not have " + std::to_string(tau) + " entries");
      }
      for (int s = 0; s < tau; ++s) {
        t.pos(f, s) = Vec2(pos[f][s].at(0).get<double>(), pos[f][s].at(1).get<double>());
        t.index(f, s) = idx[f][s].get<int>();
      }
    }
    t.sp3d().assign(static_cast<std::size_t>(t.h_total()), Vec3::Constant(0.5));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("table: ") + e.what());
  }
}

inline void save_table(const std::filesystem::path& path, const StructuralPointTable& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << table_to_json(t).dump() << '\n';
}

inline StructuralPointTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open table " + path.string());
  try {
    return table_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace sccalib
