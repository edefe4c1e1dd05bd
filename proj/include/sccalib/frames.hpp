#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sccalib/error.hpp"
#include "sccalib/image.hpp"
#include "sccalib/io/png.hpp"

namespace sccalib {

/// One frame of a monocular video. Mask convention: 1 static/usable, 0 dynamic.
struct FramePacket {
  int index = 0;
  RgbImage rgb;
  BinaryField motion_mask;
  double time = 0.0;
};

/// Ordered frames of one video. Implementations may load RGB lazily; masks are
/// queried for every frame during track pruning and should be cheap.
class FrameSequence {
 public:
  virtual ~FrameSequence() = default;
  virtual int size() const = 0;
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual RgbImage rgb(int i) const = 0;
  virtual const BinaryField& mask(int i) const = 0;
  virtual double time(int i) const = 0;
};

inline double normalized_time(int i, int n) { return n > 1 ? static_cast<double>(i) / (n - 1) : 0.0; }

class InMemoryFrames final : public FrameSequence {
 public:
  explicit InMemoryFrames(std::vector<FramePacket> frames) : frames_(std::move(frames)) {
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      require_same_shape(frames_[i].rgb, frames_[i].motion_mask, "InMemoryFrames");
      require_same_shape(frames_[i].rgb, frames_.front().rgb, "InMemoryFrames");
      if (i > 0 && !(frames_[i].time > frames_[i - 1].time)) {
        throw InvalidParameter("frame timestamps must increase strictly");
      }
    }
  }

  int size() const override { return static_cast<int>(frames_.size()); }
  int width() const override { return frames_.empty() ? 0 : frames_.front().rgb.cols(); }
  int height() const override { return frames_.empty() ? 0 : frames_.front().rgb.rows(); }
  RgbImage rgb(int i) const override { return frames_.at(i).rgb; }
  const BinaryField& mask(int i) const override { return frames_.at(i).motion_mask; }
  double time(int i) const override { return frames_.at(i).time; }

 private:
  std::vector<FramePacket> frames_;
};

inline std::string frame_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.png", i);
  return buf;
}

/// frames/%05d.png + masks/%05d.png under one dataset directory. RGB frames
/// are decoded on every request; masks are decoded once and kept.
class DirectoryFrames final : public FrameSequence {
 public:
  explicit DirectoryFrames(std::filesystem::path root) : root_(std::move(root)) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root_ / "frames")) throw IoError("missing frames directory " + (root_ / "frames").string());
    int n = 0;
    while (fs::exists(root_ / "frames" / frame_file_name(n))) ++n;
    if (n == 0) throw IoError("no frames found: expected " + (root_ / "frames" / frame_file_name(0)).string());
    count_ = n;
    masks_.resize(n);
    const BinaryField& first = mask(0);
    rows_ = first.rows();
    cols_ = first.cols();
  }

  int size() const override { return count_; }
  int width() const override { return cols_; }
  int height() const override { return rows_; }

  RgbImage rgb(int i) const override {
    check(i);
    RgbImage img = io::read_png_rgb(root_ / "frames" / frame_file_name(i));
    if (rows_ != 0 && (img.rows() != rows_ || img.cols() != cols_)) {
      throw IoError("frame " + std::to_string(i) + ": frame/mask size mismatch");
    }
    return img;
  }

  const BinaryField& mask(int i) const override {
    check(i);
    std::lock_guard lock(mutex_);
    auto& slot = masks_[i];
    if (!slot) {
      const auto path = root_ / "masks" / frame_file_name(i);
      if (!std::filesystem::exists(path)) throw IoError("missing mask " + path.string());
      auto loaded = std::make_unique<BinaryField>(io::read_png_mask(path));
      if (rows_ != 0 && (loaded->rows() != rows_ || loaded->cols() != cols_)) {
        throw IoError("frame " + std::to_string(i) + ": frame/mask size mismatch");
      }
      slot = std::move(loaded);
    }
    return *slot;
  }

  double time(int i) const override { return normalized_time(i, count_); }

 private:
  void check(int i) const {
    if (i < 0 || i >= count_) throw InvalidParameter("frame index " + std::to_string(i) + " out of range");
  }

  std::filesystem::path root_;
  int count_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  mutable std::mutex mutex_;
  mutable std::vector<std::unique_ptr<BinaryField>> masks_;
};

}  // namespace sccalib
