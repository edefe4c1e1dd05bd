#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sccalib/error.hpp"

namespace sccalib {

/// Dense row-major 2D array. Rows index image y (downward), cols index x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, const T& fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw InvalidParameter("negative grid size");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }

  // Clamped access for replicate padding.
  const T& clamped(int r, int c) const {
    r = r < 0 ? 0 : (r >= rows_ ? rows_ - 1 : r);
    c = c < 0 ? 0 : (c >= cols_ ? cols_ - 1 : c);
    return data_[index(r, c)];
  }

  bool contains(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Grid& other) const = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Rgb = std::array<float, 3>;
using RgbImage = Grid<Rgb>;          // channels in [0,1]
using ScalarField = Grid<double>;
using BinaryField = Grid<std::uint8_t>;  // 0 or 1

template <typename T, typename U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidParameter(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()) + ")");
  }
}

}  // namespace sccalib
