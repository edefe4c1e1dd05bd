#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sccalib/error.hpp"
#include "sccalib/image.hpp"

namespace sccalib::io {

namespace detail {

inline std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, std::uint32_t format, int& rows,
                                              int& cols) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  rows = static_cast<int>(image.height);
  cols = static_cast<int>(image.width);
  return buffer;
}

inline void write_png_raw(const std::filesystem::path& path, std::uint32_t format, int rows, int cols,
                          const std::vector<std::uint8_t>& buffer) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(cols);
  image.height = static_cast<png_uint_32>(rows);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

inline std::uint8_t to_byte(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace detail

inline RgbImage read_png_rgb(const std::filesystem::path& path) {
  int rows = 0, cols = 0;
  const auto buf = detail::read_png_raw(path, PNG_FORMAT_RGB, rows, cols);
  RgbImage img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img(r, c)[ch] = buf[(static_cast<std::size_t>(r) * cols + c) * 3 + ch] / 255.0f;
  return img;
}

/// 8-bit mask; values >= 128 become 1 (static), the rest 0 (dynamic).
inline BinaryField read_png_mask(const std::filesystem::path& path) {
  int rows = 0, cols = 0;
  const auto buf = detail::read_png_raw(path, PNG_FORMAT_GRAY, rows, cols);
  BinaryField mask(rows, cols);
  for (std::size_t i = 0; i < buf.size(); ++i) mask.data()[i] = buf[i] >= 128 ? 1 : 0;
  return mask;
}

inline void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint8_t> buf(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) buf[i * 3 + ch] = detail::to_byte(img.data()[i][ch]);
  detail::write_png_raw(path, PNG_FORMAT_RGB, img.rows(), img.cols(), buf);
}

inline void write_png_mask(const std::filesystem::path& path, const BinaryField& mask) {
  std::vector<std::uint8_t> buf(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) buf[i] = mask.data()[i] ? 255 : 0;
  detail::write_png_raw(path, PNG_FORMAT_GRAY, mask.rows(), mask.cols(), buf);
}

}  // namespace sccalib::io
