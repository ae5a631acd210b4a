#pragma once
// 8-bit RGB raster with binary PPM (P6) IO.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace milg {

using Rgb = std::array<std::uint8_t, 3>;

class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(std::size_t width, std::size_t height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height), pixels_(width * height * 3) {
    for (std::size_t i = 0; i < width * height; ++i) set(i % width, i / width, fill);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  Rgb at(std::size_t x, std::size_t y) const {
    const std::size_t o = (y * width_ + x) * 3;
    return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
  }
  void set(std::size_t x, std::size_t y, Rgb c) {
    const std::size_t o = (y * width_ + x) * 3;
    pixels_[o] = c[0];
    pixels_[o + 1] = c[1];
    pixels_[o + 2] = c[2];
  }

  const std::vector<std::uint8_t>& bytes() const { return pixels_; }
  std::vector<std::uint8_t>& bytes() { return pixels_; }

  /// Copies the size x size square whose top-left corner is (x0, y0).
  RgbImage crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

}  // namespace milg
