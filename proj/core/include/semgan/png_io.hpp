#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace semgan {

// Interleaved 8-bit RGB buffer, row-major.
struct Rgb8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // size 3*H*W

  std::uint8_t* at(int r, int c) { return pixels.data() + (static_cast<std::size_t>(r) * width + c) * 3; }
  const std::uint8_t* at(int r, int c) const {
    return pixels.data() + (static_cast<std::size_t>(r) * width + c) * 3;
  }
};

// Single-channel 8-bit buffer (mask raw labels; 255 = IGNORE).
struct Gray8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // size H*W
};

Rgb8Image read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const Rgb8Image& image);

// Masks are written as indexed-color PNG: pixel values are the raw labels,
// the palette is only a viewing aid. Reading accepts indexed or grayscale.
Gray8Image read_png_labels(const std::string& path);
void write_png_labels(const std::string& path, const Gray8Image& image,
                      const std::vector<std::array<std::uint8_t, 3>>& palette);

}  // namespace semgan
