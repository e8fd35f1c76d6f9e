#include "semgan/png_io.hpp"

#include <png.h>

#include <array>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace semgan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error("png: " + what + ": " + path);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace

Rgb8Image read_png_rgb8(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail("cannot open", path);
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) fail("read struct alloc failed", path);
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail("info struct alloc failed", path);
  if (setjmp(png_jmpbuf(r.png))) fail("decode error", path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  // Normalize every color type to 8-bit RGB.
  png_set_palette_to_rgb(r.png);
  png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_bit_depth(r.png, r.info) == 16) png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  if (png_get_color_type(r.png, r.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(r.png, r.info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(r.png);
  }
  png_read_update_info(r.png, r.info);

  Rgb8Image img;
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  if (png_get_rowbytes(r.png, r.info) != static_cast<std::size_t>(img.width) * 3) {
    fail("unexpected row size after RGB expansion", path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * 3);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void write_png_rgb8(const std::string& path, const Rgb8Image& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw std::invalid_argument("png: rgb buffer does not match dimensions");
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail("cannot open for write", path);
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) fail("write struct alloc failed", path);
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail("info struct alloc failed", path);
  if (setjmp(png_jmpbuf(w.png))) fail("encode error", path);

  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_const_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3;
  }
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

Gray8Image read_png_labels(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail("cannot open", path);
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) fail("read struct alloc failed", path);
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail("info struct alloc failed", path);
  if (setjmp(png_jmpbuf(r.png))) fail("decode error", path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);
  const png_byte color = png_get_color_type(r.png, r.info);
  if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
    fail("mask must be indexed or grayscale PNG", path);
  }
  // Keep raw index/intensity values; no palette expansion.
  if (png_get_bit_depth(r.png, r.info) < 8) png_set_packing(r.png);
  if (png_get_bit_depth(r.png, r.info) == 16) png_set_strip_16(r.png);
  png_read_update_info(r.png, r.info);

  Gray8Image img;
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  if (png_get_rowbytes(r.png, r.info) != static_cast<std::size_t>(img.width)) {
    fail("unexpected mask row size", path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void write_png_labels(const std::string& path, const Gray8Image& image,
                      const std::vector<std::array<std::uint8_t, 3>>& palette) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw std::invalid_argument("png: label buffer does not match dimensions");
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail("cannot open for write", path);
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) fail("write struct alloc failed", path);
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail("info struct alloc failed", path);
  if (setjmp(png_jmpbuf(w.png))) fail("encode error", path);

  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // 256-entry palette; labels without an explicit color fall back to a gray
  // ramp, and IGNORE renders black.
  std::array<png_color, 256> colors{};
  for (int i = 0; i < 256; ++i) {
    colors[static_cast<std::size_t>(i)] = {static_cast<png_byte>(i), static_cast<png_byte>(i),
                                           static_cast<png_byte>(i)};
  }
  for (std::size_t i = 0; i < palette.size() && i < 255; ++i) {
    colors[i] = {palette[i][0], palette[i][1], palette[i][2]};
  }
  colors[255] = {0, 0, 0};
  png_set_PLTE(w.png, w.info, colors.data(), 256);
  png_write_info(w.png, w.info);
  std::vector<png_const_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        image.pixels.data() + static_cast<std::size_t>(y) * image.width;
  }
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

}  // namespace semgan
