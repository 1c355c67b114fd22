// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"

namespace gcrf {
namespace {

struct PngSource {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->bytes.size() - src->pos < n) png_error(png, "truncated PNG");
  std::memcpy(out, src->bytes.data() + src->pos, n);
  src->pos += n;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

[[noreturn]] void png_error_cb(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::kBadInput, std::string("PNG: ") + msg);
}

void png_warning_cb(png_structp, png_const_charp) {}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

}  // namespace

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw Error(ErrorKind::kBadInput, "not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngSource src{bytes};
  RgbImage img;
  try {
    png_set_read_fn(png, &src, png_read_cb);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (w == 0 || h == 0 || w > 16384 || h > 16384) {
      throw Error(ErrorKind::kBadInput, "PNG dimensions out of range");
    }
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_tRNS_to_alpha(png);
      png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
      throw Error(ErrorKind::kBadInput, "unsupported PNG layout");
    }
    img = RgbImage(static_cast<int>(w), static_cast<int>(h));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = img.data.data() + static_cast<std::size_t>(r) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  try {
    png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height; ++r) {
      png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(r) * img.width * 3));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1 << 20) throw Error(ErrorKind::kBadInput, "PPM header value too large");
    }
    if (!any) throw Error(ErrorKind::kBadInput, "malformed PPM header");
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(ErrorKind::kBadInput, "not a binary PPM (P6) file");
  }
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w < 1 || h < 1 || maxval != 255) throw Error(ErrorKind::kBadInput, "unsupported PPM header");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorKind::kBadInput, "malformed PPM header");
  ++pos;
  RgbImage img(w, h);
  if (bytes.size() - pos < img.data.size()) throw Error(ErrorKind::kBadInput, "truncated PPM data");
  std::memcpy(img.data.data(), bytes.data() + pos, img.data.size());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw Error(ErrorKind::kBadInput, "unrecognized image format (expected PNG or P6 PPM)");
}

RgbImage read_image(const std::filesystem::path& path) { return decode_image(read_file_bytes(path)); }

void write_image(const std::filesystem::path& path, const RgbImage& img) {
  if (path.extension() == ".ppm") {
    write_file_bytes(path, encode_ppm(img));
  } else {
    write_file_bytes(path, encode_png(img));
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace gcrf
