#pragma once

// 8-bit raster I/O. Binary PGM/PPM is always available; PNG needs libpng and
// FKAN_WITH_PNG defined (the fkan CMake target does both when libpng is found).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef FKAN_WITH_PNG
#include <png.h>
#endif

#include "fkan/io.hpp"
#include "fkan/signal.hpp"

namespace fkan {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// [0, 1] -> 0..255: clamp, then round half up.
inline std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

inline double dequantize(std::uint8_t v) { return static_cast<double>(v) / 255.0; }

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline ImageBuffer from_bytes(int w, int h, int channels, const std::vector<std::uint8_t>& bytes) {
  ImageBuffer img(w, h, channels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = dequantize(bytes[i]);
  return img;
}

inline std::vector<std::uint8_t> to_bytes(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize(img.pixels[i]);
  return out;
}

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image '" + path.string() + "'");
  const std::string magic = pnm_token(in);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw ImageIoError("'" + path.string() + "': unsupported PNM type '" + magic +
                          "' (expected binary P5 or P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw ImageIoError("'" + path.string() + "': malformed PNM header");
  }
  if (w < 1 || h < 1) throw ImageIoError("'" + path.string() + "': empty image");
  if (maxval != 255) {
    throw ImageIoError("'" + path.string() + "': unsupported bit depth (maxval " +
                       std::to_string(maxval) + ", only 8-bit images are supported)");
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * channels);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw ImageIoError("'" + path.string() + "': truncated pixel data");
  }
  return from_bytes(w, h, channels, bytes);
}

inline void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = to_bytes(img);
  write_file_atomic(
      path,
      [&](std::ostream& os) {
        os << (img.channels == 1 ? "P5" : "P6") << '\n'
           << img.width << ' ' << img.height << "\n255\n";
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
      },
      true);
}

#ifdef FKAN_WITH_PNG
// Locals written between setjmp and the reads below are never used on the
// longjmp path, which only frees libpng state and throws.
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wclobbered"
#endif
inline ImageBuffer read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot open image '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageIoError("'" + path.string() + "': not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng initialization failed");
  }
  std::vector<std::uint8_t> bytes;
  int w = 0, h = 0, channels = 0;
  std::string error;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("'" + path.string() + "': corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (depth != 8) {
    error = "unsupported bit depth " + std::to_string(depth) + " (only 8-bit images are supported)";
  }
  if (error.empty()) {
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) error = "unsupported channel layout";
  }
  if (error.empty()) {
    bytes.resize(static_cast<std::size_t>(w) * h * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!error.empty()) throw ImageIoError("'" + path.string() + "': " + error);
  return from_bytes(w, h, channels, bytes);
}
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif

inline void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  const auto bytes = to_bytes(img);
  {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(tmp.string().c_str(), "wb"), &std::fclose);
    if (!fp) throw ImageIoError("cannot open '" + tmp.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw ImageIoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw ImageIoError("'" + path.string() + "': PNG encoding failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(bytes.data() +
                                               static_cast<std::size_t>(y) * img.width * img.channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}
#endif

}  // namespace detail

/// Reads an 8-bit grayscale or RGB raster (.pgm/.ppm, and .png when built
/// with libpng). Values are mapped to [0, 1] by division by 255.
inline ImageBuffer load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ImageIoError("image file '" + path.string() + "' does not exist");
  }
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") {
#ifdef FKAN_WITH_PNG
    return detail::read_png(path);
#else
    throw ImageIoError("'" + path.string() + "': PNG support was not compiled in");
#endif
  }
  return detail::read_pnm(path);
}

/// Writes an 8-bit raster; the format follows the extension (.png, .pgm,
/// .ppm). Values are clamped to [0, 1] and rounded half up.
inline void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw ImageIoError("save_image: only 1- or 3-channel images can be written");
  }
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") {
#ifdef FKAN_WITH_PNG
    detail::write_png(path, img);
    return;
#else
    throw ImageIoError("'" + path.string() + "': PNG support was not compiled in");
#endif
  }
  if (ext == ".pgm" && img.channels != 1) {
    throw ImageIoError("'" + path.string() + "': PGM holds grayscale images only");
  }
  if (ext == ".ppm" && img.channels != 3) {
    throw ImageIoError("'" + path.string() + "': PPM holds RGB images only");
  }
  if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm") {
    throw ImageIoError("'" + path.string() + "': unknown image extension '" + ext + "'");
  }
  detail::write_pnm(path, img);
}

}  // namespace fkan
