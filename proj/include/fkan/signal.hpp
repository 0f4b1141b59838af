#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/array.hpp"
#include "fkan/dataset.hpp"

namespace fkan {

/// Interleaved row-major raster: pixel (x, y) channel c lives at
/// (y * width + x) * channels + c. Values are nominally in [0, 1] and are
/// clamped only when exported.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// Center of cell i out of n equal cells partitioning [-1, 1].
inline double cell_center(int i, int n) {
  return -1.0 + (2.0 * i + 1.0) / static_cast<double>(n);
}

/// One sample per pixel in row-major order; coordinate rows are (x, y).
inline SignalDataset image_to_dataset(const ImageBuffer& img) {
  if (img.width < 1 || img.height < 1 || img.pixels.empty()) {
    throw std::invalid_argument("image_to_dataset: empty image");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("image_to_dataset: channels must be 1 or 3");
  }
  if (img.pixels.size() != img.pixel_count() * img.channels) {
    throw ShapeError("image_to_dataset: pixel buffer size does not match dimensions");
  }
  const auto n = static_cast<Eigen::Index>(img.pixel_count());
  SignalDataset ds;
  ds.kind = SignalKind::image;
  ds.coords.resize(2, n);
  ds.targets.resize(img.channels, n);
  for (int y = 0; y < img.height; ++y) {
    const double cy = cell_center(y, img.height);
    for (int x = 0; x < img.width; ++x) {
      const Eigen::Index s = static_cast<Eigen::Index>(y) * img.width + x;
      ds.coords(0, s) = cell_center(x, img.width);
      ds.coords(1, s) = cy;
      for (int c = 0; c < img.channels; ++c) ds.targets(c, s) = img.at(x, y, c);
    }
  }
  return ds;
}

/// Rasterizes per-sample values [channels x W*H] (row-major pixel order) back
/// into an image. No clamping.
inline ImageBuffer values_to_image(const Array2& values, int width, int height) {
  if (values.cols() != static_cast<Eigen::Index>(width) * height) {
    throw ShapeError("values_to_image: expected " + std::to_string(width * height) +
                     " samples, got " + shape_string(values));
  }
  ImageBuffer img(width, height, static_cast<int>(values.rows()));
  for (Eigen::Index s = 0; s < values.cols(); ++s) {
    for (Eigen::Index c = 0; c < values.rows(); ++c) {
      img.pixels[static_cast<std::size_t>(s * values.rows() + c)] = values(c, s);
    }
  }
  return img;
}

inline ImageBuffer clamped(ImageBuffer img) {
  for (double& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return img;
}

/// 0.5 + 0.5 * mean_f sin(2 pi f u) sin(2 pi f v), where (u, v) are the
/// pixel-center coordinates in [-1, 1].
inline ImageBuffer synthetic_image(int width, int height, const std::vector<double>& freqs) {
  if (freqs.empty()) throw std::invalid_argument("synthetic_image: frequency list is empty");
  if (width < 1 || height < 1) throw std::invalid_argument("synthetic_image: empty image");
  ImageBuffer img(width, height, 1);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < height; ++y) {
    const double v = cell_center(y, height);
    for (int x = 0; x < width; ++x) {
      const double u = cell_center(x, width);
      double acc = 0.0;
      for (double f : freqs) acc += std::sin(two_pi * f * u) * std::sin(two_pi * f * v);
      img.at(x, y, 0) = 0.5 + 0.5 * acc / static_cast<double>(freqs.size());
    }
  }
  return img;
}

/// Cubic voxel grid over [-1, 1]^3, x-fastest: index = x + R (y + R z).
struct OccupancyVolume {
  int resolution = 0;
  std::vector<double> values;

  OccupancyVolume() = default;
  OccupancyVolume(int r, double fill = 0.0)
      : resolution(r), values(static_cast<std::size_t>(r) * r * r, fill) {}

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(resolution) * resolution * resolution;
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(resolution) * (y + static_cast<std::size_t>(resolution) * z);
  }
  double& at(int x, int y, int z) { return values[index(x, y, z)]; }
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  std::size_t occupied() const {
    std::size_t n = 0;
    for (double v : values) n += v != 0.0;
    return n;
  }
};

struct VolumeSample {
  OccupancyVolume volume;
  SignalDataset dataset;
};

/// Voxel-center coordinates (rows x, y, z) in x-fastest order.
inline Array2 volume_coords(int resolution) {
  const auto n = static_cast<Eigen::Index>(resolution) * resolution * resolution;
  Array2 coords(3, n);
  Eigen::Index s = 0;
  for (int z = 0; z < resolution; ++z) {
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x, ++s) {
        coords(0, s) = cell_center(x, resolution);
        coords(1, s) = cell_center(y, resolution);
        coords(2, s) = cell_center(z, resolution);
      }
    }
  }
  return coords;
}

/// Ground truth plus training set for a binary volume; targets are the
/// occupancies as a [1 x R^3] row.
inline VolumeSample volume_to_sample(OccupancyVolume volume) {
  VolumeSample out;
  out.dataset.kind = SignalKind::volume;
  out.dataset.coords = volume_coords(volume.resolution);
  out.dataset.targets = Eigen::Map<const Array2>(volume.values.data(), 1,
                                                 static_cast<Eigen::Index>(volume.values.size()));
  out.volume = std::move(volume);
  return out;
}

/// Occupancy of a signed distance field sampled at voxel centers; a voxel is
/// occupied where the SDF is <= 0.
inline OccupancyVolume occupancy_from_sdf(int resolution,
                                          const std::function<double(double, double, double)>& sdf) {
  if (resolution < 2) throw std::invalid_argument("occupancy volume: resolution must be >= 2");
  OccupancyVolume vol(resolution);
  for (int z = 0; z < resolution; ++z) {
    const double pz = cell_center(z, resolution);
    for (int y = 0; y < resolution; ++y) {
      const double py = cell_center(y, resolution);
      for (int x = 0; x < resolution; ++x) {
        vol.at(x, y, z) = sdf(cell_center(x, resolution), py, pz) <= 0.0 ? 1.0 : 0.0;
      }
    }
  }
  return vol;
}

inline VolumeSample sdf_sphere_volume(int resolution, double radius) {
  if (!(radius > 0.0 && radius < 1.0)) {
    throw std::invalid_argument("sdf_sphere_volume: radius must lie in (0, 1)");
  }
  return volume_to_sample(occupancy_from_sdf(resolution, [radius](double x, double y, double z) {
    return std::sqrt(x * x + y * y + z * z) - radius;
  }));
}

/// Torus around the z axis.
inline VolumeSample sdf_torus_volume(int resolution, double major_radius, double minor_radius) {
  if (!(minor_radius > 0.0 && major_radius > minor_radius && major_radius + minor_radius < 1.0)) {
    throw std::invalid_argument("sdf_torus_volume: need 0 < minor < major and major + minor < 1");
  }
  return volume_to_sample(
      occupancy_from_sdf(resolution, [=](double x, double y, double z) {
        const double q = std::sqrt(x * x + y * y) - major_radius;
        return std::sqrt(q * q + z * z) - minor_radius;
      }));
}

/// Binary volume from per-voxel predictions: occupied where pred >= threshold.
inline OccupancyVolume predictions_to_volume(const Array2& pred, int resolution,
                                             double threshold = 0.5) {
  const std::size_t expected = static_cast<std::size_t>(resolution) * resolution * resolution;
  if (resolution < 1 || static_cast<std::size_t>(pred.size()) != expected) {
    throw ShapeError("predictions_to_volume: expected " + std::to_string(expected) +
                     " predictions, got " + shape_string(pred));
  }
  OccupancyVolume vol(resolution);
  for (std::size_t i = 0; i < expected; ++i) vol.values[i] = pred.data()[i] >= threshold ? 1.0 : 0.0;
  return vol;
}

// Raw volume files: u32 little-endian R, then R^3 bytes of {0, 1}, x fastest.

inline void write_raw_volume(std::ostream& os, const OccupancyVolume& vol) {
  const auto r = static_cast<std::uint32_t>(vol.resolution);
  const unsigned char header[4] = {static_cast<unsigned char>(r & 0xff),
                                   static_cast<unsigned char>((r >> 8) & 0xff),
                                   static_cast<unsigned char>((r >> 16) & 0xff),
                                   static_cast<unsigned char>((r >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(header), 4);
  std::vector<char> bytes(vol.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = vol.values[i] != 0.0 ? 1 : 0;
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write_raw_volume: write failed");
}

inline OccupancyVolume read_raw_volume(std::istream& is) {
  unsigned char header[4];
  if (!is.read(reinterpret_cast<char*>(header), 4)) {
    throw std::runtime_error("read_raw_volume: missing resolution header");
  }
  const std::uint32_t r = header[0] | (header[1] << 8) | (header[2] << 16) |
                          (static_cast<std::uint32_t>(header[3]) << 24);
  if (r < 1 || r > 4096) {
    throw std::runtime_error("read_raw_volume: implausible resolution " + std::to_string(r));
  }
  OccupancyVolume vol(static_cast<int>(r));
  std::vector<char> bytes(vol.voxel_count());
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw std::runtime_error("read_raw_volume: truncated voxel data");
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 1) {
      throw std::runtime_error("read_raw_volume: voxel values must be 0 or 1");
    }
    vol.values[i] = bytes[i];
  }
  return vol;
}

inline OccupancyVolume load_raw_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume file '" + path + "'");
  return read_raw_volume(in);
}

/// Debug dump: `x1,...,xd,y1,...,yd` header, one sample per line.
inline void write_dataset_csv(std::ostream& os, const SignalDataset& ds) {
  for (int i = 0; i < ds.input_dim(); ++i) os << (i ? "," : "") << 'x' << (i + 1);
  for (int i = 0; i < ds.output_dim(); ++i) os << ",y" << (i + 1);
  os << '\n';
  char buf[32];
  for (Eigen::Index s = 0; s < ds.size(); ++s) {
    for (int i = 0; i < ds.input_dim(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.coords(i, s));
      os << (i ? "," : "") << buf;
    }
    for (int i = 0; i < ds.output_dim(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.targets(i, s));
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace fkan
