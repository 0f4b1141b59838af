#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/signal.hpp"

namespace fkan {

struct MetricResult {
  std::string name;  // "psnr", "ssim" or "iou"
  double value = 0.0;
};

/// Returned by psnr() for identical images.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

inline bool is_infinite_psnr(double db) { return db == kInfinitePsnr; }

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: image dimensions differ");
  if (a.pixels.empty()) throw std::invalid_argument("mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

/// 10 log10(1 / MSE) on unit dynamic range, all channels jointly.
inline double psnr(const ImageBuffer& pred, const ImageBuffer& ref) {
  const double e = mse(pred, ref);
  if (e == 0.0) return kInfinitePsnr;
  return -10.0 * std::log10(e);
}

namespace detail {

// Half-sample symmetric reflection of i into [0, n).
inline int reflect_index(int i, int n) {
  const int period = 2 * n;
  int j = i % period;
  if (j < 0) j += period;
  return j < n ? j : period - 1 - j;
}

inline std::vector<double> luma(const ImageBuffer& img) {
  std::vector<double> out(img.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (int c = 0; c < img.channels; ++c) acc += img.pixels[p * img.channels + c];
    out[p] = acc / img.channels;
  }
  return out;
}

inline std::array<double, 11> gaussian_taps(double sigma = 1.5) {
  std::array<double, 11> w{};
  double total = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace detail

/// Single-scale SSIM on the channel-mean luma with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03 and unit dynamic range. The mean is taken
/// over all fully interior windows; images narrower or shorter than the
/// window are symmetrically padded by 5 pixels and scored at every pixel.
inline double ssim(const ImageBuffer& pred, const ImageBuffer& ref) {
  if (!pred.same_shape(ref)) throw ShapeError("ssim: image dimensions differ");
  if (pred.pixels.empty()) throw std::invalid_argument("ssim: empty image");
  constexpr int kRadius = 5;
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int w = pred.width;
  const int h = pred.height;
  const bool padded = w < 2 * kRadius + 1 || h < 2 * kRadius + 1;
  const int pad = padded ? kRadius : 0;
  // Extended grid covers every pixel the windows touch.
  const int ew = w + 2 * pad;
  const int eh = h + 2 * pad;
  const int ow = padded ? w : w - 2 * kRadius;
  const int oh = padded ? h : h - 2 * kRadius;

  const std::vector<double> lx = detail::luma(pred);
  const std::vector<double> ly = detail::luma(ref);
  const auto taps = detail::gaussian_taps();

  // Five moment images on the extended grid: x, y, x^2, y^2, xy.
  std::array<std::vector<double>, 5> src;
  for (auto& s : src) s.resize(static_cast<std::size_t>(ew) * eh);
  for (int j = 0; j < eh; ++j) {
    const int sj = detail::reflect_index(j - pad, h);
    for (int i = 0; i < ew; ++i) {
      const int si = detail::reflect_index(i - pad, w);
      const double x = lx[static_cast<std::size_t>(sj) * w + si];
      const double y = ly[static_cast<std::size_t>(sj) * w + si];
      const std::size_t e = static_cast<std::size_t>(j) * ew + i;
      src[0][e] = x;
      src[1][e] = y;
      src[2][e] = x * x;
      src[3][e] = y * y;
      src[4][e] = x * y;
    }
  }

  // Separable filtering: horizontal pass over every extended row, then
  // vertical pass at each output position.
  std::array<std::vector<double>, 5> horiz;
  for (int q = 0; q < 5; ++q) {
    horiz[q].assign(static_cast<std::size_t>(ow) * eh, 0.0);
    for (int j = 0; j < eh; ++j) {
      for (int i = 0; i < ow; ++i) {
        double acc = 0.0;
        for (int t = 0; t < 11; ++t) acc += taps[t] * src[q][static_cast<std::size_t>(j) * ew + i + t];
        horiz[q][static_cast<std::size_t>(j) * ow + i] = acc;
      }
    }
  }

  double total = 0.0;
  for (int j = 0; j < oh; ++j) {
    for (int i = 0; i < ow; ++i) {
      std::array<double, 5> m{};
      for (int q = 0; q < 5; ++q) {
        double acc = 0.0;
        for (int t = 0; t < 11; ++t) acc += taps[t] * horiz[q][static_cast<std::size_t>(j + t) * ow + i];
        m[q] = acc;
      }
      const double mx = m[0];
      const double my = m[1];
      const double sxx = m[2] - mx * mx;
      const double syy = m[3] - my * my;
      const double sxy = m[4] - mx * my;
      total += ((2.0 * mx * my + C1) * (2.0 * sxy + C2)) /
               ((mx * mx + my * my + C1) * (sxx + syy + C2));
    }
  }
  return total / (static_cast<double>(ow) * oh);
}

/// |pred AND ref| / |pred OR ref|; 1 when both volumes are empty.
inline double iou(const OccupancyVolume& pred, const OccupancyVolume& ref) {
  if (pred.resolution != ref.resolution || pred.values.size() != ref.values.size()) {
    throw ShapeError("iou: resolutions differ (" + std::to_string(pred.resolution) + " vs " +
                     std::to_string(ref.resolution) + ")");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double a = pred.values[i];
    const double b = ref.values[i];
    if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0)) {
      throw std::invalid_argument("iou: volumes must be binary");
    }
    inter += (a == 1.0 && b == 1.0);
    uni += (a == 1.0 || b == 1.0);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace fkan
