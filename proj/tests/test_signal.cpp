#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "fkan/image_io.hpp"
#include "fkan/signal.hpp"

using fkan::Array2;
using fkan::ImageBuffer;
using fkan::OccupancyVolume;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("fkan_signal_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
              "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  std::filesystem::create_directories(dir);
  return dir;
}

ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  ImageBuffer img(w, h, c);
  for (double& p : img.pixels) p = d(rng);
  return img;
}

}  // namespace

TEST(ImageToDataset, SinglePixelAtOrigin) {
  ImageBuffer img(1, 1, 1, 0.25);
  const auto ds = fkan::image_to_dataset(img);
  ASSERT_EQ(ds.size(), 1);
  EXPECT_EQ(ds.coords(0, 0), 0.0);
  EXPECT_EQ(ds.coords(1, 0), 0.0);
  EXPECT_EQ(ds.targets(0, 0), 0.25);
  EXPECT_EQ(ds.kind, fkan::SignalKind::image);
}

TEST(ImageToDataset, TwoByTwoCenters) {
  const auto ds = fkan::image_to_dataset(ImageBuffer(2, 2, 3));
  ASSERT_EQ(ds.size(), 4);
  Array2 expected(2, 4);
  expected << -0.5, 0.5, -0.5, 0.5,  //
      -0.5, -0.5, 0.5, 0.5;
  EXPECT_EQ(ds.coords, expected);
  EXPECT_EQ(ds.output_dim(), 3);
}

TEST(ImageToDataset, RoundTripIsExact) {
  for (int channels : {1, 3}) {
    const ImageBuffer img = random_image(4, 6, channels, 3);
    const auto ds = fkan::image_to_dataset(img);
    EXPECT_EQ(ds.size(), 24);
    const ImageBuffer back = fkan::values_to_image(ds.targets, 4, 6);
    EXPECT_TRUE(back.same_shape(img));
    EXPECT_EQ(back.pixels, img.pixels);
  }
}

TEST(ImageToDataset, CoordinateRange) {
  const auto ds = fkan::image_to_dataset(ImageBuffer(7, 10, 1));
  EXPECT_NEAR(ds.coords.row(0).cwiseAbs().maxCoeff(), 1.0 - 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(ds.coords.row(1).cwiseAbs().maxCoeff(), 1.0 - 1.0 / 10.0, 1e-15);
  EXPECT_LE(ds.coords.cwiseAbs().maxCoeff(), 1.0);
}

TEST(ImageToDataset, RejectsEmptyAndBadChannels) {
  EXPECT_THROW(fkan::image_to_dataset(ImageBuffer{}), std::invalid_argument);
  EXPECT_THROW(fkan::image_to_dataset(ImageBuffer(2, 2, 2)), std::invalid_argument);
}

TEST(SyntheticImage, ZeroFrequencyIsFlat) {
  const ImageBuffer img = fkan::synthetic_image(5, 7, {0.0});
  for (double p : img.pixels) EXPECT_EQ(p, 0.5);
}

TEST(SyntheticImage, CenterPixelIsHalf) {
  const ImageBuffer img = fkan::synthetic_image(9, 9, {1.0});
  EXPECT_NEAR(img.at(4, 4, 0), 0.5, 1e-15);
}

TEST(SyntheticImage, MatchesPerPixelOracle) {
  const ImageBuffer img = fkan::synthetic_image(64, 64, {2.0, 16.0});
  double worst = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double u = (2.0 * x + 1.0) / 64.0 - 1.0;
      const double v = (2.0 * y + 1.0) / 64.0 - 1.0;
      const double tp = 2.0 * std::numbers::pi;
      const double expect =
          0.5 + 0.25 * (std::sin(tp * 2 * u) * std::sin(tp * 2 * v) +
                        std::sin(tp * 16 * u) * std::sin(tp * 16 * v));
      worst = std::max(worst, std::abs(img.at(x, y, 0) - expect));
    }
  EXPECT_LT(worst, 1e-12);
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  EXPECT_GE(*lo, 0.0);
  EXPECT_LE(*hi, 1.0);
}

TEST(SyntheticImage, RejectsEmptyFrequencyList) {
  EXPECT_THROW(fkan::synthetic_image(4, 4, {}), std::invalid_argument);
}

TEST(SphereVolume, OccupiedFractionNearAnalytic) {
  const auto s = fkan::sdf_sphere_volume(64, 0.5);
  const double frac = static_cast<double>(s.volume.occupied()) / std::pow(64.0, 3);
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 0.125 / 8.0;
  EXPECT_NEAR(frac, analytic, 0.05 * analytic);
  EXPECT_EQ(s.dataset.size(), 64 * 64 * 64);
  EXPECT_EQ(s.dataset.output_dim(), 1);
  EXPECT_EQ(s.dataset.kind, fkan::SignalKind::volume);
}

TEST(SphereVolume, CenterAndCorner) {
  const auto s = fkan::sdf_sphere_volume(9, 1.0 / 9.0 + 1e-3);  // just above the half-width
  EXPECT_EQ(s.volume.at(4, 4, 4), 1.0);
  const auto big = fkan::sdf_sphere_volume(9, 0.999);
  for (int x : {0, 8})
    for (int y : {0, 8})
      for (int z : {0, 8}) EXPECT_EQ(big.volume.at(x, y, z), 0.0);
}

TEST(SphereVolume, OctahedralSymmetry) {
  for (int r : {5, 8}) {
    const auto s = fkan::sdf_sphere_volume(r, 0.7);
    std::array<int, 3> perm{0, 1, 2};
    int checked = 0;
    do {
      for (int flips = 0; flips < 8; ++flips, ++checked) {
        for (int z = 0; z < r; ++z)
          for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x) {
              const std::array<int, 3> p{x, y, z};
              std::array<int, 3> q{p[perm[0]], p[perm[1]], p[perm[2]]};
              for (int a = 0; a < 3; ++a)
                if (flips & (1 << a)) q[a] = r - 1 - q[a];
              ASSERT_EQ(s.volume.at(x, y, z), s.volume.at(q[0], q[1], q[2]));
            }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(checked, 48);
  }
}

TEST(SphereVolume, RejectsBadArguments) {
  EXPECT_THROW(fkan::sdf_sphere_volume(1, 0.5), std::invalid_argument);
  EXPECT_THROW(fkan::sdf_sphere_volume(8, 0.0), std::invalid_argument);
  EXPECT_THROW(fkan::sdf_sphere_volume(8, 1.0), std::invalid_argument);
}

TEST(SphereVolume, DatasetMatchesVolumeOrder) {
  const auto s = fkan::sdf_sphere_volume(6, 0.6);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto i = static_cast<Eigen::Index>(s.volume.index(x, y, z));
        EXPECT_EQ(s.dataset.targets(0, i), s.volume.at(x, y, z));
        EXPECT_EQ(s.dataset.coords(0, i), fkan::cell_center(x, 6));
        EXPECT_EQ(s.dataset.coords(2, i), fkan::cell_center(z, 6));
      }
}

TEST(TorusVolume, HoleIsEmptyAndRingIsFull) {
  const auto t = fkan::sdf_torus_volume(16, 0.5, 0.2);
  EXPECT_EQ(t.volume.at(7, 7, 7), 0.0);  // near the axis
  // A voxel near (0.5, 0, 0) sits on the tube center line.
  EXPECT_EQ(t.volume.at(11, 7, 7), 1.0);
  EXPECT_THROW(fkan::sdf_torus_volume(16, 0.8, 0.3), std::invalid_argument);
}

TEST(PredictionsToVolume, Thresholding) {
  EXPECT_EQ(fkan::predictions_to_volume(Array2::Ones(1, 8), 2).occupied(), 8u);
  EXPECT_EQ(fkan::predictions_to_volume(Array2::Constant(1, 27, 0.5 - 1e-9), 3).occupied(), 0u);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Array2 pred(1, 64);
  for (Eigen::Index i = 0; i < 64; ++i) pred(0, i) = d(rng);
  const auto vol = fkan::predictions_to_volume(pred, 4, 0.3);
  for (Eigen::Index i = 0; i < 64; ++i) {
    EXPECT_EQ(vol.values[static_cast<std::size_t>(i)], pred(0, i) >= 0.3 ? 1.0 : 0.0);
  }
  EXPECT_THROW(fkan::predictions_to_volume(Array2::Ones(1, 9), 2), fkan::ShapeError);
}

TEST(RawVolume, RoundTripAndHeader) {
  const auto s = fkan::sdf_sphere_volume(5, 0.6);
  std::stringstream buf;
  fkan::write_raw_volume(buf, s.volume);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 125u);
  EXPECT_EQ(bytes.substr(0, 4), std::string("\x05\x00\x00\x00", 4));
  const auto back = fkan::read_raw_volume(buf);
  EXPECT_EQ(back.resolution, 5);
  EXPECT_EQ(back.values, s.volume.values);
}

TEST(RawVolume, RejectsMalformedInput) {
  std::stringstream truncated(std::string("\x03\x00\x00\x00\x01\x00", 6));
  EXPECT_THROW(fkan::read_raw_volume(truncated), std::runtime_error);
  std::string bad("\x01\x00\x00\x00\x02", 5);
  std::stringstream nonbinary(bad);
  EXPECT_THROW(fkan::read_raw_volume(nonbinary), std::runtime_error);
  EXPECT_THROW(fkan::load_raw_volume("/nonexistent/volume.raw"), std::runtime_error);
}

TEST(DatasetCsv, HeaderAndRows) {
  const auto ds = fkan::image_to_dataset(ImageBuffer(2, 1, 1, 0.5));
  std::ostringstream os;
  fkan::write_dataset_csv(os, ds);
  EXPECT_EQ(os.str(), "x1,x2,y1\n-0.5,0,0.5\n0.5,0,0.5\n");
}

TEST(Quantization, Rules) {
  EXPECT_EQ(fkan::dequantize(255), 1.0);
  EXPECT_NEAR(fkan::dequantize(128), 0.50196, 1e-5);
  EXPECT_EQ(fkan::dequantize(128), 128.0 / 255.0);
  EXPECT_EQ(fkan::quantize(1.7), 255);
  EXPECT_EQ(fkan::quantize(-0.2), 0);
  EXPECT_EQ(fkan::quantize(0.5), 128);  // 127.5 rounds half up
}

TEST(ImageIo, SaveLoadWithinHalfStep) {
  const auto dir = scratch_dir();
  std::vector<std::pair<std::string, int>> cases{{"g.pgm", 1}, {"c.ppm", 3}};
#ifdef FKAN_WITH_PNG
  cases.emplace_back("g.png", 1);
  cases.emplace_back("c.png", 3);
#endif
  for (const auto& [name, channels] : cases) {
    const ImageBuffer img = random_image(13, 7, channels, 11);
    fkan::save_image(img, dir / name);
    const ImageBuffer back = fkan::load_image(dir / name);
    ASSERT_TRUE(back.same_shape(img)) << name;
    double worst = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      worst = std::max(worst, std::abs(back.pixels[i] - img.pixels[i]));
    }
    EXPECT_LE(worst, 1.0 / 510.0 + 1e-12) << name;
    EXPECT_FALSE(std::filesystem::exists(dir / (name + ".tmp")));
  }
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, ExactCodesSurvive) {
  const auto dir = scratch_dir();
  ImageBuffer img(2, 1, 1);
  img.pixels = {1.0, 128.0 / 255.0};
  fkan::save_image(img, dir / "x.pgm");
  const ImageBuffer back = fkan::load_image(dir / "x.pgm");
  EXPECT_EQ(back.pixels, img.pixels);
  std::filesystem::remove_all(dir);
}

TEST(ImageIo, Errors) {
  const auto dir = scratch_dir();
  EXPECT_THROW(fkan::load_image(dir / "missing.png"), fkan::ImageIoError);
  {
    std::ofstream out(dir / "deep.pgm", std::ios::binary);
    out << "P5\n1 1\n65535\n" << std::string(2, '\0');
  }
  try {
    fkan::load_image(dir / "deep.pgm");
    FAIL() << "16-bit image accepted";
  } catch (const fkan::ImageIoError& e) {
    EXPECT_NE(std::string(e.what()).find("bit depth"), std::string::npos);
  }
  {
    std::ofstream out(dir / "short.ppm", std::ios::binary);
    out << "P6\n4 4\n255\n" << std::string(5, '\0');
  }
  EXPECT_THROW(fkan::load_image(dir / "short.ppm"), fkan::ImageIoError);
  {
    std::ofstream out(dir / "ascii.pgm");
    out << "P2\n1 1\n255\n0\n";
  }
  EXPECT_THROW(fkan::load_image(dir / "ascii.pgm"), fkan::ImageIoError);
  EXPECT_THROW(fkan::save_image(ImageBuffer(2, 2, 3), dir / "x.pgm"), fkan::ImageIoError);
  EXPECT_THROW(fkan::save_image(ImageBuffer(2, 2, 1), dir / "x.bmp"), fkan::ImageIoError);
#ifdef FKAN_WITH_PNG
  {
    std::ofstream out(dir / "fake.png", std::ios::binary);
    out << "not a png at all";
  }
  EXPECT_THROW(fkan::load_image(dir / "fake.png"), fkan::ImageIoError);
#endif
  std::filesystem::remove_all(dir);
}
