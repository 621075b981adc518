/*
    Copyright (C) 2026 The Panoscope Authors

    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include <gtest/gtest.h>

#include <cmath>

#include "panoscope/error.hpp"
#include "panoscope/image_io.hpp"
#include "panoscope/raster.hpp"
#include "test_support.hpp"

namespace panoscope {
namespace {

using testing::random_image;

TEST(Raster, ConstructorChecksDataLength) {
  EXPECT_EQ(Raster(4, 3, 3).data().size(), 36u);
  EXPECT_THROW(Raster(2, 2, 1, std::vector<double>(5)), Error);
  EXPECT_THROW(Raster(0, 2, 1), Error);
  EXPECT_THROW(Raster(2, 2, 2), Error);
}

TEST(Bilinear, ConstantImage) {
  const Raster img(7, 5, 1, 100.0);
  EXPECT_DOUBLE_EQ(*sample_bilinear(img, {3.3, 2.7}), 100.0);
}

TEST(Bilinear, Midpoint) {
  const Raster img(2, 1, 1, std::vector<double>{0.0, 255.0});
  EXPECT_DOUBLE_EQ(*sample_bilinear(img, {0.5, 0.0}), 127.5);
}

TEST(Bilinear, OutOfBoundsIsAMarker) {
  const Raster img(4, 4, 1, 1.0);
  EXPECT_FALSE(sample_bilinear(img, {-0.01, 1.0}));
  EXPECT_FALSE(sample_bilinear(img, {1.0, 3.0001}));
  EXPECT_TRUE(sample_bilinear(img, {3.0, 3.0}));
}

TEST(Bilinear, MatchesFourNeighbourOracle) {
  const Raster img = random_image(8, 8, 11);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(0.0, 7.0), y = rng.uniform(0.0, 7.0);
    const int x0 = std::min(static_cast<int>(x), 6), y0 = std::min(static_cast<int>(y), 6);
    const double fx = x - x0, fy = y - y0;
    const double oracle = (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x0 + 1, y0) +
                          (1 - fx) * fy * img.at(x0, y0 + 1) + fx * fy * img.at(x0 + 1, y0 + 1);
    EXPECT_NEAR(*sample_bilinear(img, {x, y}), oracle, 1e-9);
  }
}

TEST(Bilinear, IntegerCoordinatesReturnStoredPixels) {
  const Raster img = random_image(6, 5, 3, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(*sample_bilinear(img, {double(x), double(y)}, c), img.at(x, y, c));
      }
}

TEST(Bilinear, GradientMatchesFiniteDifferences) {
  const Raster img = random_image(9, 9, 17);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    // Stay off cell boundaries, where the interpolant has a kink.
    const double x = std::floor(rng.uniform(1.0, 7.0)) + rng.uniform(0.1, 0.9);
    const double y = std::floor(rng.uniform(1.0, 7.0)) + rng.uniform(0.1, 0.9);
    const auto g = *sample_bilinear_gradient(img, {x, y});
    const double h = 1e-6;
    const double dx = (*sample_bilinear(img, {x + h, y}) - *sample_bilinear(img, {x - h, y})) / (2 * h);
    const double dy = (*sample_bilinear(img, {x, y + h}) - *sample_bilinear(img, {x, y - h})) / (2 * h);
    EXPECT_NEAR(g.value, *sample_bilinear(img, {x, y}), 1e-12);
    EXPECT_NEAR(g.dx, dx, 1e-5);
    EXPECT_NEAR(g.dy, dy, 1e-5);
  }
}

TEST(Gray, LumaWeights) {
  EXPECT_EQ(to_gray(Raster(1, 1, 3, 255.0)).at(0, 0), 255.0);
  const Raster rgb(1, 1, 3, std::vector<double>{100, 50, 200});
  EXPECT_EQ(to_gray(rgb).at(0, 0), 82.0);
  const Raster g = random_image(5, 4, 9);
  EXPECT_EQ(to_gray(g), g);
}

TEST(Gaussian, SigmaZeroIsIdentity) {
  const Raster img = random_image(12, 9, 4);
  EXPECT_EQ(gaussian_smooth(img, 0.0), img);
}

TEST(Gaussian, ConstantStaysConstant) {
  const Raster out = gaussian_smooth(Raster(10, 10, 1, 42.0), 1.7);
  for (double v : out.data()) EXPECT_NEAR(v, 42.0, 1e-12);
}

TEST(Gaussian, ImpulseResponseIsKernelSquared) {
  Raster img(31, 31, 1, 0.0);
  img.at(15, 15) = 1.0;
  // Independent kernel: unnormalized taps over radius ceil(3 sigma).
  double sum = 0.0;
  for (int i = -6; i <= 6; ++i) sum += std::exp(-i * i / 8.0);
  const double g0 = 1.0 / sum;
  EXPECT_NEAR(gaussian_smooth(img, 2.0).at(15, 15), g0 * g0, 1e-6);
}

TEST(Gaussian, PreservesMeanOnInteriorDominatedImages) {
  const Raster img = random_image(64, 64, 21);
  EXPECT_NEAR(gaussian_smooth(img, 1.5).mean(), img.mean(), 0.5);
}

TEST(Gaussian, NegativeSigmaRejected) {
  EXPECT_THROW(gaussian_smooth(Raster(2, 2), -1.0), Error);
}

TEST(ImageIo, PngRoundTrip) {
  const auto dir = testing::scratch_dir("raster_io");
  const Raster rgb = random_image(3, 3, 1, 3);
  save_image(rgb, dir / "a.png");
  EXPECT_EQ(load_image(dir / "a.png"), rgb);
  const Raster gray = random_image(5, 2, 2);
  save_image(gray, dir / "g.png");
  EXPECT_EQ(load_image(dir / "g.png"), gray);
}

TEST(ImageIo, PnmRoundTrip) {
  const auto dir = testing::scratch_dir("raster_pnm");
  const Raster rgb = random_image(4, 3, 7, 3);
  save_image(rgb, dir / "a.ppm");
  EXPECT_EQ(load_image(dir / "a.ppm"), rgb);
  const Raster gray = random_image(4, 3, 8);
  save_image(gray, dir / "a.pgm");
  EXPECT_EQ(load_image(dir / "a.pgm"), gray);
}

TEST(ImageIo, FrameResolution) {
  const auto dir = testing::scratch_dir("raster_size");
  save_image(Raster(560, 480, 3, 10.0), dir / "f.png");
  const Raster img = load_image(dir / "f.png");
  EXPECT_EQ(img.width(), 560);
  EXPECT_EQ(img.height(), 480);
}

TEST(ImageIo, MissingFileIsDecodeError) {
  try {
    load_image("/nonexistent/panoscope.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Decode);
  }
}

TEST(ImageIo, QuantizesOnSave) {
  const auto dir = testing::scratch_dir("raster_quant");
  save_image(Raster(2, 1, 1, std::vector<double>{-4.0, 300.4}), dir / "q.png");
  EXPECT_EQ(load_image(dir / "q.png"), Raster(2, 1, 1, std::vector<double>{0.0, 255.0}));
}

}  // namespace
}  // namespace panoscope
