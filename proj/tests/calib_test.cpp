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

#include <Eigen/Dense>
#include <cmath>

#include "panoscope/calib.hpp"
#include "panoscope/error.hpp"
#include "test_support.hpp"

namespace panoscope::calib {
namespace {

TEST(Distort, ZeroCoefficientsAreIdentity) {
  const DistortionModel m{300, 300, 280, 240, 0, 0};
  const PixelCoord p = distort_point(m, {17.5, 400.25});
  EXPECT_DOUBLE_EQ(p.x, 17.5);
  EXPECT_DOUBLE_EQ(p.y, 400.25);
}

TEST(Distort, PrincipalPointFixed) {
  const DistortionModel m{300, 280, 280, 240, 0.3, -0.2};
  const PixelCoord p = distort_point(m, {280, 240});
  EXPECT_DOUBLE_EQ(p.x, 280);
  EXPECT_DOUBLE_EQ(p.y, 240);
}

TEST(Distort, WorkedExample) {
  const DistortionModel m{300, 300, 280, 280, 0.1, 0};
  const PixelCoord p = distort_point(m, {580, 280});
  EXPECT_NEAR(p.x, 610.0, 1e-12);
  EXPECT_NEAR(p.y, 280.0, 1e-12);
}

TEST(Distort, StrictlyRadial) {
  const DistortionModel m{300, 300, 160, 120, -0.2, 0.05};
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const PixelCoord p{rng.uniform(0, 320), rng.uniform(0, 240)};
    const PixelCoord q = distort_point(m, p);
    const double cross = (p.x - 160) * (q.y - 120) - (p.y - 120) * (q.x - 160);
    EXPECT_NEAR(cross, 0.0, 1e-8);
  }
}

TEST(Distort, UndistortPointInverts) {
  const DistortionModel m{300, 300, 160, 120, -0.25, 0.04};
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const PixelCoord p{rng.uniform(0, 320), rng.uniform(0, 240)};
    const PixelCoord back = distort_point(m, undistort_point(m, p));
    EXPECT_NEAR(back.x, p.x, 1e-9);
    EXPECT_NEAR(back.y, p.y, 1e-9);
  }
}

TEST(Validate, RejectsBadModels) {
  EXPECT_THROW((DistortionModel{0, 300, 1, 1, 0, 0}.validate()), Error);
  EXPECT_THROW((DistortionModel{300, 300, 400, 100, 0, 0}.validate(320, 240)), Error);
  EXPECT_NO_THROW((DistortionModel{300, 300, 160, 120, 0, 0}.validate(320, 240)));
}

TEST(Undistort, ZeroModelIsIdentity) {
  const Raster img = testing::random_image(20, 15, 4, 3);
  EXPECT_EQ(undistort_image(img, {300, 300, 10, 7, 0, 0}), img);
}

TEST(Undistort, ConstantInsideValidRegion) {
  const DistortionModel m{100, 100, 40, 30, -0.2, 0};
  const Raster out = undistort_image(Raster(80, 60, 1, 77.0), m);
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 80; ++x) {
      const PixelCoord src = distort_point(m, {double(x), double(y)});
      if (src.x >= 0 && src.y >= 0 && src.x <= 79 && src.y <= 59) {
        EXPECT_NEAR(out.at(x, y), 77.0, 1e-9);
      } else {
        EXPECT_EQ(out.at(x, y), 0.0);
      }
    }
  }
}

// Chessboard drawn analytically in ideal coordinates, pushed through the
// forward model, then undistorted; corners found by saddle refinement.
TEST(Undistort, ChessboardRowsBecomeStraight) {
  const DistortionModel m{200, 200, 160, 120, -0.2, 0.0};
  const int w = 320, h = 240;
  const double square = 24.0;
  auto board = [&](double x, double y) {
    const int i = static_cast<int>(std::floor((x - 16.0) / square));
    const int j = static_cast<int>(std::floor((y - 12.0) / square));
    return ((i + j) & 1) ? 220.0 : 30.0;
  };
  // Supersampled render of the distorted view: pixel q shows the ideal point
  // undistort_point(q).
  Raster distorted(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const PixelCoord ideal = undistort_point(m, {x - 0.375 + 0.25 * sx, y - 0.375 + 0.25 * sy});
          acc += board(ideal.x, ideal.y);
        }
      distorted.at(x, y) = acc / 16.0;
    }
  const Raster straight = undistort_image(distorted, m);
  // The row of corners at y = 12 + square; locate each corner along x
  // by the intensity-weighted centroid of the local gradient product.
  const double row_y = 12.0 + square;
  std::vector<Eigen::Vector2d> pts;
  for (int k = 2; k <= 10; ++k) {
    const double cx = 16.0 + k * square;
    double sw = 0, sx = 0, sy = 0;
    for (int y = static_cast<int>(row_y) - 4; y <= static_cast<int>(row_y) + 4; ++y)
      for (int x = static_cast<int>(cx) - 4; x <= static_cast<int>(cx) + 4; ++x) {
        const double gx = straight.at(x + 1, y) - straight.at(x - 1, y);
        const double gy = straight.at(x, y + 1) - straight.at(x, y - 1);
        const double wgt = std::abs(gx * gy);
        sw += wgt;
        sx += wgt * x;
        sy += wgt * y;
      }
    pts.emplace_back(sx / sw, sy / sw);
  }
  // Total least squares line through the corners.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d normal = es.eigenvectors().col(0);
  double worst = 0;
  for (const auto& p : pts) worst = std::max(worst, std::abs(normal.dot(p - mean)));
  EXPECT_LT(worst, 0.5);
  // Without undistortion the same row bows well beyond that.
  EXPECT_GT(std::abs(distort_point(m, {16.0 + 2 * square, row_y}).y -
                     distort_point(m, {16.0 + 6 * square, row_y}).y), 1.0);
}

TEST(Undistort, RoundTripThroughDistortImage) {
  const Raster img = testing::blob_texture(160, 120, 5, 3.0);
  for (double k1 : {-0.3, -0.1, 0.1, 0.3}) {
    const DistortionModel m{150, 150, 80, 60, k1, 0};
    const Raster back = undistort_image(distort_image(img, m), m);
    double sum = 0;
    int n = 0;
    for (int y = 30; y < 90; ++y)
      for (int x = 40; x < 120; ++x) {
        sum += std::abs(back.at(x, y) - img.at(x, y));
        ++n;
      }
    EXPECT_LT(sum / n, 2.0) << "k1 " << k1;
  }
}

}  // namespace
}  // namespace panoscope::calib
