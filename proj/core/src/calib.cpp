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

#include "panoscope/calib.hpp"

#include <cmath>

#include "panoscope/error.hpp"

namespace panoscope::calib {

void DistortionModel::validate(int width, int height) const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  }
  if (!std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw Error(ErrorKind::InvalidArgument, "distortion model has non-finite entries");
  }
  if (width > 0 && height > 0 && !(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw Error(ErrorKind::InvalidArgument, "principal point outside the image");
  }
}

PixelCoord distort_point(const DistortionModel& m, PixelCoord p) {
  const double u = (p.x - m.cx) / m.fx;
  const double v = (p.y - m.cy) / m.fy;
  const double r2 = u * u + v * v;
  const double s = 1.0 + m.k1 * r2 + m.k2 * r2 * r2;
  return {m.cx + m.fx * u * s, m.cy + m.fy * v * s};
}

PixelCoord undistort_point(const DistortionModel& m, PixelCoord p) {
  const double ud = (p.x - m.cx) / m.fx;
  const double vd = (p.y - m.cy) / m.fy;
  const double rd = std::hypot(ud, vd);
  if (rd == 0.0 || (m.k1 == 0.0 && m.k2 == 0.0)) return p;
  // Solve r (1 + k1 r^2 + k2 r^4) = rd for the ideal radius r.
  double r = rd;
  for (int it = 0; it < 50; ++it) {
    const double r2 = r * r;
    const double f = r * (1.0 + m.k1 * r2 + m.k2 * r2 * r2) - rd;
    const double df = 1.0 + 3.0 * m.k1 * r2 + 5.0 * m.k2 * r2 * r2;
    if (df <= 1e-12) break;
    const double step = f / df;
    r -= step;
    if (r < 0.0) r = 0.5 * (r + step);
    if (std::abs(step) < 1e-14 * std::max(1.0, r)) break;
  }
  const double scale = r / rd;
  return {m.cx + m.fx * ud * scale, m.cy + m.fy * vd * scale};
}

namespace {

template <typename Map>
Raster remap(const Raster& img, Map&& source_of) {
  Raster out(img.width(), img.height(), img.channels(), 0.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const PixelCoord src = source_of(PixelCoord{static_cast<double>(x), static_cast<double>(y)});
      if (!img.contains(src)) continue;
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = *sample_bilinear(img, src, c);
    }
  }
  return out;
}

}  // namespace

Raster undistort_image(const Raster& img, const DistortionModel& model) {
  return remap(img, [&](PixelCoord q) { return distort_point(model, q); });
}

Raster distort_image(const Raster& img, const DistortionModel& model) {
  return remap(img, [&](PixelCoord p) { return undistort_point(model, p); });
}

}  // namespace panoscope::calib
