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

#pragma once

#include "panoscope/raster.hpp"

namespace panoscope::calib {

/// Pinhole intrinsics with a two-term polynomial radial distortion.
struct DistortionModel {
  double fx = 300.0;
  double fy = 300.0;
  double cx = 280.0;
  double cy = 240.0;
  double k1 = 0.0;
  double k2 = 0.0;

  /// Throws InvalidArgument unless fx, fy > 0 (and the principal point is
  /// inside a width x height image when those are positive).
  void validate(int width = 0, int height = 0) const;
};

/// Ideal (undistorted) pixel to distorted pixel.
PixelCoord distort_point(const DistortionModel& model, PixelCoord ideal);

/// Inverse of distort_point by Newton iteration on the radius. Used where a
/// distorted image must be synthesized; undistortion itself never needs it.
PixelCoord undistort_point(const DistortionModel& model, PixelCoord distorted);

/// Output pixel q takes the bilinear sample of img at distort_point(q);
/// pixels whose source falls outside img are black.
Raster undistort_image(const Raster& img, const DistortionModel& model);

/// Forward warp: output pixel p samples img at undistort_point(p).
Raster distort_image(const Raster& img, const DistortionModel& model);

}  // namespace panoscope::calib
