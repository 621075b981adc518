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

#include <Eigen/Core>
#include <span>

#include "panoscope/raster.hpp"

namespace panoscope {

/// Projective 3x3 map kept as the representative with h(2,2) == 1 whenever
/// that entry is usable. The projective scale factor is never stored.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const { return m_; }

  /// Maps p; the result is non-finite when p goes to infinity.
  PixelCoord apply(PixelCoord p) const;

  Homography inverse() const;
  double determinant() const { return m_.determinant(); }
  bool invertible() const;

  /// this ∘ first: apply \p first, then this.
  Homography after(const Homography& first) const;

 private:
  Eigen::Matrix3d m_;
};

/// Scale so that the bottom-right entry is one; left as is when that entry is ~0.
Eigen::Matrix3d normalize_projective(const Eigen::Matrix3d& m);

/// Mean of forward and backward transfer distances, in pixels.
double symmetric_transfer_error(const Homography& h, const Homography& h_inv, PixelCoord src,
                                PixelCoord dst);

}  // namespace panoscope
