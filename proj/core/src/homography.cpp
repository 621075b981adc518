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

#include "panoscope/homography.hpp"

#include <Eigen/LU>
#include <cmath>
#include <limits>

#include "panoscope/error.hpp"

namespace panoscope {

Eigen::Matrix3d normalize_projective(const Eigen::Matrix3d& m) {
  const double s = m(2, 2);
  if (std::abs(s) < 1e-12 * m.norm()) return m;
  return m / s;
}

Homography::Homography(const Eigen::Matrix3d& m) : m_(normalize_projective(m)) {}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

PixelCoord Homography::apply(PixelCoord p) const {
  const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
  if (w == 0.0) {
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  return {(m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2)) / w,
          (m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2)) / w};
}

bool Homography::invertible() const {
  const double det = m_.determinant();
  return std::isfinite(det) && std::abs(det) > 1e-12 * std::pow(m_.norm(), 3);
}

Homography Homography::inverse() const {
  if (!invertible()) throw Error(ErrorKind::NonInvertibleLink, "homography is singular");
  return Homography(m_.inverse());
}

Homography Homography::after(const Homography& first) const { return Homography(m_ * first.m_); }

double symmetric_transfer_error(const Homography& h, const Homography& h_inv, PixelCoord src,
                                PixelCoord dst) {
  const PixelCoord fwd = h.apply(src);
  const PixelCoord bwd = h_inv.apply(dst);
  const double ef = std::hypot(fwd.x - dst.x, fwd.y - dst.y);
  const double eb = std::hypot(bwd.x - src.x, bwd.y - src.y);
  const double e = 0.5 * (ef + eb);
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

}  // namespace panoscope
