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
#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panoscope/calib.hpp"
#include "panoscope/raster.hpp"

namespace panoscope::unfold {

enum class CubeId : int { A = 0, B = 1 };

/// Declaration order is also the tie-break priority for rays through edges and corners.
enum class Face : int { PosX = 0, PosY, PosZ, NegX, NegY, NegZ };

inline constexpr std::array<Face, 6> kFaces = {Face::PosX, Face::PosY, Face::PosZ,
                                               Face::NegX, Face::NegY, Face::NegZ};

const char* face_name(Face f);
const char* cube_name(CubeId c);

/// Two axis-aligned cubes sharing the Z axis: A centred at the origin and B
/// centred at (0, 0, -offset). Their union is the cavity.
struct DoubleCube {
  double edge_a = 1.0;
  double edge_b = 1.0;
  double offset = 0.8;

  void validate() const;
  Eigen::Vector3d center(CubeId c) const;
  double half(CubeId c) const { return 0.5 * (c == CubeId::A ? edge_a : edge_b); }
  double edge(CubeId c) const { return c == CubeId::A ? edge_a : edge_b; }
  /// A junction face is dropped when it lies entirely inside the other cube.
  bool excluded(CubeId c, Face f) const;
  bool inside(const Eigen::Vector3d& p) const;
};

struct SurfacePoint {
  CubeId cube = CubeId::A;
  Face face = Face::PosX;
  double u = 0.5;
  double v = 0.5;
};

struct TileRect {
  int x = 0;
  int y = 0;
  int size = 0;
};

/// Per-cube cross unfolding, cube B placed to the right of cube A.
struct AtlasLayout {
  int face_px = 256;
  int width = 0;
  int height = 0;
  std::array<std::optional<TileRect>, 12> tiles;

  static AtlasLayout cross(const DoubleCube& geom, int face_px = 256);
  const std::optional<TileRect>& tile(CubeId c, Face f) const {
    return tiles[static_cast<int>(c) * 6 + static_cast<int>(f)];
  }
};

struct Atlas {
  Raster raster;
  AtlasLayout layout;
  double pixels_per_unit = 0.0;
};

/// Affine placement of uv inside the face tile. Throws ExcludedFace.
PixelCoord surface_to_atlas(const DoubleCube& geom, const AtlasLayout& layout, const SurfacePoint& sp);

/// Inverse of surface_to_atlas; nullopt for background pixels.
std::optional<SurfacePoint> atlas_to_surface(const DoubleCube& geom, const AtlasLayout& layout,
                                             PixelCoord p);

Eigen::Vector3d surface_to_world(const DoubleCube& geom, const SurfacePoint& sp);

/// Face-local tangent axes (world units per unit u and v) and inward normal.
struct FaceFrame {
  Eigen::Vector3d origin;
  Eigen::Vector3d du;
  Eigen::Vector3d dv;
  Eigen::Vector3d inward_normal;
};
FaceFrame face_frame(const DoubleCube& geom, CubeId c, Face f);

struct RayHit {
  SurfacePoint surface;
  Eigen::Vector3d point;
  double t = 0.0;
};

/// First exit of the ray from the cavity. Throws DegenerateRay for a zero
/// direction and InvalidArgument for an origin outside the cavity.
RayHit ray_cast(const DoubleCube& geom, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);
SurfacePoint ray_to_surface(const DoubleCube& geom, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir);

/// Camera-to-world rotation plus centre; the camera looks along its +z with
/// +x to the right and +y down the image.
struct CameraPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  static CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                            const Eigen::Vector3d& up);
};

/// Distorted pixel of a world point; nullopt behind the camera.
std::optional<PixelCoord> project(const CameraPose& pose, const calib::DistortionModel& model,
                                  const Eigen::Vector3d& world);

/// Unit world direction through a distorted pixel.
Eigen::Vector3d pixel_ray(const CameraPose& pose, const calib::DistortionModel& model, PixelCoord p);

/// Every tile pixel is averaged over the frames that see its surface point
/// unoccluded; pixels seen by no frame stay 0.
Atlas bake_atlas(const DoubleCube& geom, const AtlasLayout& layout, std::span<const CameraPose> poses,
                 std::span<const Raster> frames, const calib::DistortionModel& intrinsics);

/// One line per tile: cube face x y w h
void write_layout_manifest(std::ostream& out, const AtlasLayout& layout);

/// One line per pose: px py pz followed by the row-major rotation.
void write_poses(std::ostream& out, std::span<const CameraPose> poses);
std::vector<CameraPose> read_poses(std::istream& in);

}  // namespace panoscope::unfold
