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

#include "panoscope/unfold.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "panoscope/error.hpp"

namespace panoscope::unfold {

const char* face_name(Face f) {
  switch (f) {
    case Face::PosX: return "+X";
    case Face::PosY: return "+Y";
    case Face::PosZ: return "+Z";
    case Face::NegX: return "-X";
    case Face::NegY: return "-Y";
    case Face::NegZ: return "-Z";
  }
  return "?";
}

const char* cube_name(CubeId c) { return c == CubeId::A ? "A" : "B"; }

namespace {

int normal_axis(Face f) { return static_cast<int>(f) % 3; }
double normal_sign(Face f) { return static_cast<int>(f) < 3 ? 1.0 : -1.0; }
int u_axis(Face f) { return (normal_axis(f) + 1) % 3; }
int v_axis(Face f) { return (normal_axis(f) + 2) % 3; }

constexpr double kSurfaceTol = 1e-9;

}  // namespace

void DoubleCube::validate() const {
  if (!(edge_a > 0.0) || !(edge_b > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "cube edges must be positive");
  }
  if (!(offset < 0.5 * (edge_a + edge_b))) {
    throw Error(ErrorKind::InvalidArgument, "cubes must overlap (offset < (edge_a + edge_b) / 2)");
  }
  if (!(offset > 0.5 * std::abs(edge_a - edge_b))) {
    throw Error(ErrorKind::InvalidArgument, "one cube may not contain the other");
  }
}

Eigen::Vector3d DoubleCube::center(CubeId c) const {
  return c == CubeId::A ? Eigen::Vector3d::Zero() : Eigen::Vector3d(0.0, 0.0, -offset);
}

bool DoubleCube::excluded(CubeId c, Face f) const {
  if (c == CubeId::A) return f == Face::NegZ && edge_a <= edge_b;
  return f == Face::PosZ && edge_b <= edge_a;
}

namespace {

bool inside_box(const DoubleCube& g, CubeId c, const Eigen::Vector3d& p, double tol) {
  const Eigen::Vector3d d = (p - g.center(c)).cwiseAbs();
  const double h = g.half(c) + tol;
  return d.x() <= h && d.y() <= h && d.z() <= h;
}

// Parameter interval of the ray inside the closed box; empty when tin > tout.
std::pair<double, double> slab(const DoubleCube& g, CubeId c, const Eigen::Vector3d& o,
                               const Eigen::Vector3d& d) {
  const Eigen::Vector3d lo = g.center(c).array() - g.half(c);
  const Eigen::Vector3d hi = g.center(c).array() + g.half(c);
  double tin = -std::numeric_limits<double>::infinity();
  double tout = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < lo[k] || o[k] > hi[k]) return {1.0, 0.0};
      continue;
    }
    double t0 = (lo[k] - o[k]) / d[k];
    double t1 = (hi[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    tin = std::max(tin, t0);
    tout = std::min(tout, t1);
  }
  return {tin, tout};
}

std::optional<SurfacePoint> locate_on_face(const DoubleCube& g, CubeId c, Face f,
                                           const Eigen::Vector3d& x) {
  if (g.excluded(c, f)) return std::nullopt;
  const Eigen::Vector3d ctr = g.center(c);
  const double h = g.half(c);
  const int k = normal_axis(f), ua = u_axis(f), va = v_axis(f);
  if (std::abs(x[k] - (ctr[k] + normal_sign(f) * h)) > kSurfaceTol) return std::nullopt;
  const double u = (x[ua] - (ctr[ua] - h)) / (2.0 * h);
  const double v = (x[va] - (ctr[va] - h)) / (2.0 * h);
  const double tol = kSurfaceTol / (2.0 * h);
  if (u < -tol || u > 1.0 + tol || v < -tol || v > 1.0 + tol) return std::nullopt;
  return SurfacePoint{c, f, std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)};
}

}  // namespace

bool DoubleCube::inside(const Eigen::Vector3d& p) const {
  return inside_box(*this, CubeId::A, p, 0.0) || inside_box(*this, CubeId::B, p, 0.0);
}

AtlasLayout AtlasLayout::cross(const DoubleCube& geom, int face_px) {
  if (face_px < 1) throw Error(ErrorKind::InvalidArgument, "face_px must be positive");
  AtlasLayout layout;
  layout.face_px = face_px;
  layout.width = 8 * face_px;
  layout.height = 3 * face_px;
  // (column, row) of each face in a 4 x 3 cross.
  const std::array<std::pair<int, int>, 6> cells = {{{2, 1}, {1, 0}, {1, 1}, {0, 1}, {1, 2}, {3, 1}}};
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : kFaces) {
      if (geom.excluded(c, f)) continue;
      const auto [col, row] = cells[static_cast<int>(f)];
      const int base_col = c == CubeId::A ? 0 : 4;
      layout.tiles[static_cast<int>(c) * 6 + static_cast<int>(f)] =
          TileRect{(base_col + col) * face_px, row * face_px, face_px};
    }
  }
  return layout;
}

PixelCoord surface_to_atlas(const DoubleCube& geom, const AtlasLayout& layout, const SurfacePoint& sp) {
  const auto& tile = layout.tile(sp.cube, sp.face);
  if (geom.excluded(sp.cube, sp.face) || !tile) {
    throw Error(ErrorKind::ExcludedFace, std::string("face ") + cube_name(sp.cube) +
                                             face_name(sp.face) + " has no atlas tile");
  }
  return {tile->x + sp.u * tile->size, tile->y + sp.v * tile->size};
}

std::optional<SurfacePoint> atlas_to_surface(const DoubleCube& geom, const AtlasLayout& layout,
                                             PixelCoord p) {
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : kFaces) {
      const auto& tile = layout.tile(c, f);
      if (!tile || geom.excluded(c, f)) continue;
      if (p.x >= tile->x && p.x < tile->x + tile->size && p.y >= tile->y &&
          p.y < tile->y + tile->size) {
        return SurfacePoint{c, f, (p.x - tile->x) / tile->size, (p.y - tile->y) / tile->size};
      }
    }
  }
  return std::nullopt;
}

FaceFrame face_frame(const DoubleCube& geom, CubeId c, Face f) {
  const Eigen::Vector3d ctr = geom.center(c);
  const double h = geom.half(c);
  FaceFrame fr;
  fr.origin = ctr;
  fr.origin[normal_axis(f)] += normal_sign(f) * h;
  fr.origin[u_axis(f)] -= h;
  fr.origin[v_axis(f)] -= h;
  fr.du = Eigen::Vector3d::Zero();
  fr.dv = Eigen::Vector3d::Zero();
  fr.du[u_axis(f)] = 2.0 * h;
  fr.dv[v_axis(f)] = 2.0 * h;
  fr.inward_normal = Eigen::Vector3d::Zero();
  fr.inward_normal[normal_axis(f)] = -normal_sign(f);
  return fr;
}

Eigen::Vector3d surface_to_world(const DoubleCube& geom, const SurfacePoint& sp) {
  const FaceFrame fr = face_frame(geom, sp.cube, sp.face);
  return fr.origin + sp.u * fr.du + sp.v * fr.dv;
}

RayHit ray_cast(const DoubleCube& geom, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const double n = dir.norm();
  if (!(n > 1e-15) || !dir.allFinite()) throw Error(ErrorKind::DegenerateRay, "ray direction is zero");
  const Eigen::Vector3d d = dir / n;
  const bool in_a = inside_box(geom, CubeId::A, origin, 0.0);
  const bool in_b = inside_box(geom, CubeId::B, origin, 0.0);
  if (!in_a && !in_b) throw Error(ErrorKind::InvalidArgument, "ray origin outside the cavity");

  const auto [tin_a, tout_a] = slab(geom, CubeId::A, origin, d);
  const auto [tin_b, tout_b] = slab(geom, CubeId::B, origin, d);
  double t;
  if (in_a && in_b) {
    t = std::max(tout_a, tout_b);
  } else if (in_a) {
    t = tout_a;
    if (tin_b <= t + kSurfaceTol && tout_b > t + kSurfaceTol) t = tout_b;
  } else {
    t = tout_b;
    if (tin_a <= t + kSurfaceTol && tout_a > t + kSurfaceTol) t = tout_a;
  }
  const Eigen::Vector3d x = origin + t * d;
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : kFaces) {
      if (auto sp = locate_on_face(geom, c, f, x)) return RayHit{*sp, x, t};
    }
  }
  throw Error(ErrorKind::DegenerateRay, "ray exit point is not on a cavity face");
}

SurfacePoint ray_to_surface(const DoubleCube& geom, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir) {
  return ray_cast(geom, origin, dir).surface;
}

CameraPose CameraPose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               const Eigen::Vector3d& up) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  CameraPose pose;
  pose.position = eye;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  return pose;
}

std::optional<PixelCoord> project(const CameraPose& pose, const calib::DistortionModel& m,
                                  const Eigen::Vector3d& world) {
  const Eigen::Vector3d pc = pose.rotation.transpose() * (world - pose.position);
  if (!(pc.z() > 1e-9)) return std::nullopt;
  const PixelCoord ideal{m.fx * pc.x() / pc.z() + m.cx, m.fy * pc.y() / pc.z() + m.cy};
  return calib::distort_point(m, ideal);
}

Eigen::Vector3d pixel_ray(const CameraPose& pose, const calib::DistortionModel& m, PixelCoord p) {
  const PixelCoord ideal = calib::undistort_point(m, p);
  const Eigen::Vector3d dc((ideal.x - m.cx) / m.fx, (ideal.y - m.cy) / m.fy, 1.0);
  return (pose.rotation * dc).normalized();
}

Atlas bake_atlas(const DoubleCube& geom, const AtlasLayout& layout, std::span<const CameraPose> poses,
                 std::span<const Raster> frames, const calib::DistortionModel& intrinsics) {
  geom.validate();
  if (poses.size() != frames.size()) {
    throw Error(ErrorKind::InvalidArgument, "one pose per frame required");
  }
  const int channels = frames.empty() ? 1 : frames.front().channels();
  for (const auto& f : frames) {
    if (f.channels() != channels) throw Error(ErrorKind::InvalidArgument, "frames differ in channel count");
  }
  Atlas atlas;
  atlas.layout = layout;
  atlas.raster = Raster(layout.width, layout.height, channels, 0.0);
  atlas.pixels_per_unit = layout.face_px / geom.edge_a;
  if (frames.empty()) return atlas;

  const double visibility_tol = 1e-6 * std::max(geom.edge_a, geom.edge_b);
  std::vector<std::vector<double>> samples(channels);
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : kFaces) {
      const auto& tile = layout.tile(c, f);
      if (!tile) continue;
      for (int j = 0; j < tile->size; ++j) {
        for (int i = 0; i < tile->size; ++i) {
          const SurfacePoint sp{c, f, (i + 0.5) / tile->size, (j + 0.5) / tile->size};
          const Eigen::Vector3d x = surface_to_world(geom, sp);
          for (auto& s : samples) s.clear();
          for (std::size_t k = 0; k < frames.size(); ++k) {
            const auto px = project(poses[k], intrinsics, x);
            if (!px || !frames[k].contains(*px)) continue;
            if (!geom.inside(poses[k].position)) continue;
            const RayHit hit = ray_cast(geom, poses[k].position, x - poses[k].position);
            if ((hit.point - x).norm() > visibility_tol) continue;
            for (int ch = 0; ch < channels; ++ch) samples[ch].push_back(*sample_bilinear(frames[k], *px, ch));
          }
          if (samples[0].empty()) continue;
          for (int ch = 0; ch < channels; ++ch) {
            // Sorted summation keeps the mean independent of frame order.
            std::sort(samples[ch].begin(), samples[ch].end());
            double sum = 0.0;
            for (double v : samples[ch]) sum += v;
            atlas.raster.at(tile->x + i, tile->y + j, ch) = sum / samples[ch].size();
          }
        }
      }
    }
  }
  return atlas;
}

void write_layout_manifest(std::ostream& out, const AtlasLayout& layout) {
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : kFaces) {
      const auto& tile = layout.tile(c, f);
      if (!tile) continue;
      out << cube_name(c) << ' ' << face_name(f) << ' ' << tile->x << ' ' << tile->y << ' '
          << tile->size << ' ' << tile->size << '\n';
    }
  }
}

void write_poses(std::ostream& out, std::span<const CameraPose> poses) {
  const auto old = out.precision(17);
  for (const auto& p : poses) {
    out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ' ' << p.rotation(r, c);
    }
    out << '\n';
  }
  out.precision(old);
}

std::vector<CameraPose> read_poses(std::istream& in) {
  std::vector<CameraPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    CameraPose p;
    ss >> p.position.x() >> p.position.y() >> p.position.z();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ss >> p.rotation(r, c);
    }
    if (!ss) throw Error(ErrorKind::Decode, "malformed pose record: " + line);
    poses.push_back(p);
  }
  return poses;
}

}  // namespace panoscope::unfold
