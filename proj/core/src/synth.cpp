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

#include "panoscope/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "panoscope/error.hpp"
#include "panoscope/random.hpp"

namespace panoscope::synth {

using unfold::CubeId;
using unfold::Face;
using unfold::SurfacePoint;

void SceneSpec::validate() const {
  geometry.validate();
  intrinsics.validate(frame_width, frame_height);
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise sigma must be non-negative");
  if (supersample < 1) throw Error(ErrorKind::InvalidArgument, "supersample must be at least 1");
  if (spots.count < 0 || !(spots.min_radius >= 0.0) || spots.max_radius < spots.min_radius) {
    throw Error(ErrorKind::InvalidArgument, "invalid specular spot range");
  }
  for (const auto& p : polyps) {
    if (geometry.excluded(p.center.cube, p.center.face)) {
      throw Error(ErrorKind::ExcludedFace, "polyp placed on an excluded junction face");
    }
    if (!(p.radius_u > 0.0) || !(p.radius_v > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "polyp radii must be positive");
    }
  }
}

std::vector<unfold::CameraPose> pan_path(int n_frames, double pan_step, double camera_z) {
  std::vector<unfold::CameraPose> path;
  for (int k = 0; k < n_frames; ++k) {
    const Eigen::Vector3d eye((k - 0.5 * (n_frames - 1)) * pan_step, 0.0, camera_z);
    path.push_back(unfold::CameraPose::look_at(eye, eye + Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitY()));
  }
  return path;
}

namespace {

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iz) * 0x165667b19e3779f9ULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, const Eigen::Vector3d& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double tx = smooth(p.x() - fx), ty = smooth(p.y() - fy), tz = smooth(p.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * lattice(seed, ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

double polyp_weight(const SceneSpec& spec, const Polyp& polyp, const SurfacePoint& sp,
                    const Eigen::Vector3d& world) {
  if (polyp.center.cube != sp.cube || polyp.center.face != sp.face) return 0.0;
  const auto fr = unfold::face_frame(spec.geometry, sp.cube, sp.face);
  const Eigen::Vector3d off = world - unfold::surface_to_world(spec.geometry, polyp.center);
  const double a = off.dot(fr.du.normalized()) / polyp.radius_u;
  const double b = off.dot(fr.dv.normalized()) / polyp.radius_v;
  const double d = std::hypot(a, b);
  if (d >= 1.0) return 0.0;
  if (d <= 0.7) return 1.0;
  return smooth(1.0 - (d - 0.7) / 0.3);
}

}  // namespace

std::array<double, 3> surface_color(const SceneSpec& spec, const SurfacePoint& sp) {
  const TextureSpec& tex = spec.texture;
  const Eigen::Vector3d x = unfold::surface_to_world(spec.geometry, sp);
  std::array<double, 3> rgb;
  if (tex.pattern == TexturePattern::Checker) {
    const int n = std::max(1, tex.checker_squares);
    const int cu = std::min(n - 1, static_cast<int>(sp.u * n));
    const int cv = std::min(n - 1, static_cast<int>(sp.v * n));
    const double g = (cu + cv) % 2 == 0 ? tex.checker_low : tex.checker_high;
    rgb = {g, g, g};
  } else {
    const double c = tex.cell_size;
    const double m = 0.5 * value_noise(tex.seed, x / c) + 0.3 * value_noise(splitmix64(tex.seed), x / (0.4 * c)) +
                     0.2 * value_noise(splitmix64(tex.seed + 1), x / (0.15 * c));
    const double s = 1.0 + tex.mottle_amplitude * (2.0 * m - 1.0);
    rgb = {tex.base_rgb[0] * s, tex.base_rgb[1] * s, tex.base_rgb[2] * s};
  }
  for (const auto& p : spec.polyps) {
    const double w = polyp_weight(spec, p, sp, x);
    if (w == 0.0) continue;
    for (double& ch : rgb) ch = ch * (1.0 + p.brightness * w) + 20.0 * w;
  }
  return rgb;
}

namespace {

void add_noise_and_spots(Raster& img, double sigma, const SpecularSpec& spots, Rng& rng) {
  if (sigma > 0.0) {
    for (double& v : img.data()) v += rng.normal() * sigma * 255.0;
  }
  for (int s = 0; s < spots.count; ++s) {
    const double cx = rng.uniform(0.0, img.width());
    const double cy = rng.uniform(0.0, img.height());
    const double r = rng.uniform(spots.min_radius, spots.max_radius);
    for (int y = std::max(0, static_cast<int>(cy - r)); y <= std::min(img.height() - 1, static_cast<int>(cy + r)); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - r)); x <= std::min(img.width() - 1, static_cast<int>(cx + r)); ++x) {
        if (std::hypot(x - cx, y - cy) > r) continue;
        for (int c = 0; c < img.channels(); ++c) img.at(x, y, c) = 255.0;
      }
    }
  }
}

Eigen::Matrix3d camera_matrix(const calib::DistortionModel& m) {
  Eigen::Matrix3d k;
  k << m.fx, 0.0, m.cx, 0.0, m.fy, m.cy, 0.0, 0.0, 1.0;
  return k;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x51ed270b27d4a0c1ULL));
}

}  // namespace

RenderedFrame render_frame(const SceneSpec& spec, std::size_t pose_index) {
  spec.validate();
  if (pose_index >= spec.path.size()) throw Error(ErrorKind::InvalidArgument, "pose index out of range");
  const auto& pose = spec.path[pose_index];
  if (!spec.geometry.inside(pose.position)) throw Error(ErrorKind::InvalidArgument, "camera outside the cavity");

  const int n = spec.supersample;
  RenderedFrame out;
  out.image = Raster(spec.frame_width, spec.frame_height, 3, 0.0);
  for (int y = 0; y < spec.frame_height; ++y) {
    for (int x = 0; x < spec.frame_width; ++x) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (int sy = 0; sy < n; ++sy) {
        for (int sx = 0; sx < n; ++sx) {
          const PixelCoord p{x + (sx + 0.5) / n - 0.5, y + (sy + 0.5) / n - 0.5};
          const Eigen::Vector3d dir = unfold::pixel_ray(pose, spec.intrinsics, p);
          const auto col = surface_color(spec, unfold::ray_to_surface(spec.geometry, pose.position, dir));
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = acc[c] / (n * n);
    }
  }
  Rng rng(stream_seed(spec.seed, pose_index));
  add_noise_and_spots(out.image, spec.noise_sigma, spec.spots, rng);
  out.image = quantize(out.image);

  const double tol = 1e-6 * std::max(spec.geometry.edge_a, spec.geometry.edge_b);
  for (const auto& polyp : spec.polyps) {
    const Eigen::Vector3d centre = unfold::surface_to_world(spec.geometry, polyp.center);
    const auto hit = unfold::ray_cast(spec.geometry, pose.position, centre - pose.position);
    if ((hit.point - centre).norm() > tol || !unfold::project(pose, spec.intrinsics, centre)) continue;
    const auto fr = unfold::face_frame(spec.geometry, polyp.center.cube, polyp.center.face);
    const Eigen::Vector3d eu = fr.du.normalized(), ev = fr.dv.normalized();
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (int k = 0; k < 72; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 72.0;
      const Eigen::Vector3d w = centre + polyp.radius_u * std::cos(t) * eu + polyp.radius_v * std::sin(t) * ev;
      const auto px = unfold::project(pose, spec.intrinsics, w);
      if (!px) continue;
      x0 = std::min(x0, px->x);
      y0 = std::min(y0, px->y);
      x1 = std::max(x1, px->x);
      y1 = std::max(y1, px->y);
    }
    const detect::Box box{std::max(0.0, x0), std::max(0.0, y0), std::min<double>(spec.frame_width, x1),
                          std::min<double>(spec.frame_height, y1)};
    if (box.valid()) out.polyp_boxes.push_back(box);
  }
  return out;
}

Homography face_homography(const SceneSpec& spec, std::size_t from, std::size_t to, CubeId cube, Face face) {
  if (from >= spec.path.size() || to >= spec.path.size()) {
    throw Error(ErrorKind::InvalidArgument, "pose index out of range");
  }
  const auto fr = unfold::face_frame(spec.geometry, cube, face);
  const Eigen::Vector3d n = -fr.inward_normal;
  const double d = n.dot(fr.origin);
  const auto& pi = spec.path[from];
  const auto& pj = spec.path[to];
  const double depth = d - n.dot(pi.position);
  if (std::abs(depth) < 1e-12) throw Error(ErrorKind::DegenerateConfiguration, "camera lies on the face plane");
  const Eigen::Matrix3d k = camera_matrix(spec.intrinsics);
  const Eigen::Matrix3d m = pi.rotation + (pi.position - pj.position) * (n.transpose() * pi.rotation) / depth;
  return Homography(k * pj.rotation.transpose() * m * k.inverse());
}

namespace {

struct TilePolyp {
  double u, v, ru, rv;
};

bool overlaps(const TilePolyp& a, const TilePolyp& b) {
  return std::abs(a.u - b.u) < a.ru + b.ru + 0.04 && std::abs(a.v - b.v) < a.rv + b.rv + 0.04;
}

}  // namespace

DatasetSplit make_dataset(const SceneSpec& base, const DatasetOptions& opts) {
  if (opts.n_scenes < 2) throw Error(ErrorKind::InvalidArgument, "a dataset needs at least two scenes");
  if (opts.image_px < 8) throw Error(ErrorKind::InvalidArgument, "dataset images must be at least 8 px");
  if (opts.min_polyps < 0 || opts.max_polyps < opts.min_polyps || !(opts.min_radius > 0.0) ||
      opts.max_radius < opts.min_radius || opts.max_radius >= 0.45) {
    throw Error(ErrorKind::InvalidArgument, "invalid polyp count or radius range");
  }
  if (opts.augment_sigmas.empty()) throw Error(ErrorKind::InvalidArgument, "need at least one augmentation sigma");
  base.geometry.validate();

  std::vector<std::pair<CubeId, Face>> faces;
  for (CubeId c : {CubeId::A, CubeId::B}) {
    for (Face f : unfold::kFaces) {
      if (!base.geometry.excluded(c, f)) faces.emplace_back(c, f);
    }
  }

  const int n_train = std::clamp(static_cast<int>(std::lround(opts.n_scenes * opts.train_fraction)), 1,
                                 opts.n_scenes - 1);
  std::vector<int> order(opts.n_scenes);
  for (int i = 0; i < opts.n_scenes; ++i) order[i] = i;
  Rng split_rng(opts.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  std::vector<std::uint8_t> is_train(opts.n_scenes, 0);
  for (int i = 0; i < n_train; ++i) is_train[order[i]] = 1;

  DatasetSplit split;
  const int px = opts.image_px;
  for (int s = 0; s < opts.n_scenes; ++s) {
    Rng rng(stream_seed(opts.seed, static_cast<std::uint64_t>(s) + 1000));
    SceneSpec scene = base;
    scene.polyps.clear();
    scene.texture.seed = rng.next();
    const auto [cube, face] = faces[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(faces.size()) - 1))];
    const double edge = scene.geometry.edge(cube);

    std::vector<TilePolyp> placed;
    const auto want = rng.uniform_int(opts.min_polyps, opts.max_polyps);
    for (int attempt = 0; attempt < 200 && static_cast<std::int64_t>(placed.size()) < want; ++attempt) {
      TilePolyp p;
      p.ru = rng.uniform(opts.min_radius, opts.max_radius);
      p.rv = rng.uniform(opts.min_radius, opts.max_radius);
      p.u = rng.uniform(p.ru + 0.03, 1.0 - p.ru - 0.03);
      p.v = rng.uniform(p.rv + 0.03, 1.0 - p.rv - 0.03);
      const double brightness = rng.uniform(0.4, 0.6);
      if (std::any_of(placed.begin(), placed.end(), [&](const TilePolyp& q) { return overlaps(p, q); })) continue;
      placed.push_back(p);
      scene.polyps.push_back({SurfacePoint{cube, face, p.u, p.v}, p.ru * edge, p.rv * edge, brightness});
    }

    Raster img(px, px, 3, 0.0);
    const int n = std::max(1, base.supersample);
    for (int y = 0; y < px; ++y) {
      for (int x = 0; x < px; ++x) {
        std::array<double, 3> acc{0.0, 0.0, 0.0};
        for (int sy = 0; sy < n; ++sy) {
          for (int sx = 0; sx < n; ++sx) {
            const SurfacePoint sp{cube, face, (x + (sx + 0.5) / n) / px, (y + (sy + 0.5) / n) / px};
            const auto col = surface_color(scene, sp);
            for (int c = 0; c < 3; ++c) acc[c] += col[c];
          }
        }
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = acc[c] / (n * n);
      }
    }
    add_noise_and_spots(img, opts.noise_sigma, opts.spots, rng);
    img = quantize(img);

    std::vector<detect::Box> boxes;
    for (const auto& p : placed) {
      boxes.push_back({(p.u - p.ru) * px, (p.v - p.rv) * px, (p.u + p.ru) * px, (p.v + p.rv) * px});
    }
    char name[64];
    if (is_train[s]) {
      for (std::size_t k = 0; k < opts.augment_sigmas.size(); ++k) {
        const double sigma = opts.augment_sigmas[k];
        std::snprintf(name, sizeof name, "scene_%03d_s%zu", s, k);
        split.train.samples.push_back({name, sigma > 0.0 ? quantize(gaussian_smooth(img, sigma)) : img, boxes});
      }
    } else {
      std::snprintf(name, sizeof name, "scene_%03d", s);
      split.test.samples.push_back({name, img, boxes});
    }
  }
  return split;
}

void write_dataset(const DatasetSplit& split, const std::filesystem::path& out_dir) {
  for (const auto& s : split.train.samples) detect::save_sample(s, out_dir / "train");
  for (const auto& s : split.test.samples) detect::save_sample(s, out_dir / "test");
}

}  // namespace panoscope::synth
