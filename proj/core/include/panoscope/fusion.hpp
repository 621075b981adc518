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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "panoscope/homography.hpp"
#include "panoscope/raster.hpp"

namespace panoscope::fusion {

/// Four-parameter similarity acting as a deviation from identity:
/// (x, y) -> (x + r1 x - r2 y + t1, y + r2 x + r1 y + t2).
struct SimTransform4 {
  double r1 = 0.0;
  double r2 = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;

  PixelCoord apply(PixelCoord p) const;
  /// Frame coordinate of canvas point q; nullopt when the linear part is singular.
  std::optional<PixelCoord> apply_inverse(PixelCoord q) const;

  std::array<double, 4> params() const { return {r1, r2, t1, t2}; }
  static SimTransform4 from_params(const std::array<double, 4>& p) { return {p[0], p[1], p[2], p[3]}; }
  bool finite() const;

  friend bool operator==(const SimTransform4&, const SimTransform4&) = default;
};

PixelCoord apply_sim4(const SimTransform4& t, PixelCoord p);

/// Least-squares similarity closest to h over a grid spanning a width x height frame.
SimTransform4 fit_sim4(const Homography& h, int width, int height);

/// Canvas pixel (u, v) sits at canvas coordinate (origin_x + u, origin_y + v).
struct CanvasGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  int width = 0;
  int height = 0;

  PixelCoord position(int u, int v) const { return {origin_x + u, origin_y + v}; }
};

/// Smallest integer grid covering every transformed frame rectangle.
CanvasGrid canvas_bounds(std::span<const Raster> frames, std::span<const SimTransform4> transforms);

/// Indices of frames whose sampling domain covers canvas point q (with an
/// optional inward margin in frame pixels).
std::vector<int> covering_frames(std::span<const Raster> frames,
                                 std::span<const SimTransform4> transforms, PixelCoord q,
                                 double margin = 0.0);

struct SeamSample {
  PixelCoord canvas_pos;
  int frame_i = 0;
  int frame_j = 1;
  double weight = 1.0;
};

enum class WeightMode { Uniform, Feather };

struct SeamOptions {
  int stride = 2;
  /// Samples must lie at least this far inside both frames.
  double margin = 2.0;
  WeightMode weight_mode = WeightMode::Uniform;
  double feather_px = 16.0;
  /// Samples within saturation_guard pixels of a frame value at or above this
  /// level are dropped; specular highlights move with the light, not the
  /// tissue. Values above 255 disable the check.
  double saturation_level = 256.0;
  int saturation_guard = 2;
  /// Gaussian sigma applied to the frames after seam selection. Raw noise
  /// rewards sub-pixel drift under bilinear sampling.
  double presmooth = 0.0;
};

struct FusionProblem {
  std::vector<Raster> frames;
  std::vector<SimTransform4> init_transforms;
  /// Current estimate; starts equal to init_transforms.
  std::vector<SimTransform4> transforms;
  std::vector<SeamSample> seams;
  double beta = 0.1;
  CanvasGrid grid;
  Raster canvas_values;
};

/// Gray frames, seam samples over every multiply covered canvas pixel, and a
/// canvas grid from the initial placement.
FusionProblem make_problem(std::vector<Raster> frames, std::vector<SimTransform4> init_transforms,
                           double beta, const SeamOptions& opts = {});

/// |I_i - I_j| at the seam sample under the current transforms. Throws OutOfFrame.
double seam_error(const FusionProblem& problem, const SeamSample& s);

struct SeamJacobian {
  double e = 0.0;
  /// Partial derivatives of e with respect to (r1, r2, t1, t2) of each frame.
  std::array<double, 4> d_frame_i{};
  std::array<double, 4> d_frame_j{};
};

/// Analytic derivative of the seam error through the bilinear image gradients.
std::optional<SeamJacobian> seam_jacobian(const FusionProblem& problem, const SeamSample& s);

/// Sum of w e^2 over seams plus beta times the squared deviation of every
/// frame transform from its initial value. Out-of-frame seams contribute 0.
double eloss(const FusionProblem& problem);

/// Per-pixel mean of the contributing frames' samples (the c-step).
Raster average_canvas(std::span<const Raster> frames, std::span<const SimTransform4> transforms,
                      const CanvasGrid& grid);

struct FusionOptions {
  int max_rounds = 50;
  double tol = 1e-4;
  double initial_damping = 1e-3;
  int max_retries = 8;
};

struct FusionResult {
  std::vector<SimTransform4> transforms;
  Raster canvas_values;
  CanvasGrid grid;
  /// eloss before the first round, then after every round; non-increasing.
  std::vector<double> loss_trace;
  int accepted_steps = 0;
};

/// Alternates the averaging c-step with one damped Gauss-Newton step per frame.
/// Throws NoSeams when the problem has no seam samples.
FusionResult optimize_alternating(FusionProblem problem, const FusionOptions& opts = {});

struct Canvas {
  CanvasGrid grid;
  Raster image;
  std::vector<std::vector<int>> contributors;
  std::vector<std::uint8_t> seam_map;

  const std::vector<int>& contributors_at(int u, int v) const {
    return contributors[static_cast<std::size_t>(v) * grid.width + u];
  }
  bool is_seam(int u, int v) const { return seam_map[static_cast<std::size_t>(v) * grid.width + u] != 0; }
  std::size_t seam_count() const;
};

/// Places frames on the canvas. Pixel values come from canvas_values when
/// given (same grid), otherwise from the contributor mean. Throws EmptyInput.
Canvas composite(std::span<const Raster> frames, std::span<const SimTransform4> transforms,
                 const Raster* canvas_values = nullptr, const CanvasGrid* grid = nullptr);

/// One value per line.
void write_loss_trace(std::ostream& out, std::span<const double> trace);

}  // namespace panoscope::fusion
