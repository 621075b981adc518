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
#include <filesystem>
#include <vector>

#include "panoscope/calib.hpp"
#include "panoscope/detect.hpp"
#include "panoscope/homography.hpp"
#include "panoscope/raster.hpp"
#include "panoscope/unfold.hpp"

namespace panoscope::synth {

enum class TexturePattern { Mottled, Checker };

struct TextureSpec {
  TexturePattern pattern = TexturePattern::Mottled;
  std::uint64_t seed = 1;
  std::array<double, 3> base_rgb{150.0, 80.0, 70.0};
  /// Relative brightness swing of the value-noise mottling.
  double mottle_amplitude = 0.45;
  /// Coarsest noise lattice spacing, world units.
  double cell_size = 0.03;
  int checker_squares = 8;
  double checker_low = 40.0;
  double checker_high = 210.0;
};

struct Polyp {
  unfold::SurfacePoint center;
  /// Semi-axes along the face u and v directions, world units.
  double radius_u = 0.1;
  double radius_v = 0.1;
  double brightness = 0.5;
};

struct SpecularSpec {
  int count = 0;
  double min_radius = 1.5;
  double max_radius = 4.0;
};

struct SceneSpec {
  unfold::DoubleCube geometry;
  TextureSpec texture;
  std::vector<Polyp> polyps;
  std::vector<unfold::CameraPose> path;
  calib::DistortionModel intrinsics{300.0, 300.0, 160.0, 120.0, -0.05, 0.0};
  int frame_width = 320;
  int frame_height = 240;
  /// Noise standard deviation as a fraction of 255.
  double noise_sigma = 0.0;
  SpecularSpec spots;
  std::uint64_t seed = 1;
  /// Samples per pixel along each axis.
  int supersample = 2;

  void validate() const;
};

/// Cameras facing +Z, spaced pan_step apart along X at depth camera_z and
/// centred on the cavity axis.
std::vector<unfold::CameraPose> pan_path(int n_frames, double pan_step, double camera_z);

/// Noise-free RGB texture including polyps.
std::array<double, 3> surface_color(const SceneSpec& spec, const unfold::SurfacePoint& sp);

struct RenderedFrame {
  Raster image;
  /// Projected polyp extents clipped to the frame.
  std::vector<detect::Box> polyp_boxes;
};

RenderedFrame render_frame(const SceneSpec& spec, std::size_t pose_index);

/// Homography induced by the plane of one face between the ideal (undistorted)
/// pixel coordinates of two poses.
Homography face_homography(const SceneSpec& spec, std::size_t from, std::size_t to, unfold::CubeId cube,
                           unfold::Face face);

struct DatasetOptions {
  int n_scenes = 48;
  double train_fraction = 0.75;
  std::vector<double> augment_sigmas{0.0, 1.0};
  int image_px = 96;
  int min_polyps = 1;
  int max_polyps = 2;
  /// Polyp semi-axes as a fraction of the face edge.
  double min_radius = 0.09;
  double max_radius = 0.17;
  double noise_sigma = 0.02;
  SpecularSpec spots{3, 1.0, 2.5};
  std::uint64_t seed = 1;
};

struct DatasetSplit {
  detect::Dataset train;
  detect::Dataset test;
};

/// One atlas-space panorama tile per scene; training images are repeated at
/// every augmentation sigma, test images are left unsmoothed.
DatasetSplit make_dataset(const SceneSpec& base, const DatasetOptions& opts);

/// Writes out_dir/train and out_dir/test in the detector layout.
void write_dataset(const DatasetSplit& split, const std::filesystem::path& out_dir);

}  // namespace panoscope::synth
