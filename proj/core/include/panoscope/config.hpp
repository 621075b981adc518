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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "panoscope/calib.hpp"
#include "panoscope/chain.hpp"
#include "panoscope/detect.hpp"
#include "panoscope/fusion.hpp"
#include "panoscope/register.hpp"
#include "panoscope/synth.hpp"
#include "panoscope/unfold.hpp"

namespace panoscope {

/// Scene used by the synth command before any config overrides.
synth::SceneSpec default_scene();

/// Every tunable of the pipeline. Defaults are the documented values listed by
/// config_keys().
struct PipelineConfig {
  std::uint64_t seed = 1;

  calib::DistortionModel calib{300.0, 300.0, 160.0, 120.0, -0.05, 0.0};

  int max_keypoints = 500;
  double match_ratio = 0.8;
  reg::HarrisOptions harris{.presmooth = 1.5};
  reg::HpftOptions hpft;

  chain::ChainFilterOptions chain;

  double fusion_beta = 0.1;
  fusion::SeamOptions seams{.saturation_level = 250.0, .presmooth = 1.0};
  fusion::FusionOptions fusion;

  unfold::DoubleCube geometry;
  int face_px = 256;

  detect::Architecture arch;
  detect::TrainOptions train;
  double conf_threshold = 0.5;
  double nms_iou = 0.45;

  synth::SceneSpec scene = default_scene();
  int n_frames = 6;
  double pan_step = 0.05;
  double camera_z = -0.4;
  synth::DatasetOptions dataset;

  /// Copies shared settings (geometry, intrinsics, seed, camera path) into the
  /// nested module options.
  void finalize();
};

struct ConfigKey {
  std::string key;
  /// "paper" when the value is stated in the source paper, "invented" otherwise.
  std::string status;
  std::string range;
  std::string doc;
};

const std::vector<ConfigKey>& config_keys();

/// Current value of a key as it would be written in a config file.
std::string config_value(const PipelineConfig& cfg, const std::string& key);

/// Throws Config for unknown keys and out-of-range values.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Flat "section.key = value" lines; '#' starts a comment.
PipelineConfig parse_config(std::istream& in);
PipelineConfig load_config(const std::filesystem::path& path);

/// The full key list with values, status and ranges, as a commented config file.
void write_config(std::ostream& out, const PipelineConfig& cfg);

}  // namespace panoscope
