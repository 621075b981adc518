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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "panoscope/detect.hpp"
#include "panoscope/fusion.hpp"
#include "panoscope/homography.hpp"
#include "panoscope/register.hpp"

namespace panoscope::evalx {

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::map<std::string, double>> regions;

  std::string to_json() const;
  /// Aligned two-column table, region breakdowns after the global metrics.
  std::string to_table() const;
};

/// Mean over seam pixels of 0.5 |dI| / 255 + 0.5 |dG| / 255, where dI and dG
/// are the spread (max - min) of contributor intensity and gradient magnitude
/// sampled through each contributor's transform. Gradients are canvas-space
/// differences one pixel wide, one-sided where a tap leaves any contributor's
/// frame. Throws NoSeams.
double texture_metric_error(const fusion::Canvas& canvas, std::span<const Raster> frames,
                            std::span<const fusion::SimTransform4> transforms);

/// |backward(forward(src)) - src|
double fb_error(const reg::Match& m, const Homography& forward, const Homography& backward);

/// For each threshold, the number of matches whose FB error is strictly below it.
std::vector<std::size_t> fb_curve(std::span<const reg::Match> matches, const Homography& forward,
                                  const Homography& backward, std::span<const double> thresholds);

/// Greedy one-to-one matching per image at IOU > 0.5; recall over ground
/// truths, accuracy over detections. Optional labels give a per-region breakdown.
EvalReport detection_report(std::span<const std::vector<detect::Detection>> detections,
                            std::span<const std::vector<detect::Box>> ground_truths,
                            std::span<const std::string> labels = {});

/// Percentage with one decimal, rounded half away from zero.
std::string format_percent(double rate);

}  // namespace panoscope::evalx
