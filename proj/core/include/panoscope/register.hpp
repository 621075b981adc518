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
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "panoscope/homography.hpp"
#include "panoscope/raster.hpp"

namespace panoscope::reg {

inline constexpr int kDescriptorSide = 11;
inline constexpr int kDescriptorSize = kDescriptorSide * kDescriptorSide;

struct Keypoint {
  PixelCoord pos;
  double response = 0.0;
  /// Mean-subtracted, unit-L2 intensity patch centred on pos.
  std::vector<double> descriptor;
};

struct Match {
  PixelCoord src;
  PixelCoord dst;
  int patch_id = -1;
  bool valid = true;
};

struct MatchSet {
  std::vector<Match> pairs;

  std::size_t size() const { return pairs.size(); }
  std::size_t valid_count() const;
};

struct HarrisOptions {
  double k = 0.04;
  double window_sigma = 1.5;
  int nms_radius = 5;
  /// Responses below this fraction of the strongest one are ignored.
  double relative_threshold = 1e-6;
  /// Gaussian sigma applied before corners and descriptors are computed.
  double presmooth = 0.0;
  /// Half-width of the gradient-orthogonality refinement window; 0 keeps the
  /// parabolic peak of the response. The response peak sits inside convex
  /// corners by about half the window sigma, the refinement does not.
  int refine_radius = 4;
};

/// Harris corners with non-maximum suppression, strongest first.
std::vector<Keypoint> detect_keypoints(const Raster& img, int max_n, const HarrisOptions& opts = {});

/// Mutual nearest neighbours by descriptor similarity, kept when the best
/// descriptor distance is at most ratio times the second best.
MatchSet match_descriptors(std::span<const Keypoint> a, std::span<const Keypoint> b,
                           double ratio = 0.8);

struct RansacOptions {
  double inlier_threshold = 2.0;
  int iterations = 500;
  std::uint64_t seed = 7;
};

/// Hartley-normalized DLT through all given pairs (no outlier rejection).
/// Throws DegenerateConfiguration for fewer than 4 pairs or a rank-deficient system.
Homography fit_homography_dlt(std::span<const PixelCoord> src, std::span<const PixelCoord> dst);

/// RANSAC over minimal DLT samples, then a refit on the inliers. Only valid
/// pairs are used.
Homography fit_homography(const MatchSet& matches, const RansacOptions& opts = {});

inline constexpr int kHistogramBins = 32;
inline constexpr double kHistogramEpsilon = 1e-6;

/// Symmetric KL divergence 0.5 (KL(p||q) + KL(q||p)) of two distributions in nats.
double symmetric_kl(std::span<const double> p, std::span<const double> q);

/// 32-bin intensity histogram, additively smoothed by epsilon and renormalized.
std::vector<double> smoothed_histogram(std::span<const double> values);

/// Symmetric KL of the smoothed histograms of two equally sized sample sets.
double kl_patch_similarity(std::span<const double> a, std::span<const double> b);
double kl_patch_similarity(const Raster& a, const Raster& b);

struct PatchRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(PixelCoord p) const {
    return p.x >= x && p.y >= y && p.x < x + w && p.y < y + h;
  }
  friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

struct PatchNode {
  int id = 0;
  int depth = 0;
  PatchRect rect;
  std::optional<Homography> h;
  std::vector<PatchNode> children;
  bool accepted = false;
  std::size_t match_count = 0;
};

struct HpftOptions {
  int root_size = 64;
  int min_size = 16;
  double median_tolerance = 1.5;
  double kl_threshold = 0.25;
  /// Per-match symmetric transfer error above which a match disagrees with its patch.
  double inlier_tolerance = 2.0;
  /// Patches with fewer valid matches reuse the parent homography.
  int min_fit_matches = 8;
  /// Fraction of a patch's matches that must agree with its homography.
  double min_consistent_fraction = 0.5;
  RansacOptions ransac;
};

struct HpftResult {
  MatchSet matches;
  std::vector<PatchNode> roots;
};

/// Homographic patch subdivision: every root block is tested against the
/// homographic hypothesis and split into quadrants until it holds or the
/// minimum size is reached.
HpftResult hpft_refine(const Raster& img_a, const Raster& img_b, const MatchSet& init,
                       const HpftOptions& opts = {});

/// One line per match: src_x src_y dst_x dst_y valid
void write_matches(std::ostream& out, const MatchSet& matches);
MatchSet read_matches(std::istream& in);

/// One line per node, depth first: patch id depth x y w h accepted match_count
void write_patch_tree(std::ostream& out, std::span<const PatchNode> roots);

}  // namespace panoscope::reg
