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

#include <vector>

#include "panoscope/homography.hpp"
#include "panoscope/register.hpp"

namespace panoscope::chain {

/// Link k maps frame k coordinates into frame k+1; the last link closes the
/// loop back into frame 0.
struct ChainLink {
  Homography h;
  reg::MatchSet matches;
};

struct TransformChain {
  std::vector<ChainLink> links;
};

/// Frobenius distance between the normalized loop composition and identity.
/// Throws NonInvertibleLink when a link (or the composition) is singular.
double loop_residual(const TransformChain& chain);

struct ChainFilterOptions {
  double tau_loop = 0.05;
  std::size_t min_matches = 8;
  int max_removals = 100000;
  /// Consensus fit used for every refit; its inlier threshold also decides
  /// which matches the initial refit flags.
  reg::RansacOptions ransac;
};

struct ChainFilterResult {
  TransformChain chain;
  /// Residual after the initial refit followed by one entry per accepted removal.
  std::vector<double> residual_trace;
  /// Greedy removals accepted after the initial refit.
  std::size_t removed = 0;
  /// Matches flagged because the initial consensus refit left them out.
  std::size_t rejected_by_refit = 0;
};

/// Consensus (RANSAC) refit of a link from its valid matches.
Homography refit_link(const ChainLink& link, const reg::RansacOptions& ransac = {});

/// Loop-consistency filter. Every link is refit by consensus and the matches
/// it leaves out are flagged (never below min_matches); then the worst match
/// of the worst link is invalidated repeatedly, keeping a removal only when
/// the loop residual drops, until the residual is at most tau_loop.
/// Throws InsufficientMatches when a link starts with too few valid matches.
ChainFilterResult filter_matches_closed_chain(TransformChain chain,
                                              const ChainFilterOptions& opts = {});

}  // namespace panoscope::chain
