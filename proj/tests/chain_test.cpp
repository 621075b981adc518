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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "panoscope/chain.hpp"
#include "panoscope/error.hpp"
#include "panoscope/random.hpp"

namespace panoscope::chain {
namespace {

// Frame k -> reference plane.
Homography absolute(int k, int n) {
  const double th = 2.0 * std::numbers::pi * k / n;
  const double a = 0.02 * std::sin(th);
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 30.0 * std::cos(th),
       std::sin(a), std::cos(a), 20.0 * std::sin(th),
       2e-5 * std::cos(th), 1e-5 * std::sin(th), 1.0;
  return Homography(m);
}

struct Scenario {
  TransformChain chain;
  /// outlier[link][match]
  std::vector<std::vector<bool>> outlier;
};

Scenario closed_chain(int n, int inliers, double outlier_fraction, std::uint64_t seed, double noise_px = 0.0) {
  Scenario s;
  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const Homography link = absolute((k + 1) % n, n).inverse().after(absolute(k, n));
    ChainLink l{link, {}};
    std::vector<bool> flags;
    const int n_out = static_cast<int>(std::lround(outlier_fraction * inliers / (1.0 - outlier_fraction)));
    for (int i = 0; i < inliers + n_out; ++i) {
      const PixelCoord src{rng.uniform(0, 320), rng.uniform(0, 240)};
      if (i < inliers) {
        const PixelCoord d = link.apply(src);
        l.matches.pairs.push_back({src, {d.x + noise_px * rng.normal(), d.y + noise_px * rng.normal()}});
        flags.push_back(false);
      } else {
        const PixelCoord d = link.apply(src);
        // Displaced by 4 to 40 px in a random direction.
        const double r = rng.uniform(4, 40), phi = rng.uniform(0, 2 * std::numbers::pi);
        l.matches.pairs.push_back({src, {d.x + r * std::cos(phi), d.y + r * std::sin(phi)}});
        flags.push_back(true);
      }
    }
    s.chain.links.push_back(std::move(l));
    s.outlier.push_back(std::move(flags));
  }
  return s;
}

double median_error(const ChainLink& link) {
  std::vector<double> e;
  const Homography inv = link.h.inverse();
  for (const auto& m : link.matches.pairs) {
    if (m.valid) e.push_back(symmetric_transfer_error(link.h, inv, m.src, m.dst));
  }
  std::sort(e.begin(), e.end());
  const std::size_t n = e.size();
  return n % 2 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
}

TEST(LoopResidual, IdentityLinks) {
  TransformChain c;
  c.links.resize(5);
  EXPECT_EQ(loop_residual(c), 0.0);
}

TEST(LoopResidual, ExactClosedPath) {
  EXPECT_LT(loop_residual(closed_chain(8, 10, 0.0, 1).chain), 1e-9);
}

TEST(LoopResidual, PerturbedLinkMatchesDirectComposition) {
  Scenario s = closed_chain(8, 10, 0.0, 2);
  const int j = 3;
  s.chain.links[j].h = Homography::translation(5, 0).after(s.chain.links[j].h);
  Eigen::Matrix3d acc = Eigen::Matrix3d::Identity();
  for (const auto& l : s.chain.links) acc = l.h.matrix() * acc;
  acc /= acc(2, 2);
  const double oracle = (acc - Eigen::Matrix3d::Identity()).norm();
  EXPECT_GT(oracle, 1.0);
  EXPECT_NEAR(loop_residual(s.chain), oracle, 1e-9);
}

TEST(LoopResidual, SingularLinkThrows) {
  TransformChain c;
  c.links.resize(3);
  c.links[1].h = Homography(Eigen::Matrix3d::Zero());
  try {
    loop_residual(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonInvertibleLink);
  }
}

TEST(ChainFilter, NoiselessChainUntouched) {
  const Scenario s = closed_chain(8, 20, 0.0, 3);
  const auto r = filter_matches_closed_chain(s.chain);
  EXPECT_EQ(r.removed, 0u);
  ASSERT_EQ(r.residual_trace.size(), 1u);
  EXPECT_LE(r.residual_trace[0], ChainFilterOptions{}.tau_loop);
  for (const auto& l : r.chain.links) EXPECT_EQ(l.matches.valid_count(), l.matches.size());
}

TEST(ChainFilter, RejectsInjectedOutliers) {
  const Scenario s = closed_chain(8, 42, 0.3, 4);
  const auto r = filter_matches_closed_chain(s.chain);
  std::size_t out_total = 0, out_caught = 0, in_total = 0, in_lost = 0;
  for (std::size_t k = 0; k < s.outlier.size(); ++k) {
    for (std::size_t i = 0; i < s.outlier[k].size(); ++i) {
      const bool invalid = !r.chain.links[k].matches.pairs[i].valid;
      if (s.outlier[k][i]) {
        ++out_total;
        out_caught += invalid;
      } else {
        ++in_total;
        in_lost += invalid;
      }
    }
  }
  EXPECT_GE(out_caught, static_cast<std::size_t>(std::ceil(0.9 * out_total)));
  EXPECT_LE(in_lost, in_total / 20);
  EXPECT_LE(r.residual_trace.back(), ChainFilterOptions{}.tau_loop);
}

TEST(ChainFilter, TraceStrictlyDecreases) {
  // Localization noise keeps the consensus refits slightly off, so the loop
  // stays open and the greedy stage has work to do.
  const auto r = filter_matches_closed_chain(closed_chain(5, 30, 0.25, 5, 0.6).chain);
  ASSERT_GT(r.residual_trace.size(), 1u);
  EXPECT_EQ(r.residual_trace.size(), r.removed + 1);
  EXPECT_GT(r.rejected_by_refit, 0u);
  for (std::size_t i = 1; i < r.residual_trace.size(); ++i) {
    EXPECT_LT(r.residual_trace[i], r.residual_trace[i - 1]);
  }
}

TEST(ChainFilter, MedianTransferErrorDoesNotGrow) {
  Scenario s = closed_chain(6, 30, 0.3, 6);
  for (auto& l : s.chain.links) l.h = refit_link(l);
  const auto r = filter_matches_closed_chain(s.chain);
  for (std::size_t k = 0; k < s.chain.links.size(); ++k) {
    EXPECT_LE(median_error(r.chain.links[k]), median_error(s.chain.links[k]) + 1e-12);
  }
}

TEST(ChainFilter, Idempotent) {
  const auto once = filter_matches_closed_chain(closed_chain(6, 30, 0.3, 7).chain);
  ASSERT_LE(once.residual_trace.back(), ChainFilterOptions{}.tau_loop);
  const auto twice = filter_matches_closed_chain(once.chain);
  EXPECT_EQ(twice.removed, 0u);
  for (std::size_t k = 0; k < once.chain.links.size(); ++k) {
    for (std::size_t i = 0; i < once.chain.links[k].matches.size(); ++i) {
      EXPECT_EQ(twice.chain.links[k].matches.pairs[i].valid, once.chain.links[k].matches.pairs[i].valid);
    }
  }
}

TEST(ChainFilter, TooFewMatches) {
  Scenario s = closed_chain(4, 10, 0.0, 8);
  s.chain.links[2].matches.pairs.resize(7);
  try {
    filter_matches_closed_chain(s.chain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientMatches);
  }
}

TEST(ChainFilter, HardStopAtMinimumMatches) {
  // Every match is inconsistent: the filter must stop with 8 left per link.
  Scenario s = closed_chain(4, 10, 0.0, 9);
  Rng rng(1);
  for (auto& l : s.chain.links)
    for (auto& m : l.matches.pairs) m.dst = {m.dst.x + rng.uniform(-30, 30), m.dst.y + rng.uniform(-30, 30)};
  const auto r = filter_matches_closed_chain(s.chain);
  for (const auto& l : r.chain.links) EXPECT_GE(l.matches.valid_count(), 8u);
}

}  // namespace
}  // namespace panoscope::chain
