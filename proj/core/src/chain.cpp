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

#include "panoscope/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "panoscope/error.hpp"

namespace panoscope::chain {

double loop_residual(const TransformChain& chain) {
  if (chain.links.empty()) throw Error(ErrorKind::EmptyInput, "empty transform chain");
  Eigen::Matrix3d acc = Eigen::Matrix3d::Identity();
  for (std::size_t k = 0; k < chain.links.size(); ++k) {
    const auto& h = chain.links[k].h;
    if (!h.invertible()) {
      throw Error(ErrorKind::NonInvertibleLink, "link " + std::to_string(k) + " is singular");
    }
    acc = h.matrix() * acc;
  }
  if (std::abs(acc(2, 2)) < 1e-12 * acc.norm()) {
    throw Error(ErrorKind::NonInvertibleLink, "loop composition cannot be normalized");
  }
  return (acc / acc(2, 2) - Eigen::Matrix3d::Identity()).norm();
}

Homography refit_link(const ChainLink& link, const reg::RansacOptions& ransac) {
  return reg::fit_homography(link.matches, ransac);
}

namespace {

struct Candidate {
  std::size_t link;
  std::size_t match;
};

// Links ordered by their worst symmetric transfer error; within a link,
// matches from worst to best.
std::vector<Candidate> removal_order(const TransformChain& chain) {
  struct LinkErrors {
    std::size_t link;
    double worst;
    std::vector<std::pair<double, std::size_t>> errors;
  };
  std::vector<LinkErrors> per_link;
  for (std::size_t k = 0; k < chain.links.size(); ++k) {
    const auto& link = chain.links[k];
    const Homography hinv = link.h.inverse();
    LinkErrors le{k, -1.0, {}};
    for (std::size_t i = 0; i < link.matches.pairs.size(); ++i) {
      const auto& m = link.matches.pairs[i];
      if (!m.valid) continue;
      const double e = symmetric_transfer_error(link.h, hinv, m.src, m.dst);
      le.errors.emplace_back(e, i);
      le.worst = std::max(le.worst, e);
    }
    std::stable_sort(le.errors.begin(), le.errors.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    per_link.push_back(std::move(le));
  }
  std::stable_sort(per_link.begin(), per_link.end(),
                   [](const LinkErrors& a, const LinkErrors& b) { return a.worst > b.worst; });
  std::vector<Candidate> order;
  for (const auto& le : per_link) {
    for (const auto& [e, i] : le.errors) order.push_back({le.link, i});
  }
  return order;
}

}  // namespace

ChainFilterResult filter_matches_closed_chain(TransformChain chain, const ChainFilterOptions& opts) {
  if (chain.links.empty()) throw Error(ErrorKind::EmptyInput, "empty transform chain");
  for (std::size_t k = 0; k < chain.links.size(); ++k) {
    if (chain.links[k].matches.valid_count() < opts.min_matches) {
      throw Error(ErrorKind::InsufficientMatches,
                  "link " + std::to_string(k) + " has " +
                      std::to_string(chain.links[k].matches.valid_count()) + " valid matches (need " +
                      std::to_string(opts.min_matches) + ")");
    }
  }
  ChainFilterResult result;
  // A least-squares refit lets gross outliers of different links cancel in
  // the loop product, which strands the greedy stage; the consensus refit
  // keeps each link honest on its own.
  for (auto& link : chain.links) {
    link.h = refit_link(link, opts.ransac);
    const Homography inv = link.h.inverse();
    std::vector<std::pair<double, std::size_t>> outside;
    for (std::size_t i = 0; i < link.matches.pairs.size(); ++i) {
      const auto& m = link.matches.pairs[i];
      if (!m.valid) continue;
      const double e = symmetric_transfer_error(link.h, inv, m.src, m.dst);
      if (e > opts.ransac.inlier_threshold) outside.emplace_back(e, i);
    }
    std::stable_sort(outside.begin(), outside.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [e, i] : outside) {
      if (link.matches.valid_count() <= opts.min_matches) break;
      link.matches.pairs[i].valid = false;
      ++result.rejected_by_refit;
    }
  }
  double residual = loop_residual(chain);
  result.residual_trace.push_back(residual);

  while (residual > opts.tau_loop && static_cast<int>(result.removed) < opts.max_removals) {
    bool improved = false;
    bool hard_stop = false;
    for (const auto& cand : removal_order(chain)) {
      auto& link = chain.links[cand.link];
      if (link.matches.valid_count() <= opts.min_matches) {
        hard_stop = true;
        break;
      }
      const Homography saved = link.h;
      link.matches.pairs[cand.match].valid = false;
      double trial = std::numeric_limits<double>::infinity();
      try {
        link.h = refit_link(link, opts.ransac);
        trial = loop_residual(chain);
      } catch (const Error&) {
      }
      if (trial < residual) {
        residual = trial;
        result.residual_trace.push_back(residual);
        ++result.removed;
        improved = true;
        break;
      }
      link.matches.pairs[cand.match].valid = true;
      link.h = saved;
    }
    if (hard_stop || !improved) break;
  }
  result.chain = std::move(chain);
  return result;
}

}  // namespace panoscope::chain
