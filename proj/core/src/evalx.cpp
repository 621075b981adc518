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

#include "panoscope/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "panoscope/error.hpp"

namespace panoscope::evalx {

namespace {

std::optional<double> sample_through(const Raster& gray, const fusion::SimTransform4& t, PixelCoord r) {
  const auto p = t.apply_inverse(r);
  if (!p) return std::nullopt;
  return sample_bilinear(gray, *p);
}

}  // namespace

double texture_metric_error(const fusion::Canvas& canvas, std::span<const Raster> frames,
                            std::span<const fusion::SimTransform4> transforms) {
  if (frames.size() != transforms.size()) {
    throw Error(ErrorKind::InvalidArgument, "one transform per frame required");
  }
  std::vector<Raster> gray;
  for (const auto& f : frames) gray.push_back(f.channels() == 1 ? f : to_gray(f));

  struct Taps {
    double c = 0.0;
    std::optional<double> n[4];  // +x, -x, +y, -y
  };
  std::vector<Taps> taps;
  double sum = 0.0;
  std::size_t count = 0;
  for (int v = 0; v < canvas.grid.height; ++v) {
    for (int u = 0; u < canvas.grid.width; ++u) {
      if (!canvas.is_seam(u, v)) continue;
      const PixelCoord q = canvas.grid.position(u, v);
      taps.clear();
      for (int k : canvas.contributors_at(u, v)) {
        const auto c = sample_through(gray[k], transforms[k], q);
        if (!c) continue;
        Taps t;
        t.c = *c;
        t.n[0] = sample_through(gray[k], transforms[k], {q.x + 1, q.y});
        t.n[1] = sample_through(gray[k], transforms[k], {q.x - 1, q.y});
        t.n[2] = sample_through(gray[k], transforms[k], {q.x, q.y + 1});
        t.n[3] = sample_through(gray[k], transforms[k], {q.x, q.y - 1});
        taps.push_back(t);
      }
      if (taps.size() < 2) continue;
      // Seams sit on frame borders, so every contributor differentiates with
      // the same stencil: central where all frames allow it, else one-sided.
      bool all[4];
      for (int d = 0; d < 4; ++d) {
        all[d] = std::all_of(taps.begin(), taps.end(), [d](const Taps& t) { return t.n[d].has_value(); });
      }
      auto axis = [&](const Taps& t, int hi, int lo) {
        if (all[hi] && all[lo]) return 0.5 * (*t.n[hi] - *t.n[lo]);
        if (all[hi]) return *t.n[hi] - t.c;
        if (all[lo]) return t.c - *t.n[lo];
        return 0.0;
      };
      double i_lo = 1e300, i_hi = -1e300, g_lo = 1e300, g_hi = -1e300;
      for (const auto& t : taps) {
        const double g = std::hypot(axis(t, 0, 1), axis(t, 2, 3));
        i_lo = std::min(i_lo, t.c);
        i_hi = std::max(i_hi, t.c);
        g_lo = std::min(g_lo, g);
        g_hi = std::max(g_hi, g);
      }
      sum += 0.5 * (i_hi - i_lo) / 255.0 + 0.5 * (g_hi - g_lo) / 255.0;
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::NoSeams, "mosaic has no seam pixels");
  return std::clamp(sum / static_cast<double>(count), 0.0, 1.0);
}

double fb_error(const reg::Match& m, const Homography& forward, const Homography& backward) {
  const PixelCoord back = backward.apply(forward.apply(m.src));
  return std::hypot(back.x - m.src.x, back.y - m.src.y);
}

std::vector<std::size_t> fb_curve(std::span<const reg::Match> matches, const Homography& forward,
                                  const Homography& backward, std::span<const double> thresholds) {
  std::vector<double> errors;
  errors.reserve(matches.size());
  for (const auto& m : matches) errors.push_back(fb_error(m, forward, backward));
  std::vector<std::size_t> counts;
  counts.reserve(thresholds.size());
  for (double t : thresholds) {
    counts.push_back(static_cast<std::size_t>(
        std::count_if(errors.begin(), errors.end(), [t](double e) { return e < t; })));
  }
  return counts;
}

namespace {

struct Tally {
  double gts = 0.0;
  double dets = 0.0;
  double matched = 0.0;
  double images = 0.0;

  void write(std::map<std::string, double>& out) const {
    out["images"] = images;
    out["ground_truths"] = gts;
    out["detections"] = dets;
    out["matched"] = matched;
    out["recall"] = gts > 0.0 ? matched / gts : 1.0;
    out["accuracy"] = dets > 0.0 ? matched / dets : 1.0;
  }
};

std::size_t match_image(const std::vector<detect::Detection>& dets, const std::vector<detect::Box>& gts) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<std::uint8_t> used(gts.size(), 0);
  std::size_t matched = 0;
  for (std::size_t d : order) {
    int best = -1;
    double best_iou = 0.5;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = detect::iou(dets[d].box, gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[best] = 1;
      ++matched;
    }
  }
  return matched;
}

}  // namespace

EvalReport detection_report(std::span<const std::vector<detect::Detection>> detections,
                            std::span<const std::vector<detect::Box>> ground_truths,
                            std::span<const std::string> labels) {
  if (detections.size() != ground_truths.size() || (!labels.empty() && labels.size() != detections.size())) {
    throw Error(ErrorKind::InvalidArgument, "detections, ground truths and labels must align per image");
  }
  Tally total;
  std::map<std::string, Tally> by_region;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const double m = static_cast<double>(match_image(detections[i], ground_truths[i]));
    for (Tally* t : {&total, labels.empty() ? nullptr : &by_region[labels[i]]}) {
      if (!t) continue;
      t->images += 1.0;
      t->gts += static_cast<double>(ground_truths[i].size());
      t->dets += static_cast<double>(detections[i].size());
      t->matched += m;
    }
  }
  EvalReport report;
  total.write(report.metrics);
  for (const auto& [name, t] : by_region) t.write(report.regions[name]);
  return report;
}

std::string format_percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", std::round(rate * 1000.0) / 10.0);
  return buf;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  if (!regions.empty()) {
    j["regions"] = nlohmann::ordered_json::object();
    for (const auto& [name, m] : regions) {
      for (const auto& [k, v] : m) j["regions"][name][k] = v;
    }
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::size_t width = 6;
  for (const auto& [k, v] : metrics) width = std::max(width, k.size());
  for (const auto& [name, m] : regions) {
    for (const auto& [k, v] : m) width = std::max(width, name.size() + 1 + k.size());
  }
  std::ostringstream out;
  auto row = [&](const std::string& k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    out << k << std::string(width + 2 - k.size(), ' ') << buf << '\n';
  };
  out << "metric" << std::string(width - 4, ' ') << "value\n";
  for (const auto& [k, v] : metrics) row(k, v);
  for (const auto& [name, m] : regions) {
    for (const auto& [k, v] : m) row(name + "." + k, v);
  }
  return out.str();
}

}  // namespace panoscope::evalx
