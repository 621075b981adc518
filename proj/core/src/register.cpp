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

#include "panoscope/register.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "panoscope/error.hpp"
#include "panoscope/random.hpp"

namespace panoscope::reg {

std::size_t MatchSet::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const Match& m) { return m.valid; }));
}

namespace {

Raster as_gray(const Raster& img) { return img.channels() == 1 ? img : to_gray(img); }

Raster harris_response(const Raster& gray, const HarrisOptions& opts) {
  const int w = gray.width(), h = gray.height();
  auto px = [&](int x, int y) {
    return gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  Raster ixx(w, h), iyy(w, h), ixy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) -
                         px(x - 1, y - 1) - 2 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) -
                         px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
      ixx.at(x, y) = gx * gx;
      iyy.at(x, y) = gy * gy;
      ixy.at(x, y) = gx * gy;
    }
  }
  ixx = gaussian_smooth(ixx, opts.window_sigma);
  iyy = gaussian_smooth(iyy, opts.window_sigma);
  ixy = gaussian_smooth(ixy, opts.window_sigma);
  Raster response(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = ixx.at(x, y), b = iyy.at(x, y), c = ixy.at(x, y);
      response.at(x, y) = a * b - c * c - opts.k * (a + b) * (a + b);
    }
  }
  return response;
}

double parabolic_offset(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

// The corner q is where every nearby gradient g_i is orthogonal to p_i - q:
// solve sum(w g g^T) q = sum(w g g^T p) a few times, recentering the window.
std::optional<PixelCoord> refine_corner(const Raster& gray, PixelCoord start, int radius) {
  const int w = gray.width(), h = gray.height();
  const double s2 = 2.0 * (0.5 * radius) * (0.5 * radius);
  PixelCoord q = start;
  for (int iter = 0; iter < 10; ++iter) {
    const int cx = static_cast<int>(std::lround(q.x)), cy = static_cast<int>(std::lround(q.y));
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (int y = cy - radius; y <= cy + radius; ++y) {
      for (int x = cx - radius; x <= cx + radius; ++x) {
        if (x < 1 || y < 1 || x >= w - 1 || y >= h - 1) continue;
        const double gx = 0.5 * (gray.at(x + 1, y) - gray.at(x - 1, y));
        const double gy = 0.5 * (gray.at(x, y + 1) - gray.at(x, y - 1));
        const double wt = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s2);
        const double xx = wt * gx * gx, xy = wt * gx * gy, yy = wt * gy * gy;
        a11 += xx;
        a12 += xy;
        a22 += yy;
        b1 += xx * x + xy * y;
        b2 += xy * x + yy * y;
      }
    }
    const double det = a11 * a22 - a12 * a12;
    if (!(det > 1e-9 * (a11 + a22) * (a11 + a22)) || det <= 0.0) return std::nullopt;
    const PixelCoord next{(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det};
    if (std::hypot(next.x - start.x, next.y - start.y) > radius) return std::nullopt;
    const double step = std::hypot(next.x - q.x, next.y - q.y);
    q = next;
    if (step < 1e-3) break;
  }
  return q;
}

std::vector<double> patch_descriptor(const Raster& gray, PixelCoord pos) {
  constexpr int half = kDescriptorSide / 2;
  std::vector<double> d;
  d.reserve(kDescriptorSize);
  for (int j = -half; j <= half; ++j) {
    for (int i = -half; i <= half; ++i) {
      const auto v = sample_bilinear(gray, {pos.x + i, pos.y + j});
      if (!v) return {};
      d.push_back(*v);
    }
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  double norm2 = 0.0;
  for (auto& v : d) {
    v -= mean;
    norm2 += v * v;
  }
  if (norm2 < 1e-6) return {};
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : d) v *= inv;
  return d;
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const Raster& img, int max_n, const HarrisOptions& opts) {
  if (max_n <= 0) return {};
  const Raster gray = gaussian_smooth(as_gray(img), opts.presmooth);
  const Raster r = harris_response(gray, opts);
  const int w = gray.width(), h = gray.height();
  const int margin = kDescriptorSide / 2 + 1;

  double r_max = 0.0;
  for (double v : r.data()) r_max = std::max(r_max, v);
  const double threshold = std::max(opts.relative_threshold * r_max, 1e-6);
  if (r_max <= threshold) return {};

  struct Candidate {
    int x, y;
    double response;
  };
  std::vector<Candidate> candidates;
  const int rad = opts.nms_radius;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double v = r.at(x, y);
      if (v <= threshold) continue;
      bool is_max = true;
      for (int dy = -rad; dy <= rad && is_max; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int qx = x + dx, qy = y + dy;
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          const double q = r.at(qx, qy);
          // Equal responses: the earlier pixel in raster order wins.
          if (q > v || (q == v && (qy < y || (qy == y && qx < x)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({x, y, v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.response > b.response; });

  std::vector<Keypoint> out;
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= max_n) break;
    const double ox = parabolic_offset(r.at(c.x - 1, c.y), c.response, r.at(c.x + 1, c.y));
    const double oy = parabolic_offset(r.at(c.x, c.y - 1), c.response, r.at(c.x, c.y + 1));
    Keypoint kp;
    kp.pos = {c.x + ox, c.y + oy};
    if (opts.refine_radius > 0) {
      if (const auto refined = refine_corner(gray, kp.pos, opts.refine_radius)) kp.pos = *refined;
    }
    kp.response = c.response;
    kp.descriptor = patch_descriptor(gray, kp.pos);
    if (kp.descriptor.empty()) continue;
    out.push_back(std::move(kp));
  }
  return out;
}

MatchSet match_descriptors(std::span<const Keypoint> a, std::span<const Keypoint> b, double ratio) {
  MatchSet out;
  if (a.empty() || b.empty()) return out;
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> sim(na * nb, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const auto& da = a[i].descriptor;
      const auto& db = b[j].descriptor;
      if (da.empty() || da.size() != db.size()) continue;
      sim[i * nb + j] = std::inner_product(da.begin(), da.end(), db.begin(), 0.0);
    }
  }
  std::vector<std::ptrdiff_t> best_for_b(nb, -1);
  for (std::size_t j = 0; j < nb; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < na; ++i) {
      if (sim[i * nb + j] > best) {
        best = sim[i * nb + j];
        best_for_b[j] = static_cast<std::ptrdiff_t>(i);
      }
    }
  }
  auto distance = [](double s) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * s)); };
  for (std::size_t i = 0; i < na; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t best_j = -1;
    for (std::size_t j = 0; j < nb; ++j) {
      const double s = sim[i * nb + j];
      if (s > best) {
        second = best;
        best = s;
        best_j = static_cast<std::ptrdiff_t>(j);
      } else if (s > second) {
        second = s;
      }
    }
    if (best_j < 0 || !std::isfinite(best)) continue;
    if (best_for_b[best_j] != static_cast<std::ptrdiff_t>(i)) continue;
    if (std::isfinite(second) && distance(best) > ratio * distance(second)) continue;
    out.pairs.push_back({a[i].pos, b[best_j].pos, -1, true});
  }
  return out;
}

namespace {

Eigen::Matrix3d hartley_transform(std::span<const PixelCoord> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  if (!(mean_dist > 1e-12)) {
    throw Error(ErrorKind::DegenerateConfiguration, "all points coincide");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

double triangle_area2(PixelCoord a, PixelCoord b, PixelCoord c) {
  return std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

bool sample_degenerate(const std::array<PixelCoord, 4>& p) {
  double extent = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) extent = std::max(extent, std::hypot(p[i].x - p[j].x, p[i].y - p[j].y));
  }
  const double tol = 1e-6 * extent * extent;
  if (!(extent > 0.0)) return true;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (triangle_area2(p[i], p[j], p[k]) <= tol) return true;
      }
    }
  }
  return false;
}

}  // namespace

Homography fit_homography_dlt(std::span<const PixelCoord> src, std::span<const PixelCoord> dst) {
  if (src.size() != dst.size() || src.size() < 4) {
    throw Error(ErrorKind::DegenerateConfiguration, "homography needs at least 4 pairs");
  }
  const Eigen::Matrix3d ts = hartley_transform(src);
  const Eigen::Matrix3d td = hartley_transform(dst);
  const std::size_t n = src.size();
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d d = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() >= 8 && sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorKind::DegenerateConfiguration, "rank-deficient homography system");
  }
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  const Eigen::Matrix3d h = td.inverse() * hn * ts;
  if (!h.allFinite()) throw Error(ErrorKind::DegenerateConfiguration, "non-finite homography");
  return Homography(h);
}

Homography fit_homography(const MatchSet& matches, const RansacOptions& opts) {
  std::vector<PixelCoord> src, dst;
  for (const auto& m : matches.pairs) {
    if (!m.valid) continue;
    src.push_back(m.src);
    dst.push_back(m.dst);
  }
  const std::size_t n = src.size();
  if (n < 4) throw Error(ErrorKind::DegenerateConfiguration, "homography needs at least 4 valid pairs");

  auto inliers_of = [&](const Homography& h, double* score) {
    std::vector<std::size_t> idx;
    const Homography hinv = h.inverse();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = symmetric_transfer_error(h, hinv, src[i], dst[i]);
      if (e < opts.inlier_threshold) idx.push_back(i);
      s += std::min(e, opts.inlier_threshold);
    }
    if (score) *score = s;
    return idx;
  };

  Rng rng(opts.seed);
  std::optional<Homography> best;
  std::size_t best_count = 0;
  double best_score = std::numeric_limits<double>::infinity();
  const int iterations = n == 4 ? 1 : opts.iterations;
  for (int it = 0; it < iterations; ++it) {
    std::array<std::size_t, 4> pick{};
    for (int k = 0; k < 4; ++k) {
      std::size_t cand;
      do {
        cand = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      } while (std::find(pick.begin(), pick.begin() + k, cand) != pick.begin() + k);
      pick[k] = n == 4 ? static_cast<std::size_t>(k) : cand;
    }
    std::array<PixelCoord, 4> s{}, d{};
    for (int k = 0; k < 4; ++k) {
      s[k] = src[pick[k]];
      d[k] = dst[pick[k]];
    }
    if (sample_degenerate(s) || sample_degenerate(d)) continue;
    Homography h;
    try {
      h = fit_homography_dlt(s, d);
    } catch (const Error&) {
      continue;
    }
    if (!h.invertible()) continue;
    double score = 0.0;
    const auto idx = inliers_of(h, &score);
    if (idx.size() > best_count || (idx.size() == best_count && score < best_score)) {
      best = h;
      best_count = idx.size();
      best_score = score;
    }
  }
  if (!best || best_count < 4) {
    throw Error(ErrorKind::DegenerateConfiguration, "no non-degenerate homography sample");
  }

  Homography h = *best;
  for (int round = 0; round < 2; ++round) {
    const auto idx = inliers_of(h, nullptr);
    if (idx.size() < 4) break;
    std::vector<PixelCoord> is, id;
    for (auto i : idx) {
      is.push_back(src[i]);
      id.push_back(dst[i]);
    }
    try {
      Homography refit = fit_homography_dlt(is, id);
      if (!refit.invertible()) break;
      h = refit;
    } catch (const Error&) {
      break;
    }
  }
  return h;
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorKind::InvalidArgument, "distribution sizes differ");
  auto term = [](double a, double b) {
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return std::numeric_limits<double>::infinity();
    return a * std::log(a / b);
  };
  double pq = 0.0, qp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pq += term(p[i], q[i]);
    qp += term(q[i], p[i]);
  }
  return 0.5 * (pq + qp);
}

std::vector<double> smoothed_histogram(std::span<const double> values) {
  std::vector<double> hist(kHistogramBins, 0.0);
  for (double v : values) {
    const int bin = std::clamp(static_cast<int>(std::floor(v / (256.0 / kHistogramBins))), 0,
                               kHistogramBins - 1);
    hist[bin] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  const double norm = 1.0 + kHistogramBins * kHistogramEpsilon;
  for (auto& h : hist) h = ((n > 0 ? h / n : 1.0 / kHistogramBins) + kHistogramEpsilon) / norm;
  return hist;
}

double kl_patch_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidArgument, "patch sizes differ");
  return symmetric_kl(smoothed_histogram(a), smoothed_histogram(b));
}

double kl_patch_similarity(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::InvalidArgument, "patch sizes differ");
  }
  const Raster ga = as_gray(a), gb = as_gray(b);
  return kl_patch_similarity(ga.data(), gb.data());
}

namespace {

class HpftRefiner {
 public:
  HpftRefiner(const Raster& a, const Raster& b, MatchSet& matches, const HpftOptions& opts)
      : a_(a), b_(b), matches_(matches), opts_(opts) {}

  void refine(PatchNode& node, const std::vector<std::size_t>& indices,
              const std::optional<Homography>& parent_h) {
    node.id = next_id_++;
    node.match_count = indices.size();
    if (indices.empty()) {
      // Nothing to verify.
      node.h = parent_h;
      node.accepted = true;
      return;
    }

    std::optional<Homography> h = parent_h;
    if (static_cast<int>(indices.size()) >= opts_.min_fit_matches) {
      MatchSet local;
      for (auto i : indices) local.pairs.push_back(matches_.pairs[i]);
      try {
        h = fit_homography(local, opts_.ransac);
      } catch (const Error&) {
        h = parent_h;
      }
    }
    node.h = h;

    std::vector<double> errors;
    if (h && h->invertible()) {
      const Homography hinv = h->inverse();
      for (auto i : indices) {
        const auto& m = matches_.pairs[i];
        errors.push_back(symmetric_transfer_error(*h, hinv, m.src, m.dst));
      }
      if (hypothesis_holds(node.rect, *h, errors) && !second_motion(indices, errors)) {
        node.accepted = true;
        for (std::size_t k = 0; k < indices.size(); ++k) {
          auto& m = matches_.pairs[indices[k]];
          m.patch_id = node.id;
          if (errors[k] > opts_.inlier_tolerance) m.valid = false;
        }
        return;
      }
    }

    const auto& r = node.rect;
    if (r.w >= 2 * opts_.min_size && r.h >= 2 * opts_.min_size) {
      const int w1 = r.w / 2, h1 = r.h / 2;
      const PatchRect quads[4] = {{r.x, r.y, w1, h1},
                                  {r.x + w1, r.y, r.w - w1, h1},
                                  {r.x, r.y + h1, w1, r.h - h1},
                                  {r.x + w1, r.y + h1, r.w - w1, r.h - h1}};
      for (const auto& q : quads) {
        PatchNode child;
        child.depth = node.depth + 1;
        child.rect = q;
        std::vector<std::size_t> sub;
        for (auto i : indices) {
          if (q.contains(matches_.pairs[i].src)) sub.push_back(i);
        }
        refine(child, sub, h ? h : parent_h);
        node.children.push_back(std::move(child));
      }
      return;
    }
    for (auto i : indices) {
      matches_.pairs[i].valid = false;
      matches_.pairs[i].patch_id = node.id;
    }
  }

 private:
  // Scattered outliers rarely agree on a homography; matches of a second
  // surface under a different motion do.
  bool second_motion(const std::vector<std::size_t>& indices, const std::vector<double>& errors) const {
    MatchSet rest;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (errors[k] > opts_.inlier_tolerance) rest.pairs.push_back(matches_.pairs[indices[k]]);
    }
    if (static_cast<int>(rest.size()) < opts_.min_fit_matches) return false;
    try {
      const Homography h2 = fit_homography(rest, opts_.ransac);
      if (!h2.invertible()) return false;
      const Homography h2inv = h2.inverse();
      int support = 0;
      for (const auto& m : rest.pairs) {
        support += symmetric_transfer_error(h2, h2inv, m.src, m.dst) <= opts_.inlier_tolerance;
      }
      return support >= opts_.min_fit_matches;
    } catch (const Error&) {
      return false;
    }
  }

  bool hypothesis_holds(const PatchRect& rect, const Homography& h, std::vector<double> errors) const {
    const std::size_t n = errors.size();
    const auto consistent = std::count_if(errors.begin(), errors.end(),
                                          [&](double e) { return e <= opts_.inlier_tolerance; });
    if (static_cast<double>(consistent) < opts_.min_consistent_fraction * n) return false;
    std::sort(errors.begin(), errors.end());
    const double median =
        n % 2 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
    if (!(median < opts_.median_tolerance)) return false;
    return warped_divergence(rect, h) < opts_.kl_threshold;
  }

  double warped_divergence(const PatchRect& rect, const Homography& h) const {
    std::vector<double> va, vb;
    for (int y = rect.y; y < rect.y + rect.h; ++y) {
      for (int x = rect.x; x < rect.x + rect.w; ++x) {
        const auto sb = sample_bilinear(b_, h.apply({static_cast<double>(x), static_cast<double>(y)}));
        if (!sb) continue;
        va.push_back(a_.at(x, y));
        vb.push_back(*sb);
      }
    }
    // Too little overlap to judge the content.
    if (va.size() < 16) return 0.0;
    return kl_patch_similarity(va, vb);
  }

  const Raster& a_;
  const Raster& b_;
  MatchSet& matches_;
  const HpftOptions& opts_;
  int next_id_ = 0;
};

}  // namespace

HpftResult hpft_refine(const Raster& img_a, const Raster& img_b, const MatchSet& init,
                       const HpftOptions& opts) {
  HpftResult result;
  result.matches = init;
  const Raster ga = as_gray(img_a), gb = as_gray(img_b);

  std::optional<Homography> global;
  try {
    global = fit_homography(init, opts.ransac);
  } catch (const Error&) {
  }

  HpftRefiner refiner(ga, gb, result.matches, opts);
  const int root = std::max(opts.root_size, 1);
  for (int y0 = 0; y0 < ga.height(); y0 += root) {
    for (int x0 = 0; x0 < ga.width(); x0 += root) {
      PatchNode node;
      node.rect = {x0, y0, std::min(root, ga.width() - x0), std::min(root, ga.height() - y0)};
      std::vector<std::size_t> indices;
      for (std::size_t i = 0; i < result.matches.pairs.size(); ++i) {
        const auto& m = result.matches.pairs[i];
        if (m.valid && node.rect.contains(m.src)) indices.push_back(i);
      }
      if (indices.empty()) continue;
      refiner.refine(node, indices, global);
      result.roots.push_back(std::move(node));
    }
  }
  return result;
}

void write_matches(std::ostream& out, const MatchSet& matches) {
  const auto old = out.precision(10);
  for (const auto& m : matches.pairs) {
    out << m.src.x << ' ' << m.src.y << ' ' << m.dst.x << ' ' << m.dst.y << ' '
        << (m.valid ? 1 : 0) << '\n';
  }
  out.precision(old);
}

MatchSet read_matches(std::istream& in) {
  MatchSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Match m;
    int valid = 1;
    if (!(ss >> m.src.x >> m.src.y >> m.dst.x >> m.dst.y >> valid)) {
      throw Error(ErrorKind::Decode, "malformed match record: " + line);
    }
    m.valid = valid != 0;
    out.pairs.push_back(m);
  }
  return out;
}

namespace {
void write_node(std::ostream& out, const PatchNode& n) {
  out << "patch " << n.id << ' ' << n.depth << ' ' << n.rect.x << ' ' << n.rect.y << ' '
      << n.rect.w << ' ' << n.rect.h << ' ' << (n.accepted ? 1 : 0) << ' ' << n.match_count
      << '\n';
  for (const auto& c : n.children) write_node(out, c);
}
}  // namespace

void write_patch_tree(std::ostream& out, std::span<const PatchNode> roots) {
  for (const auto& r : roots) write_node(out, r);
}

}  // namespace panoscope::reg
