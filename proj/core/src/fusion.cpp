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

#include "panoscope/fusion.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "panoscope/error.hpp"

namespace panoscope::fusion {

PixelCoord SimTransform4::apply(PixelCoord p) const {
  return {p.x + r1 * p.x - r2 * p.y + t1, p.y + r2 * p.x + r1 * p.y + t2};
}

std::optional<PixelCoord> SimTransform4::apply_inverse(PixelCoord q) const {
  const double a = 1.0 + r1, b = r2;
  const double det = a * a + b * b;
  if (!(det > 1e-12)) return std::nullopt;
  const double dx = q.x - t1, dy = q.y - t2;
  return PixelCoord{(a * dx + b * dy) / det, (-b * dx + a * dy) / det};
}

bool SimTransform4::finite() const {
  return std::isfinite(r1) && std::isfinite(r2) && std::isfinite(t1) && std::isfinite(t2);
}

PixelCoord apply_sim4(const SimTransform4& t, PixelCoord p) { return t.apply(p); }

SimTransform4 fit_sim4(const Homography& h, int width, int height) {
  // q = [[a, -b], [b, a]] p + t, linear in (a, b, tx, ty).
  Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
  Eigen::Vector4d atb = Eigen::Vector4d::Zero();
  constexpr int kGrid = 8;
  for (int j = 0; j <= kGrid; ++j) {
    for (int i = 0; i <= kGrid; ++i) {
      const PixelCoord p{(width - 1) * static_cast<double>(i) / kGrid,
                         (height - 1) * static_cast<double>(j) / kGrid};
      const PixelCoord q = h.apply(p);
      if (!q.finite()) continue;
      const Eigen::Vector4d rx(p.x, -p.y, 1, 0);
      const Eigen::Vector4d ry(p.y, p.x, 0, 1);
      ata += rx * rx.transpose() + ry * ry.transpose();
      atb += rx * q.x + ry * q.y;
    }
  }
  const Eigen::Vector4d s = ata.ldlt().solve(atb);
  return {s(0) - 1.0, s(1), s(2), s(3)};
}

CanvasGrid canvas_bounds(std::span<const Raster> frames, std::span<const SimTransform4> transforms) {
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const double w = frames[k].width() - 1, h = frames[k].height() - 1;
    for (const PixelCoord corner : {PixelCoord{0, 0}, PixelCoord{w, 0}, PixelCoord{0, h}, PixelCoord{w, h}}) {
      const PixelCoord q = transforms[k].apply(corner);
      min_x = std::min(min_x, q.x);
      min_y = std::min(min_y, q.y);
      max_x = std::max(max_x, q.x);
      max_y = std::max(max_y, q.y);
    }
  }
  CanvasGrid g;
  // Snap bounds that are integral up to rounding noise.
  auto snap = [](double v) { return std::abs(v - std::round(v)) < 1e-9 ? std::round(v) : v; };
  g.origin_x = std::floor(snap(min_x));
  g.origin_y = std::floor(snap(min_y));
  g.width = static_cast<int>(std::ceil(snap(max_x)) - g.origin_x) + 1;
  g.height = static_cast<int>(std::ceil(snap(max_y)) - g.origin_y) + 1;
  return g;
}

namespace {

bool inside_with_margin(const Raster& f, PixelCoord p, double margin) {
  return p.finite() && p.x >= margin && p.y >= margin && p.x <= f.width() - 1 - margin &&
         p.y <= f.height() - 1 - margin;
}

double border_distance(const Raster& f, PixelCoord p) {
  return std::min({p.x, p.y, f.width() - 1 - p.x, f.height() - 1 - p.y});
}

}  // namespace

std::vector<int> covering_frames(std::span<const Raster> frames,
                                 std::span<const SimTransform4> transforms, PixelCoord q,
                                 double margin) {
  std::vector<int> out;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto p = transforms[k].apply_inverse(q);
    if (p && inside_with_margin(frames[k], *p, margin)) out.push_back(static_cast<int>(k));
  }
  return out;
}

namespace {

// 1 where any pixel within guard (Chebyshev) reaches level.
Raster saturation_mask(const Raster& img, double level, int guard) {
  Raster out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.at(x, y) < level) continue;
      for (int dy = -guard; dy <= guard; ++dy) {
        for (int dx = -guard; dx <= guard; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < img.width() && yy < img.height()) out.at(xx, yy) = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace

FusionProblem make_problem(std::vector<Raster> frames, std::vector<SimTransform4> init_transforms,
                           double beta, const SeamOptions& opts) {
  if (frames.empty()) throw Error(ErrorKind::EmptyInput, "no frames to fuse");
  if (frames.size() != init_transforms.size()) {
    throw Error(ErrorKind::InvalidArgument, "one transform per frame required");
  }
  if (beta < 0.0) throw Error(ErrorKind::InvalidArgument, "beta must be non-negative");
  FusionProblem prob;
  for (auto& f : frames) prob.frames.push_back(f.channels() == 1 ? std::move(f) : to_gray(f));
  prob.init_transforms = std::move(init_transforms);
  prob.transforms = prob.init_transforms;
  prob.beta = beta;
  prob.grid = canvas_bounds(prob.frames, prob.transforms);

  std::vector<Raster> glare;
  if (opts.saturation_level <= 255.0) {
    for (const auto& f : prob.frames) glare.push_back(saturation_mask(f, opts.saturation_level, opts.saturation_guard));
  }
  auto near_glare = [&](int k, PixelCoord q) {
    if (glare.empty()) return false;
    const auto p = prob.transforms[k].apply_inverse(q);
    return !p || glare[k].at(static_cast<int>(std::lround(p->x)), static_cast<int>(std::lround(p->y))) != 0;
  };

  const int stride = std::max(opts.stride, 1);
  for (int v = 0; v < prob.grid.height; v += stride) {
    for (int u = 0; u < prob.grid.width; u += stride) {
      const PixelCoord q = prob.grid.position(u, v);
      const auto cover = covering_frames(prob.frames, prob.transforms, q, opts.margin);
      for (std::size_t a = 0; a < cover.size(); ++a) {
        for (std::size_t b = a + 1; b < cover.size(); ++b) {
          if (near_glare(cover[a], q) || near_glare(cover[b], q)) continue;
          SeamSample s{q, cover[a], cover[b], 1.0};
          if (opts.weight_mode == WeightMode::Feather) {
            const auto pa = *prob.transforms[s.frame_i].apply_inverse(q);
            const auto pb = *prob.transforms[s.frame_j].apply_inverse(q);
            const double d = std::min(border_distance(prob.frames[s.frame_i], pa),
                                      border_distance(prob.frames[s.frame_j], pb));
            s.weight = std::clamp(d / std::max(opts.feather_px, 1e-9), 0.0, 1.0);
          }
          prob.seams.push_back(s);
        }
      }
    }
  }
  if (opts.presmooth > 0.0) {
    for (auto& f : prob.frames) f = gaussian_smooth(f, opts.presmooth);
  }
  prob.canvas_values = average_canvas(prob.frames, prob.transforms, prob.grid);
  return prob;
}

namespace {

struct FrameSample {
  GradientSample g;
  PixelCoord p;
};

std::optional<FrameSample> sample_frame(const FusionProblem& prob, int k, PixelCoord q,
                                        const SimTransform4& t) {
  const auto p = t.apply_inverse(q);
  if (!p) return std::nullopt;
  const auto g = sample_bilinear_gradient(prob.frames[k], *p);
  if (!g) return std::nullopt;
  return FrameSample{*g, *p};
}

// d(sample)/d(r1, r2, t1, t2) for canvas point q = A p + t.
std::array<double, 4> sample_derivative(const SimTransform4& t, const FrameSample& s) {
  const double a = 1.0 + t.r1, b = t.r2;
  const double det = a * a + b * b;
  // A^{-1} = [[a, b], [-b, a]] / det
  auto ainv = [&](double x, double y) {
    return std::pair{(a * x + b * y) / det, (-b * x + a * y) / det};
  };
  const auto [p1x, p1y] = ainv(s.p.x, s.p.y);
  const auto [p2x, p2y] = ainv(-s.p.y, s.p.x);
  const auto [p3x, p3y] = ainv(1.0, 0.0);
  const auto [p4x, p4y] = ainv(0.0, 1.0);
  return {-(s.g.dx * p1x + s.g.dy * p1y), -(s.g.dx * p2x + s.g.dy * p2y),
          -(s.g.dx * p3x + s.g.dy * p3y), -(s.g.dx * p4x + s.g.dy * p4y)};
}

double deviation_norm2(const SimTransform4& t, const SimTransform4& init) {
  const auto a = t.params(), b = init.params();
  double s = 0.0;
  for (int m = 0; m < 4; ++m) s += (a[m] - b[m]) * (a[m] - b[m]);
  return s;
}

}  // namespace

double seam_error(const FusionProblem& prob, const SeamSample& s) {
  const auto si = sample_frame(prob, s.frame_i, s.canvas_pos, prob.transforms[s.frame_i]);
  const auto sj = sample_frame(prob, s.frame_j, s.canvas_pos, prob.transforms[s.frame_j]);
  if (!si || !sj) throw Error(ErrorKind::OutOfFrame, "seam sample falls outside a frame");
  return std::abs(si->g.value - sj->g.value);
}

std::optional<SeamJacobian> seam_jacobian(const FusionProblem& prob, const SeamSample& s) {
  const auto& ti = prob.transforms[s.frame_i];
  const auto& tj = prob.transforms[s.frame_j];
  const auto si = sample_frame(prob, s.frame_i, s.canvas_pos, ti);
  const auto sj = sample_frame(prob, s.frame_j, s.canvas_pos, tj);
  if (!si || !sj) return std::nullopt;
  const double r = si->g.value - sj->g.value;
  const double sign = r >= 0.0 ? 1.0 : -1.0;
  SeamJacobian jac;
  jac.e = std::abs(r);
  const auto di = sample_derivative(ti, *si);
  const auto dj = sample_derivative(tj, *sj);
  for (int m = 0; m < 4; ++m) {
    jac.d_frame_i[m] = sign * di[m];
    jac.d_frame_j[m] = -sign * dj[m];
  }
  return jac;
}

double eloss(const FusionProblem& prob) {
  double data = 0.0;
  for (const auto& s : prob.seams) {
    const auto si = sample_frame(prob, s.frame_i, s.canvas_pos, prob.transforms[s.frame_i]);
    const auto sj = sample_frame(prob, s.frame_j, s.canvas_pos, prob.transforms[s.frame_j]);
    if (!si || !sj) continue;
    const double e = si->g.value - sj->g.value;
    data += s.weight * e * e;
  }
  double reg = 0.0;
  for (std::size_t k = 0; k < prob.transforms.size(); ++k) {
    reg += deviation_norm2(prob.transforms[k], prob.init_transforms[k]);
  }
  return data + prob.beta * reg;
}

Raster average_canvas(std::span<const Raster> frames, std::span<const SimTransform4> transforms,
                      const CanvasGrid& grid) {
  Raster out(std::max(grid.width, 1), std::max(grid.height, 1), 1, 0.0);
  for (int v = 0; v < grid.height; ++v) {
    for (int u = 0; u < grid.width; ++u) {
      const PixelCoord q = grid.position(u, v);
      double sum = 0.0;
      int n = 0;
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto p = transforms[k].apply_inverse(q);
        if (!p) continue;
        const auto val = sample_bilinear(frames[k], *p);
        if (!val) continue;
        sum += *val;
        ++n;
      }
      if (n > 0) out.at(u, v) = sum / n;
    }
  }
  return out;
}

namespace {

class FrameStepper {
 public:
  FrameStepper(FusionProblem& prob) : prob_(prob), involving_(prob.frames.size()) {
    for (std::size_t s = 0; s < prob.seams.size(); ++s) {
      involving_[prob.seams[s].frame_i].push_back(s);
      involving_[prob.seams[s].frame_j].push_back(s);
    }
  }

  bool has_seams(int k) const { return !involving_[k].empty(); }

  // Terms of eloss that depend on frame k's transform.
  double local_loss(int k, const SimTransform4& t) const {
    double loss = 0.0;
    for (auto idx : involving_[k]) {
      const auto& s = prob_.seams[idx];
      const auto& ti = s.frame_i == k ? t : prob_.transforms[s.frame_i];
      const auto& tj = s.frame_j == k ? t : prob_.transforms[s.frame_j];
      const auto si = sample_frame(prob_, s.frame_i, s.canvas_pos, ti);
      const auto sj = sample_frame(prob_, s.frame_j, s.canvas_pos, tj);
      if (!si || !sj) continue;
      const double e = si->g.value - sj->g.value;
      loss += s.weight * e * e;
    }
    return loss + prob_.beta * deviation_norm2(t, prob_.init_transforms[k]);
  }

  bool step(int k, double& damping, int max_retries) {
    const SimTransform4 current = prob_.transforms[k];
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (auto idx : involving_[k]) {
      const auto& s = prob_.seams[idx];
      const auto si = sample_frame(prob_, s.frame_i, s.canvas_pos, prob_.transforms[s.frame_i]);
      const auto sj = sample_frame(prob_, s.frame_j, s.canvas_pos, prob_.transforms[s.frame_j]);
      if (!si || !sj) continue;
      const double r = si->g.value - sj->g.value;
      std::array<double, 4> d{};
      if (s.frame_i == k) {
        d = sample_derivative(current, *si);
      } else {
        d = sample_derivative(current, *sj);
        for (auto& v : d) v = -v;
      }
      const Eigen::Vector4d j(d[0], d[1], d[2], d[3]);
      jtj += s.weight * j * j.transpose();
      jtr += s.weight * r * j;
    }
    const auto cur = current.params();
    const auto init = prob_.init_transforms[k].params();
    for (int m = 0; m < 4; ++m) {
      jtj(m, m) += prob_.beta;
      jtr(m) += prob_.beta * (cur[m] - init[m]);
    }
    const double base = local_loss(k, current);
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
      Eigen::Matrix4d a = jtj;
      for (int m = 0; m < 4; ++m) a(m, m) += damping * std::max(jtj(m, m), 1e-12);
      const Eigen::Vector4d delta = -a.ldlt().solve(jtr);
      if (delta.allFinite()) {
        std::array<double, 4> next{};
        for (int m = 0; m < 4; ++m) next[m] = cur[m] + delta(m);
        const auto candidate = SimTransform4::from_params(next);
        // Require a decrease well above the rounding noise of re-summing eloss.
        if (candidate.finite() && local_loss(k, candidate) < base * (1.0 - 1e-10)) {
          prob_.transforms[k] = candidate;
          damping = std::max(damping * 0.5, 1e-12);
          return true;
        }
      }
      if (attempt < max_retries) damping *= 2.0;
    }
    return false;
  }

 private:
  FusionProblem& prob_;
  std::vector<std::vector<std::size_t>> involving_;
};

}  // namespace

FusionResult optimize_alternating(FusionProblem prob, const FusionOptions& opts) {
  if (prob.seams.empty()) throw Error(ErrorKind::NoSeams, "fusion problem has no seam samples");
  if (prob.beta < 0.0) throw Error(ErrorKind::InvalidArgument, "beta must be non-negative");
  if (prob.transforms.size() != prob.frames.size()) prob.transforms = prob.init_transforms;

  FusionResult result;
  FrameStepper stepper(prob);
  std::vector<double> damping(prob.frames.size(), opts.initial_damping);
  double loss = eloss(prob);
  result.loss_trace.push_back(loss);
  for (int round = 0; round < opts.max_rounds; ++round) {
    prob.canvas_values = average_canvas(prob.frames, prob.transforms, prob.grid);
    for (std::size_t k = 0; k < prob.frames.size(); ++k) {
      if (!stepper.has_seams(static_cast<int>(k))) continue;
      if (stepper.step(static_cast<int>(k), damping[k], opts.max_retries)) ++result.accepted_steps;
    }
    const double next = eloss(prob);
    result.loss_trace.push_back(next);
    const double decrease = loss - next;
    const double previous = loss;
    loss = next;
    if (loss <= 0.0 || decrease < opts.tol * previous) break;
  }
  result.canvas_values = average_canvas(prob.frames, prob.transforms, prob.grid);
  result.transforms = prob.transforms;
  result.grid = prob.grid;
  return result;
}

std::size_t Canvas::seam_count() const {
  return static_cast<std::size_t>(std::count(seam_map.begin(), seam_map.end(), 1));
}

Canvas composite(std::span<const Raster> frames, std::span<const SimTransform4> transforms,
                 const Raster* canvas_values, const CanvasGrid* grid) {
  if (frames.empty()) throw Error(ErrorKind::EmptyInput, "no frames to composite");
  if (frames.size() != transforms.size()) {
    throw Error(ErrorKind::InvalidArgument, "one transform per frame required");
  }
  for (const auto& t : transforms) {
    if (!t.finite()) throw Error(ErrorKind::InvalidArgument, "non-finite transform");
  }
  std::vector<Raster> gray;
  for (const auto& f : frames) gray.push_back(f.channels() == 1 ? f : to_gray(f));

  Canvas canvas;
  canvas.grid = grid ? *grid : canvas_bounds(gray, transforms);
  const int w = canvas.grid.width, h = canvas.grid.height;
  const bool use_c = canvas_values && canvas_values->width() == w && canvas_values->height() == h;
  canvas.image = Raster(w, h, 1, 0.0);
  canvas.contributors.assign(static_cast<std::size_t>(w) * h, {});
  canvas.seam_map.assign(static_cast<std::size_t>(w) * h, 0);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const PixelCoord q = canvas.grid.position(u, v);
      auto& contrib = canvas.contributors[static_cast<std::size_t>(v) * w + u];
      double sum = 0.0;
      for (std::size_t k = 0; k < gray.size(); ++k) {
        const auto p = transforms[k].apply_inverse(q);
        if (!p) continue;
        const auto val = sample_bilinear(gray[k], *p);
        if (!val) continue;
        contrib.push_back(static_cast<int>(k));
        sum += *val;
      }
      if (contrib.empty()) continue;
      canvas.image.at(u, v) = use_c ? canvas_values->at(u, v) : sum / contrib.size();
    }
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto n = canvas.contributors_at(u, v).size();
      if (n < 2) continue;
      bool boundary = false;
      const int du[4] = {1, -1, 0, 0}, dv[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4 && !boundary; ++d) {
        const int nu = u + du[d], nv = v + dv[d];
        if (nu < 0 || nv < 0 || nu >= w || nv >= h) continue;
        boundary = canvas.contributors_at(nu, nv).size() != n;
      }
      if (boundary) canvas.seam_map[static_cast<std::size_t>(v) * w + u] = 1;
    }
  }
  return canvas;
}

void write_loss_trace(std::ostream& out, std::span<const double> trace) {
  const auto old = out.precision(17);
  for (double v : trace) out << v << '\n';
  out.precision(old);
}

}  // namespace panoscope::fusion
