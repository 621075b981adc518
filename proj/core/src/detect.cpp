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

#include "panoscope/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include "json.hpp"
#include <numeric>
#include <ostream>
#include <sstream>

#include "panoscope/error.hpp"
#include "panoscope/image_io.hpp"
#include "panoscope/random.hpp"

namespace panoscope::detect {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

int AnchorSet::positive_count() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), AnchorLabel::Positive));
}

AnchorSet make_anchors(int width, int height, std::span<const double> scales,
                       std::span<const double> aspects, int stride) {
  if (width < 1 || height < 1 || stride < 1) {
    throw Error(ErrorKind::InvalidArgument, "anchor grid needs positive image size and stride");
  }
  AnchorSet set;
  set.image_width = width;
  set.image_height = height;
  set.stride = stride;
  set.grid_width = (width + stride - 1) / stride;
  set.grid_height = (height + stride - 1) / stride;
  set.per_cell = static_cast<int>(scales.size() * aspects.size());
  for (int gy = 0; gy < set.grid_height; ++gy) {
    for (int gx = 0; gx < set.grid_width; ++gx) {
      const double cx = (gx + 0.5) * stride;
      const double cy = (gy + 0.5) * stride;
      for (double s : scales) {
        for (double a : aspects) {
          const double w = s * std::sqrt(a);
          const double h = s / std::sqrt(a);
          set.boxes.push_back({std::max(0.0, cx - 0.5 * w), std::max(0.0, cy - 0.5 * h),
                               std::min<double>(width, cx + 0.5 * w), std::min<double>(height, cy + 0.5 * h)});
        }
      }
    }
  }
  set.labels.assign(set.boxes.size(), AnchorLabel::Negative);
  set.matched_gt.assign(set.boxes.size(), -1);
  set.max_iou.assign(set.boxes.size(), 0.0);
  return set;
}

AnchorSet match_anchors(AnchorSet anchors, std::span<const Box> gts, const MatchThresholds& th) {
  const std::size_t n = anchors.size();
  anchors.labels.assign(n, AnchorLabel::Negative);
  anchors.matched_gt.assign(n, -1);
  anchors.max_iou.assign(n, 0.0);
  if (gts.empty()) return anchors;

  std::vector<double> table(n * gts.size());
  std::vector<int> best_gt(n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(anchors.boxes[a], gts[g]);
      table[a * gts.size() + g] = v;
      if (v > anchors.max_iou[a]) {
        anchors.max_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
    }
    if (anchors.max_iou[a] > th.positive_iou) {
      anchors.labels[a] = AnchorLabel::Positive;
      anchors.matched_gt[a] = best_gt[a];
    } else if (anchors.max_iou[a] >= th.negative_iou) {
      anchors.labels[a] = AnchorLabel::Ignored;
    }
  }
  // The best anchor of every box is forced positive; an anchor already forced
  // by an earlier box is skipped so that each box keeps its own.
  std::vector<std::uint8_t> forced(n, 0);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    int best = -1;
    double best_v = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double v = table[a * gts.size() + g];
      if (!forced[a] && v > best_v) {
        best_v = v;
        best = static_cast<int>(a);
      }
    }
    if (best < 0) continue;
    forced[best] = 1;
    anchors.labels[best] = AnchorLabel::Positive;
    anchors.matched_gt[best] = static_cast<int>(g);
  }
  return anchors;
}

std::vector<int> selective_negatives(std::span<const ScoredNegative> negatives, int n_pos, double ratio) {
  if (!(ratio > 0.0)) throw Error(ErrorKind::InvalidArgument, "negative ratio must be positive");
  std::vector<ScoredNegative> sorted(negatives.begin(), negatives.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ScoredNegative& a, const ScoredNegative& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.anchor < b.anchor;
  });
  const double quota = ratio * std::max(n_pos, 1);
  std::size_t keep = sorted.size();
  if (std::isfinite(quota) && quota < static_cast<double>(sorted.size())) {
    keep = static_cast<std::size_t>(std::floor(quota));
  }
  std::vector<int> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(sorted[i].anchor);
  return out;
}

std::array<double, 4> encode_box(const Box& anchor, const Box& gt) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x_min + 0.5 * aw, acy = anchor.y_min + 0.5 * ah;
  const double gcx = gt.x_min + 0.5 * gt.width(), gcy = gt.y_min + 0.5 * gt.height();
  return {(gcx - acx) / aw, (gcy - acy) / ah, std::log(gt.width() / aw), std::log(gt.height() / ah)};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& t) {
  const double aw = anchor.width(), ah = anchor.height();
  const double cx = anchor.x_min + 0.5 * aw + t[0] * aw;
  const double cy = anchor.y_min + 0.5 * ah + t[1] * ah;
  const double w = aw * std::exp(std::clamp(t[2], -8.0, 8.0));
  const double h = ah * std::exp(std::clamp(t[3], -8.0, 8.0));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LossTerms detector_loss(std::span<const LossInput> batch, double box_weight, std::vector<HeadOutput>* grads) {
  std::size_t n_cls = 0, n_pos = 0;
  for (const auto& in : batch) {
    const AnchorSet& anchors = *in.anchors;
    if (in.output->logits.size() != anchors.size() || in.selected.size() != anchors.size()) {
      throw Error(ErrorKind::InvalidArgument, "loss inputs disagree on the anchor count");
    }
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (anchors.labels[a] == AnchorLabel::Positive) {
        ++n_cls;
        ++n_pos;
      } else if (anchors.labels[a] == AnchorLabel::Negative && in.selected[a]) {
        ++n_cls;
      }
    }
  }
  if (n_cls == 0) throw Error(ErrorKind::EmptyTrainingSet, "no positive or selected negative anchors");

  if (grads) {
    grads->resize(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      (*grads)[b].logits.assign(batch[b].output->logits.size(), 0.0);
      (*grads)[b].offsets.assign(batch[b].output->offsets.size(), {0.0, 0.0, 0.0, 0.0});
    }
  }
  const double inv_cls = 1.0 / static_cast<double>(n_cls);
  const double inv_pos = n_pos > 0 ? 1.0 / static_cast<double>(n_pos) : 0.0;
  double cls_sum = 0.0, box_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const LossInput& in = batch[b];
    const AnchorSet& anchors = *in.anchors;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const bool pos = anchors.labels[a] == AnchorLabel::Positive;
      const bool neg = anchors.labels[a] == AnchorLabel::Negative && in.selected[a];
      if (!pos && !neg) continue;
      const double p = sigmoid(in.output->logits[a]);
      const double q = pos ? p : 1.0 - p;
      cls_sum += -std::log(std::clamp(q, kBceClamp, 1.0 - kBceClamp));
      if (grads && q > kBceClamp && q < 1.0 - kBceClamp) {
        (*grads)[b].logits[a] = (p - (pos ? 1.0 : 0.0)) * inv_cls;
      }
      if (!pos) continue;
      const auto& t = (*in.targets)[a];
      const auto& o = in.output->offsets[a];
      for (int d = 0; d < 4; ++d) {
        const double r = o[d] - t[d];
        const double ar = std::abs(r);
        box_sum += ar < 1.0 ? 0.5 * r * r : ar - 0.5;
        if (grads) {
          const double g = ar < 1.0 ? r : (r > 0.0 ? 1.0 : -1.0);
          (*grads)[b].offsets[a][d] = box_weight * g * inv_pos;
        }
      }
    }
  }
  LossTerms terms;
  terms.classification = cls_sum * inv_cls;
  terms.box = box_sum * inv_pos;
  terms.total = terms.classification + box_weight * terms.box;
  return terms;
}

namespace {

struct PreparedSample {
  AnchorSet anchors;
  std::vector<std::array<double, 4>> targets;
};

PreparedSample prepare(const TinyDetector& model, const Sample& s, const MatchThresholds& th) {
  PreparedSample p;
  p.anchors = match_anchors(model.anchors_for(s.image.width(), s.image.height()), s.boxes, th);
  p.targets.assign(p.anchors.size(), {0.0, 0.0, 0.0, 0.0});
  for (std::size_t a = 0; a < p.anchors.size(); ++a) {
    if (p.anchors.labels[a] == AnchorLabel::Positive) {
      p.targets[a] = encode_box(p.anchors.boxes[a], s.boxes[p.anchors.matched_gt[a]]);
    }
  }
  return p;
}

}  // namespace

TrainResult train(TinyDetector& model, const Dataset& data, const TrainOptions& opts) {
  if (data.samples.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (opts.batch_size < 1 || opts.steps < 0) {
    throw Error(ErrorKind::InvalidArgument, "batch size must be positive and steps non-negative");
  }
  std::vector<PreparedSample> prepared;
  prepared.reserve(data.samples.size());
  for (const auto& s : data.samples) prepared.push_back(prepare(model, s, opts.thresholds));

  Rng rng(opts.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::size_t n_params = model.parameter_count();
  std::vector<double> velocity(n_params, 0.0), grad(n_params);
  std::vector<ForwardCache> caches(opts.batch_size);
  std::vector<HeadOutput> outputs(opts.batch_size);
  std::vector<LossInput> inputs(opts.batch_size);
  std::vector<HeadOutput> out_grads;
  TrainResult result;
  result.loss_curve.reserve(opts.steps);

  for (int step = 0; step < opts.steps; ++step) {
    for (int b = 0; b < opts.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const PreparedSample& prep = prepared[idx];
      outputs[b] = model.forward(data.samples[idx].image, caches[b]);

      std::vector<ScoredNegative> negatives;
      for (std::size_t a = 0; a < prep.anchors.size(); ++a) {
        if (prep.anchors.labels[a] == AnchorLabel::Negative) {
          negatives.push_back({static_cast<int>(a), sigmoid(outputs[b].logits[a])});
        }
      }
      LossInput& in = inputs[b];
      in.output = &outputs[b];
      in.anchors = &prep.anchors;
      in.targets = &prep.targets;
      in.selected.assign(prep.anchors.size(), 0);
      for (int a : selective_negatives(negatives, prep.anchors.positive_count(), opts.negative_ratio)) {
        in.selected[a] = 1;
      }
    }
    const LossTerms loss = detector_loss(inputs, opts.box_weight, &out_grads);
    result.loss_curve.push_back(loss.total);

    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < opts.batch_size; ++b) model.backward(caches[b], out_grads[b], grad);
    auto params = model.parameters();
    for (std::size_t i = 0; i < n_params; ++i) {
      const double g = grad[i] + opts.weight_decay * params[i];
      velocity[i] = opts.momentum * velocity[i] + g;
      params[i] -= opts.learning_rate * velocity[i];
    }
  }
  return result;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.anchor < b.anchor;
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> infer(const TinyDetector& model, const Raster& img, double conf_thresh, double nms_iou) {
  const AnchorSet anchors = model.anchors_for(img.width(), img.height());
  const HeadOutput out = model.forward(img);
  std::vector<Detection> dets;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const double conf = sigmoid(out.logits[a]);
    if (!(conf > conf_thresh)) continue;
    Box b = decode_box(anchors.boxes[a], out.offsets[a]);
    b.x_min = std::clamp<double>(b.x_min, 0.0, img.width());
    b.x_max = std::clamp<double>(b.x_max, 0.0, img.width());
    b.y_min = std::clamp<double>(b.y_min, 0.0, img.height());
    b.y_max = std::clamp<double>(b.y_max, 0.0, img.height());
    if (!b.valid()) continue;
    dets.push_back({b, conf, static_cast<int>(a)});
  }
  return nms(std::move(dets), nms_iou);
}

std::vector<Box> read_annotations(std::istream& in) {
  std::vector<Box> boxes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    Box b;
    if (!(ss >> b.x_min >> b.y_min >> b.x_max >> b.y_max) || !b.valid()) {
      throw Error(ErrorKind::Decode, "malformed annotation: " + line);
    }
    boxes.push_back(b);
  }
  return boxes;
}

void write_annotations(std::ostream& out, std::span<const Box> boxes) {
  const auto old = out.precision(17);
  for (const auto& b : boxes) out << b.x_min << ' ' << b.y_min << ' ' << b.x_max << ' ' << b.y_max << '\n';
  out.precision(old);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  Dataset data;
  for (const auto& p : images) {
    fs::path ann = p;
    ann.replace_extension(".txt");
    std::ifstream in(ann);
    if (!in) throw Error(ErrorKind::Io, "missing annotation file: " + ann.string());
    data.samples.push_back({p.stem().string(), load_image(p), read_annotations(in)});
  }
  return data;
}

void save_sample(const Sample& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_image(s.image, dir / (s.name + ".png"));
  std::ofstream out(dir / (s.name + ".txt"));
  if (!out) throw Error(ErrorKind::Io, "cannot write annotation for " + s.name);
  write_annotations(out, s.boxes);
}

std::string detections_to_json(std::span<const Detection> dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) {
    arr.push_back({{"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}}, {"confidence", d.confidence}});
  }
  return arr.dump(2);
}

}  // namespace panoscope::detect
