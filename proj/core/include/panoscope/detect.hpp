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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "panoscope/raster.hpp"

namespace panoscope::detect {

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return valid() ? width() * height() : 0.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

enum class AnchorLabel : std::uint8_t { Negative, Positive, Ignored };

struct AnchorSet {
  int image_width = 0;
  int image_height = 0;
  int stride = 0;
  int grid_width = 0;
  int grid_height = 0;
  int per_cell = 0;
  std::vector<Box> boxes;
  std::vector<AnchorLabel> labels;
  /// Ground-truth index for positives, -1 otherwise.
  std::vector<int> matched_gt;
  std::vector<double> max_iou;

  std::size_t size() const { return boxes.size(); }
  int positive_count() const;
};

/// Cells are centred at ((i + 0.5) stride, (j + 0.5) stride) in raster order;
/// within a cell anchors run over scales, then aspects (width / height).
AnchorSet make_anchors(int width, int height, std::span<const double> scales,
                       std::span<const double> aspects, int stride);

struct MatchThresholds {
  double positive_iou = 0.5;
  double negative_iou = 0.4;
};

AnchorSet match_anchors(AnchorSet anchors, std::span<const Box> gts, const MatchThresholds& th = {});

struct ScoredNegative {
  int anchor = 0;
  double confidence = 0.0;
};

inline constexpr double kKeepAllNegatives = std::numeric_limits<double>::infinity();

/// Highest-confidence negatives, at most ratio * max(n_pos, 1) of them.
std::vector<int> selective_negatives(std::span<const ScoredNegative> negatives, int n_pos, double ratio);

/// Centre offsets scaled by the anchor size, log size ratios.
std::array<double, 4> encode_box(const Box& anchor, const Box& gt);
Box decode_box(const Box& anchor, const std::array<double, 4>& offsets);

/// Per-anchor raw outputs of one image.
struct HeadOutput {
  std::vector<double> logits;
  std::vector<std::array<double, 4>> offsets;
};

struct LossTerms {
  double total = 0.0;
  double classification = 0.0;
  double box = 0.0;
};

/// One image worth of loss inputs. selected[k] marks the negatives kept for training.
struct LossInput {
  const HeadOutput* output = nullptr;
  const AnchorSet* anchors = nullptr;
  const std::vector<std::array<double, 4>>* targets = nullptr;
  std::vector<std::uint8_t> selected;
};

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over positives and selected negatives plus
/// box_weight times the mean over positives of the summed smooth-L1 offset
/// error. Writes d loss / d output into grads (same shape as the outputs).
/// Throws EmptyTrainingSet when nothing is selected.
LossTerms detector_loss(std::span<const LossInput> batch, double box_weight,
                        std::vector<HeadOutput>* grads);

struct Architecture {
  int input_channels = 1;
  std::array<int, 3> channels{8, 16, 32};
  std::vector<double> scales{16.0, 24.0, 36.0};
  std::vector<double> aspects{1.0};

  int per_cell() const { return static_cast<int>(scales.size() * aspects.size()); }
  static constexpr int kStride = 8;
};

struct ForwardCache;

/// Three stride-2 3x3 convolution stages with ReLU followed by a 3x3 head
/// emitting one logit and four box offsets per anchor.
class TinyDetector {
 public:
  TinyDetector(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  AnchorSet anchors_for(int width, int height) const;

  HeadOutput forward(const Raster& img) const;
  HeadOutput forward(const Raster& img, ForwardCache& cache) const;
  /// Accumulates d loss / d parameters into grad.
  void backward(const ForwardCache& cache, const HeadOutput& d_output, std::span<double> grad) const;

  void save(std::ostream& out) const;
  static TinyDetector load(std::istream& in);

 private:
  struct Layer {
    int in_c = 0;
    int out_c = 0;
    int stride = 2;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  Architecture arch_;
  std::vector<Layer> layers_;
  std::vector<double> params_;

  void build_layers();
};

struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;
};

struct ForwardCache {
  /// Input followed by the output of every layer; ReLU applied to all but the last.
  std::vector<Tensor> activations;
};

struct TrainOptions {
  int steps = 1200;
  int batch_size = 8;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Negatives kept per positive; kKeepAllNegatives gives the plain loss.
  double negative_ratio = 3.0;
  double box_weight = 1.0;
  MatchThresholds thresholds;
  std::uint64_t seed = 1;
};

struct Sample {
  std::string name;
  Raster image;
  std::vector<Box> boxes;
};

struct Dataset {
  std::vector<Sample> samples;
};

struct TrainResult {
  std::vector<double> loss_curve;
};

/// Minibatch SGD with momentum. Throws EmptyDataset.
TrainResult train(TinyDetector& model, const Dataset& data, const TrainOptions& opts);

struct Detection {
  Box box;
  double confidence = 0.0;
  int anchor = -1;
};

/// Greedy suppression: highest confidence first, ties by anchor index.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

std::vector<Detection> infer(const TinyDetector& model, const Raster& img, double conf_thresh = 0.5,
                             double nms_iou = 0.45);

/// One box per line: x_min y_min x_max y_max
std::vector<Box> read_annotations(std::istream& in);
void write_annotations(std::ostream& out, std::span<const Box> boxes);

/// PNG images with same-stem .txt annotation files, in file name order.
Dataset load_dataset(const std::filesystem::path& dir);
void save_sample(const Sample& s, const std::filesystem::path& dir);

std::string detections_to_json(std::span<const Detection> dets);

}  // namespace panoscope::detect
