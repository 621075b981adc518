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

#include "panoscope/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "panoscope/error.hpp"

namespace panoscope {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Decode: return "decode failure";
    case ErrorKind::Io: return "i/o failure";
    case ErrorKind::UnsupportedFormat: return "unsupported format";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::DegenerateConfiguration: return "degenerate configuration";
    case ErrorKind::NonInvertibleLink: return "non-invertible link";
    case ErrorKind::InsufficientMatches: return "insufficient matches";
    case ErrorKind::NoSeams: return "no seams";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::ExcludedFace: return "excluded face";
    case ErrorKind::DegenerateRay: return "degenerate ray";
    case ErrorKind::EmptyTrainingSet: return "empty training set";
    case ErrorKind::EmptyDataset: return "empty dataset";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::OutOfFrame: return "sample outside frame";
  }
  return "unknown error";
}

bool PixelCoord::finite() const { return std::isfinite(x) && std::isfinite(y); }

Raster::Raster(int width, int height, int channels, double fill)
    : Raster(width, height, channels,
             std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                     std::max(height, 0) * std::max(channels, 0),
                                 fill)) {}

Raster::Raster(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::InvalidArgument, "raster dimensions must be positive");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::UnsupportedFormat,
                "unsupported channel count " + std::to_string(channels));
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorKind::InvalidArgument, "raster data length does not match dimensions");
  }
}

bool Raster::contains(PixelCoord p) const {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= width_ - 1 && p.y <= height_ - 1;
}

Raster Raster::crop(int x0, int y0, int w, int h) const {
  Raster out(w, h, channels_);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(x0 + x, 0, width_ - 1);
      const int sy = std::clamp(y0 + y, 0, height_ - 1);
      for (int c = 0; c < channels_; ++c) out.at(x, y, c) = at(sx, sy, c);
    }
  }
  return out;
}

double Raster::mean(int c) const {
  double sum = 0.0;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) sum += at(x, y, c);
  }
  return sum / (static_cast<double>(width_) * height_);
}

namespace {

struct Cell {
  int x0, y0, x1, y1;
  double fx, fy;
};

std::optional<Cell> locate(const Raster& img, PixelCoord p) {
  if (!p.finite() || !img.contains(p)) return std::nullopt;
  Cell cell{};
  cell.x0 = std::min(static_cast<int>(std::floor(p.x)), img.width() - 1);
  cell.y0 = std::min(static_cast<int>(std::floor(p.y)), img.height() - 1);
  cell.x1 = std::min(cell.x0 + 1, img.width() - 1);
  cell.y1 = std::min(cell.y0 + 1, img.height() - 1);
  cell.fx = p.x - cell.x0;
  cell.fy = p.y - cell.y0;
  return cell;
}

}  // namespace

std::optional<double> sample_bilinear(const Raster& img, PixelCoord p, int channel) {
  const auto cell = locate(img, p);
  if (!cell) return std::nullopt;
  const auto [x0, y0, x1, y1, fx, fy] = *cell;
  const double top = (1.0 - fx) * img.at(x0, y0, channel) + fx * img.at(x1, y0, channel);
  const double bottom = (1.0 - fx) * img.at(x0, y1, channel) + fx * img.at(x1, y1, channel);
  return (1.0 - fy) * top + fy * bottom;
}

std::optional<std::vector<double>> sample_bilinear_all(const Raster& img, PixelCoord p) {
  if (!locate(img, p)) return std::nullopt;
  std::vector<double> out(img.channels());
  for (int c = 0; c < img.channels(); ++c) out[c] = *sample_bilinear(img, p, c);
  return out;
}

std::optional<GradientSample> sample_bilinear_gradient(const Raster& img, PixelCoord p,
                                                       int channel) {
  const auto cell = locate(img, p);
  if (!cell) return std::nullopt;
  const auto [x0, y0, x1, y1, fx, fy] = *cell;
  const double i00 = img.at(x0, y0, channel);
  const double i10 = img.at(x1, y0, channel);
  const double i01 = img.at(x0, y1, channel);
  const double i11 = img.at(x1, y1, channel);
  GradientSample s;
  s.value = (1.0 - fy) * ((1.0 - fx) * i00 + fx * i10) + fy * ((1.0 - fx) * i01 + fx * i11);
  // On the last row/column the neighbour is clamped, so the slope there is zero.
  s.dx = x1 == x0 ? 0.0 : (1.0 - fy) * (i10 - i00) + fy * (i11 - i01);
  s.dy = y1 == y0 ? 0.0 : (1.0 - fx) * (i01 - i00) + fx * (i11 - i10);
  return s;
}

Raster to_gray(const Raster& img) {
  if (img.channels() == 1) return img;
  Raster out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double luma =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      out.at(x, y) = std::round(luma);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[i + radius] = v;
    sum += v;
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

Raster gaussian_smooth(const Raster& img, double sigma) {
  if (sigma < 0.0) throw Error(ErrorKind::InvalidArgument, "sigma must be non-negative");
  if (sigma == 0.0) return img;
  const auto taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = img.width(), h = img.height(), ch = img.channels();

  Raster horizontal(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * img.at(std::clamp(x + k, 0, w - 1), y, c);
        }
        horizontal.at(x, y, c) = acc;
      }
    }
  }
  Raster out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * horizontal.at(x, std::clamp(y + k, 0, h - 1), c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

Raster gradient_magnitude(const Raster& gray) {
  const int w = gray.width(), h = gray.height();
  Raster out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx =
          0.5 * (gray.at(std::min(x + 1, w - 1), y) - gray.at(std::max(x - 1, 0), y));
      const double gy =
          0.5 * (gray.at(x, std::min(y + 1, h - 1)) - gray.at(x, std::max(y - 1, 0)));
      out.at(x, y) = std::hypot(gx, gy);
    }
  }
  return out;
}

Raster quantize(const Raster& img) {
  Raster out = img;
  for (auto& v : out.data()) v = std::clamp(std::round(v), 0.0, 255.0);
  return out;
}

}  // namespace panoscope
