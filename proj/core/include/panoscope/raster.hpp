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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace panoscope {

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;

  bool finite() const;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Row-major pixel grid with 1 or 3 interleaved channels. Values are held in
/// double precision on the 0..255 scale and only quantized when written out.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels = 1, double fill = 0.0);
  Raster(int width, int height, int channels, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  /// True when p lies in the closed sampling domain [0, w-1] x [0, h-1].
  bool contains(PixelCoord p) const;

  /// Copy of the axis-aligned block [x0, x0+w) x [y0, y0+h).
  Raster crop(int x0, int y0, int w, int h) const;

  double mean(int c = 0) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// Bilinear interpolation of one channel; nullopt outside the sampling domain.
std::optional<double> sample_bilinear(const Raster& img, PixelCoord p, int channel = 0);

/// All channels at once.
std::optional<std::vector<double>> sample_bilinear_all(const Raster& img, PixelCoord p);

struct GradientSample {
  double value = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

/// Value and exact partial derivatives of the bilinear interpolant.
std::optional<GradientSample> sample_bilinear_gradient(const Raster& img, PixelCoord p,
                                                       int channel = 0);

/// ITU-601 luma, rounded to the nearest integer level. Gray input is returned as is.
Raster to_gray(const Raster& img);

/// Normalized 1-D Gaussian taps of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with clamp-to-edge borders; sigma == 0 is the identity.
Raster gaussian_smooth(const Raster& img, double sigma);

/// Central-difference gradient magnitude (clamped borders), single channel.
Raster gradient_magnitude(const Raster& gray);

/// Round and clamp every value to an integer in [0, 255].
Raster quantize(const Raster& img);

}  // namespace panoscope
