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

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "panoscope/detect.hpp"
#include "panoscope/error.hpp"
#include "panoscope/random.hpp"

namespace panoscope::detect {

namespace {

constexpr int kKernel = 3;
constexpr char kMagic[] = "panoscope-detector";

Tensor to_tensor(const Raster& img, int channels) {
  Tensor t;
  t.c = channels;
  t.h = img.height();
  t.w = img.width();
  t.v.resize(static_cast<std::size_t>(t.c) * t.h * t.w);
  const Raster src = (channels == 1 && img.channels() != 1) ? to_gray(img) : img;
  if (src.channels() != channels) {
    throw Error(ErrorKind::InvalidArgument, "image channel count does not match the detector input");
  }
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        t.v[(static_cast<std::size_t>(c) * t.h + y) * t.w + x] = src.at(x, y, c) / 255.0 - 0.5;
      }
    }
  }
  return t;
}

Tensor pad1(const Tensor& in) {
  Tensor p;
  p.c = in.c;
  p.h = in.h + 2;
  p.w = in.w + 2;
  p.v.assign(static_cast<std::size_t>(p.c) * p.h * p.w, 0.0);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < in.h; ++y) {
      const double* src = &in.v[(static_cast<std::size_t>(c) * in.h + y) * in.w];
      std::copy(src, src + in.w, &p.v[(static_cast<std::size_t>(c) * p.h + y + 1) * p.w + 1]);
    }
  }
  return p;
}

int conv_out(int n, int stride) { return (n + 2 - kKernel) / stride + 1; }

}  // namespace

TinyDetector::TinyDetector(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  if (arch_.input_channels != 1 && arch_.input_channels != 3) {
    throw Error(ErrorKind::InvalidArgument, "detector input must have 1 or 3 channels");
  }
  if (arch_.scales.empty() || arch_.aspects.empty()) {
    throw Error(ErrorKind::InvalidArgument, "detector needs at least one anchor scale and aspect");
  }
  build_layers();
  Rng rng(seed);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const bool head = li + 1 == layers_.size();
    const double sd = head ? 0.01 : std::sqrt(2.0 / (l.in_c * kKernel * kKernel));
    const std::size_t n = static_cast<std::size_t>(l.out_c) * l.in_c * kKernel * kKernel;
    for (std::size_t i = 0; i < n; ++i) params_[l.weight_offset + i] = sd * rng.normal();
  }
  // Logit bias starts at a 1% lesion prior.
  const Layer& head = layers_.back();
  for (int j = 0; j < arch_.per_cell(); ++j) params_[head.bias_offset + j] = -std::log(99.0);
}

void TinyDetector::build_layers() {
  layers_.clear();
  int in_c = arch_.input_channels;
  std::size_t offset = 0;
  auto add = [&](int out_c, int stride) {
    Layer l;
    l.in_c = in_c;
    l.out_c = out_c;
    l.stride = stride;
    l.weight_offset = offset;
    offset += static_cast<std::size_t>(out_c) * in_c * kKernel * kKernel;
    l.bias_offset = offset;
    offset += out_c;
    layers_.push_back(l);
    in_c = out_c;
  };
  for (int c : arch_.channels) {
    if (c < 1) throw Error(ErrorKind::InvalidArgument, "layer widths must be positive");
    add(c, 2);
  }
  add(5 * arch_.per_cell(), 1);
  params_.assign(offset, 0.0);
}

AnchorSet TinyDetector::anchors_for(int width, int height) const {
  return make_anchors(width, height, arch_.scales, arch_.aspects, Architecture::kStride);
}

HeadOutput TinyDetector::forward(const Raster& img) const {
  ForwardCache cache;
  return forward(img, cache);
}

HeadOutput TinyDetector::forward(const Raster& img, ForwardCache& cache) const {
  cache.activations.clear();
  cache.activations.push_back(to_tensor(img, arch_.input_channels));
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const Tensor pin = pad1(cache.activations.back());
    Tensor out;
    out.c = l.out_c;
    out.h = conv_out(pin.h - 2, l.stride);
    out.w = conv_out(pin.w - 2, l.stride);
    out.v.assign(static_cast<std::size_t>(out.c) * out.h * out.w, 0.0);
    const int s = l.stride;
    for (int oc = 0; oc < l.out_c; ++oc) {
      double* o = &out.v[static_cast<std::size_t>(oc) * out.h * out.w];
      std::fill(o, o + static_cast<std::size_t>(out.h) * out.w, params_[l.bias_offset + oc]);
      for (int ic = 0; ic < l.in_c; ++ic) {
        const double* plane = &pin.v[static_cast<std::size_t>(ic) * pin.h * pin.w];
        const double* wk = &params_[l.weight_offset + (static_cast<std::size_t>(oc) * l.in_c + ic) * 9];
        for (int ky = 0; ky < kKernel; ++ky) {
          for (int kx = 0; kx < kKernel; ++kx) {
            const double wv = wk[ky * kKernel + kx];
            for (int oy = 0; oy < out.h; ++oy) {
              const double* row = plane + static_cast<std::size_t>(oy * s + ky) * pin.w + kx;
              double* orow = o + static_cast<std::size_t>(oy) * out.w;
              for (int ox = 0; ox < out.w; ++ox) orow[ox] += wv * row[ox * s];
            }
          }
        }
      }
    }
    if (li + 1 < layers_.size()) {
      for (double& v : out.v) v = std::max(v, 0.0);
    }
    cache.activations.push_back(std::move(out));
  }

  const Tensor& head = cache.activations.back();
  const int per_cell = arch_.per_cell();
  const std::size_t cells = static_cast<std::size_t>(head.h) * head.w;
  HeadOutput result;
  result.logits.resize(cells * per_cell);
  result.offsets.resize(cells * per_cell);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (int j = 0; j < per_cell; ++j) {
      const std::size_t a = cell * per_cell + j;
      result.logits[a] = head.v[static_cast<std::size_t>(j) * cells + cell];
      for (int d = 0; d < 4; ++d) {
        result.offsets[a][d] = head.v[static_cast<std::size_t>(per_cell + 4 * j + d) * cells + cell];
      }
    }
  }
  return result;
}

void TinyDetector::backward(const ForwardCache& cache, const HeadOutput& d_output,
                            std::span<double> grad) const {
  if (grad.size() != params_.size()) throw Error(ErrorKind::InvalidArgument, "gradient size mismatch");
  const Tensor& head = cache.activations.back();
  const int per_cell = arch_.per_cell();
  const std::size_t cells = static_cast<std::size_t>(head.h) * head.w;
  if (d_output.logits.size() != cells * per_cell) {
    throw Error(ErrorKind::InvalidArgument, "output gradient does not match the forward pass");
  }
  Tensor dout{head.c, head.h, head.w, std::vector<double>(head.v.size(), 0.0)};
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (int j = 0; j < per_cell; ++j) {
      const std::size_t a = cell * per_cell + j;
      dout.v[static_cast<std::size_t>(j) * cells + cell] = d_output.logits[a];
      for (int d = 0; d < 4; ++d) {
        dout.v[static_cast<std::size_t>(per_cell + 4 * j + d) * cells + cell] = d_output.offsets[a][d];
      }
    }
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const Tensor& in = cache.activations[li];
    const Tensor pin = pad1(in);
    Tensor dpin{pin.c, pin.h, pin.w, std::vector<double>(pin.v.size(), 0.0)};
    const int s = l.stride;
    const std::size_t out_plane = static_cast<std::size_t>(dout.h) * dout.w;
    for (int oc = 0; oc < l.out_c; ++oc) {
      const double* go = &dout.v[oc * out_plane];
      double gb = 0.0;
      for (std::size_t i = 0; i < out_plane; ++i) gb += go[i];
      grad[l.bias_offset + oc] += gb;
      for (int ic = 0; ic < l.in_c; ++ic) {
        const std::size_t in_plane = static_cast<std::size_t>(ic) * pin.h * pin.w;
        const std::size_t wbase = l.weight_offset + (static_cast<std::size_t>(oc) * l.in_c + ic) * 9;
        for (int ky = 0; ky < kKernel; ++ky) {
          for (int kx = 0; kx < kKernel; ++kx) {
            const double wv = params_[wbase + ky * kKernel + kx];
            double gw = 0.0;
            for (int oy = 0; oy < dout.h; ++oy) {
              const std::size_t roff = in_plane + static_cast<std::size_t>(oy * s + ky) * pin.w + kx;
              const double* row = &pin.v[roff];
              double* drow = &dpin.v[roff];
              const double* grow = go + static_cast<std::size_t>(oy) * dout.w;
              for (int ox = 0; ox < dout.w; ++ox) {
                gw += grow[ox] * row[ox * s];
                drow[ox * s] += wv * grow[ox];
              }
            }
            grad[wbase + ky * kKernel + kx] += gw;
          }
        }
      }
    }
    if (li == 0) break;
    // Back through the ReLU that produced this layer's input.
    Tensor din{in.c, in.h, in.w, std::vector<double>(in.v.size(), 0.0)};
    for (int c = 0; c < in.c; ++c) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          const std::size_t i = (static_cast<std::size_t>(c) * in.h + y) * in.w + x;
          if (in.v[i] > 0.0) din.v[i] = dpin.v[(static_cast<std::size_t>(c) * pin.h + y + 1) * pin.w + x + 1];
        }
      }
    }
    dout = std::move(din);
  }
}

void TinyDetector::save(std::ostream& out) const {
  const auto old = out.precision(17);
  out << kMagic << " 1\n";
  out << "input " << arch_.input_channels << '\n';
  out << "channels " << arch_.channels[0] << ' ' << arch_.channels[1] << ' ' << arch_.channels[2] << '\n';
  out << "scales " << arch_.scales.size();
  for (double s : arch_.scales) out << ' ' << s;
  out << "\naspects " << arch_.aspects.size();
  for (double a : arch_.aspects) out << ' ' << a;
  out << "\nparams " << params_.size() << '\n';
  for (double p : params_) out << p << '\n';
  out.precision(old);
}

TinyDetector TinyDetector::load(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string w;
    if (!(in >> w) || w != word) throw Error(ErrorKind::Decode, "model file: expected '" + word + "'");
  };
  expect(kMagic);
  int version = 0;
  if (!(in >> version) || version != 1) throw Error(ErrorKind::Decode, "model file: unsupported version");
  Architecture arch;
  expect("input");
  in >> arch.input_channels;
  expect("channels");
  in >> arch.channels[0] >> arch.channels[1] >> arch.channels[2];
  auto read_list = [&](std::vector<double>& v) {
    std::size_t n = 0;
    if (!(in >> n) || n == 0 || n > 64) throw Error(ErrorKind::Decode, "model file: bad list length");
    v.resize(n);
    for (double& x : v) in >> x;
  };
  expect("scales");
  read_list(arch.scales);
  expect("aspects");
  read_list(arch.aspects);
  expect("params");
  std::size_t n = 0;
  in >> n;
  if (!in) throw Error(ErrorKind::Decode, "model file: truncated header");
  TinyDetector model(arch, 0);
  if (n != model.params_.size()) throw Error(ErrorKind::Decode, "model file: parameter count mismatch");
  for (double& p : model.params_) {
    if (!(in >> p)) throw Error(ErrorKind::Decode, "model file: truncated parameters");
  }
  return model;
}

}  // namespace panoscope::detect
