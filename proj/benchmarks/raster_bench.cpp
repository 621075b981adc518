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

#include <benchmark/benchmark.h>

#include "panoscope/random.hpp"
#include "panoscope/raster.hpp"
#include "panoscope/register.hpp"

namespace {

using namespace panoscope;

Raster noise_texture(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Raster img(w, h, 1);
  for (double& v : img.data()) v = rng.uniform(0, 255);
  return gaussian_smooth(img, 2.0);
}

void BM_SampleBilinear(benchmark::State& state) {
  const Raster img = noise_texture(320, 240, 1);
  Rng rng(2);
  std::vector<PixelCoord> pts(4096);
  for (auto& p : pts) p = {rng.uniform(0, 319), rng.uniform(0, 239)};
  for (auto _ : state) {
    double sum = 0.0;
    for (const auto& p : pts) sum += *sample_bilinear(img, p);
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_SampleBilinear);

void BM_SampleBilinearGradient(benchmark::State& state) {
  const Raster img = noise_texture(320, 240, 1);
  Rng rng(3);
  std::vector<PixelCoord> pts(4096);
  for (auto& p : pts) p = {rng.uniform(0, 319), rng.uniform(0, 239)};
  for (auto _ : state) {
    for (const auto& p : pts) benchmark::DoNotOptimize(sample_bilinear_gradient(img, p));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_SampleBilinearGradient);

void BM_GaussianSmooth(benchmark::State& state) {
  const Raster img = noise_texture(320, 240, 4);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth(img, static_cast<double>(state.range(0))));
}
BENCHMARK(BM_GaussianSmooth)->Arg(1)->Arg(3);

void BM_DetectKeypoints(benchmark::State& state) {
  const Raster img = noise_texture(320, 240, 5);
  const reg::HarrisOptions opts{.presmooth = 1.5};
  for (auto _ : state) benchmark::DoNotOptimize(reg::detect_keypoints(img, static_cast<int>(state.range(0)), opts));
}
BENCHMARK(BM_DetectKeypoints)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
