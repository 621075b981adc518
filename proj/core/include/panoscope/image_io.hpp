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

#include <filesystem>

#include "panoscope/raster.hpp"

namespace panoscope {

/// Reads PNG (8-bit gray/RGB, alpha dropped) or binary PGM/PPM, sniffed by content.
Raster load_image(const std::filesystem::path& path);

/// Writes by extension: .png, .pgm (1 channel) or .ppm (3 channels).
/// Values are rounded and clamped to 8 bits.
void save_image(const Raster& img, const std::filesystem::path& path);

}  // namespace panoscope
