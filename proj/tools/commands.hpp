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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "panoscope/config.hpp"
#include "panoscope/evalx.hpp"

namespace panoscope::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

/// Parses arguments, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Rendered frames, poses, ground-truth boxes and homographies, plus a detector dataset.
void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// Undistort, register, chain-filter, fuse and composite a frame directory.
void cmd_stitch(const PipelineConfig& cfg, const std::filesystem::path& frames_dir,
                const std::filesystem::path& out_dir);

void cmd_unfold(const PipelineConfig& cfg, const std::filesystem::path& frames_dir,
                const std::filesystem::path& poses_file, const std::filesystem::path& out_dir);

void cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dataset_dir,
               const std::filesystem::path& model_out);

void cmd_detect(const PipelineConfig& cfg, const std::filesystem::path& model, const std::filesystem::path& image,
                std::ostream& json_out);

struct EvalInputs {
  /// Frame directory plus a stitch output directory: texture metric error before and after fusion.
  std::optional<std::filesystem::path> frames;
  std::optional<std::filesystem::path> stitch;
  /// Synth output directory holding truth_homographies.txt: FB curve of the stitch matches.
  std::optional<std::filesystem::path> truth;
  /// Trained model plus a detector-layout directory: recall and accuracy.
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> dataset;
};

evalx::EvalReport cmd_eval(const PipelineConfig& cfg, const EvalInputs& in);

/// Frames (*.png) of a directory in file name order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace panoscope::cli
