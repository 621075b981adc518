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

#include <stdexcept>
#include <string>

namespace panoscope {

enum class ErrorKind {
  Decode,
  Io,
  UnsupportedFormat,
  Config,
  DegenerateConfiguration,
  NonInvertibleLink,
  InsufficientMatches,
  NoSeams,
  EmptyInput,
  ExcludedFace,
  DegenerateRay,
  EmptyTrainingSet,
  EmptyDataset,
  InvalidArgument,
  OutOfFrame,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace panoscope
