/*
 * Copyright 2026 The MVOL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace mvol {

// Base of every error raised by the library. `kind()` is a stable short name
// used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define MVOL_DEFINE_ERROR(Name, Base)                               \
  class Name : public Base {                                        \
   public:                                                          \
    explicit Name(const std::string& what) : Base(#Name, what) {}   \
  };

class ConfigErrorBase : public Error {
 protected:
  using Error::Error;
};
class IoErrorBase : public Error {
 protected:
  using Error::Error;
};
class NumericErrorBase : public Error {
 protected:
  using Error::Error;
};

// Invalid configuration or arguments (CLI exit code 2).
MVOL_DEFINE_ERROR(ConfigError, ConfigErrorBase)
MVOL_DEFINE_ERROR(DimensionTooSmall, ConfigErrorBase)
MVOL_DEFINE_ERROR(PatchBudgetExceeded, ConfigErrorBase)
MVOL_DEFINE_ERROR(ShapeMismatch, ConfigErrorBase)
MVOL_DEFINE_ERROR(EmptyDataset, ConfigErrorBase)
MVOL_DEFINE_ERROR(EmptyScores, ConfigErrorBase)
MVOL_DEFINE_ERROR(MissingSplit, ConfigErrorBase)
MVOL_DEFINE_ERROR(MissingMetadata, ConfigErrorBase)
MVOL_DEFINE_ERROR(MisalignedLabels, ConfigErrorBase)
MVOL_DEFINE_ERROR(AssumptionNotSatisfied, ConfigErrorBase)

// File-system and format failures (CLI exit code 3).
MVOL_DEFINE_ERROR(IoError, IoErrorBase)

// NaN or infinity detected during training or scoring (CLI exit code 4).
MVOL_DEFINE_ERROR(NumericError, NumericErrorBase)

#undef MVOL_DEFINE_ERROR

}  // namespace mvol
