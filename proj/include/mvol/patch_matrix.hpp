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

#include <cstddef>
#include <span>
#include "mvol/errors.hpp"
#include <utility>
#include <vector>

namespace mvol {

// A d x P real matrix whose columns are the patches x_1..x_P of one input.
// Storage is column-major, so each patch is a contiguous run of d doubles.
class PatchMatrix {
 public:
  PatchMatrix() = default;
  PatchMatrix(int d, int patches)
      : d_(d), patches_(patches),
        data_(static_cast<std::size_t>(d) * patches, 0.0) {}
  // `data` must hold d * patches values, column-major.
  PatchMatrix(int d, int patches, std::vector<double> data)
      : d_(d), patches_(patches), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(d) * patches) {
      throw ShapeMismatch("PatchMatrix: data size != d * patches");
    }
  }

  int d() const { return d_; }
  int patches() const { return patches_; }

  std::span<double> patch(int p) {
    return {data_.data() + static_cast<std::size_t>(p) * d_,
            static_cast<std::size_t>(d_)};
  }
  std::span<const double> patch(int p) const {
    return {data_.data() + static_cast<std::size_t>(p) * d_,
            static_cast<std::size_t>(d_)};
  }
  double& operator()(int row, int p) {
    return data_[static_cast<std::size_t>(p) * d_ + row];
  }
  double operator()(int row, int p) const {
    return data_[static_cast<std::size_t>(p) * d_ + row];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  friend bool operator==(const PatchMatrix&, const PatchMatrix&) = default;

 private:
  int d_ = 0;
  int patches_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mvol
