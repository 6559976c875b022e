/*
Copyright 2026 The sinpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

// Central finite-difference gradient check.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "sinpaint/nn.hpp"

namespace sinpaint::testing {

inline double dot(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Compares `analytic` with central differences of `loss` over the entries
// listed in `indices` (every entry when empty). Gradients below `floor` are
// compared absolutely.
inline void check_gradient(nn::Tensor& t, const nn::Tensor& analytic,
                           const std::function<double()>& loss, double tol = 1e-3,
                           std::vector<std::size_t> indices = {}, double floor = 1e-4) {
  REQUIRE(t.size() == analytic.size());
  if (indices.empty()) {
    indices.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) indices[i] = i;
  }
  constexpr double h = 1e-5;
  for (std::size_t i : indices) {
    const double saved = t.data[i];
    t.data[i] = saved + h;
    const double up = loss();
    t.data[i] = saved - h;
    const double down = loss();
    t.data[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - analytic.data[i]) /
                       std::max({std::abs(numeric), std::abs(analytic.data[i]), floor});
    INFO("entry " << i << " numeric " << numeric << " analytic " << analytic.data[i]);
    REQUIRE(err < tol);
  }
}

}  // namespace sinpaint::testing
