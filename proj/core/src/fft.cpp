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

#include "fft.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

namespace sinpaint::detail {

namespace {
// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(static_cast<std::size_t>(n));
  spec_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(fwd_);
  fftw_destroy_plan(inv_);
  fftw_free(real_);
  fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  std::copy_n(in.begin(), n_, real_);
  fftw_execute(fwd_);
  for (int k = 0; k <= n_ / 2; ++k) out[k] = {spec_[k][0], spec_[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  for (int k = 0; k <= n_ / 2; ++k) {
    spec_[k][0] = in[k].real();
    spec_[k][1] = in[k].imag();
  }
  // c2r ignores the imaginary parts of DC and Nyquist.
  fftw_execute(inv_);
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
}

RealFft& real_fft(int n) {
  thread_local std::map<int, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

}  // namespace sinpaint::detail
