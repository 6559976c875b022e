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

#include <complex>
#include <span>

#include <fftw3.h>

namespace sinpaint::detail {

// Thin RAII wrapper over an FFTW real transform pair of fixed size. Plans are
// built with FFTW_ESTIMATE so results are bit-reproducible run to run.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }

  // in: n reals; out: n/2+1 bins (unnormalized).
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in: n/2+1 bins; out: n reals, scaled by 1/n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  int n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

// Per-thread cached transform of size n.
RealFft& real_fft(int n);

}  // namespace sinpaint::detail
