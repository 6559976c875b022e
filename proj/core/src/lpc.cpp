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

#include "sinpaint/lpc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "sinpaint/error.hpp"

namespace sinpaint {

namespace {

constexpr double kRidge = 1e-12;

// Samples predicted for `count` steps past the end of `context`.
std::vector<double> run_predictor(std::span<const double> context, std::size_t count,
                                  int order, double limit) {
  const LpcFit fit = fit_lpc(context, order);
  std::vector<double> buffer(context.begin(), context.end());
  buffer.reserve(context.size() + count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::span<const double> history(buffer.data() + buffer.size() - order,
                                          static_cast<std::size_t>(order));
    buffer.push_back(std::clamp(predict_next(fit, history), -limit, limit));
  }
  return {buffer.end() - static_cast<std::ptrdiff_t>(count), buffer.end()};
}

}  // namespace

LpcFit fit_lpc(std::span<const double> context, int order) {
  if (order <= 0 || context.size() <= static_cast<std::size_t>(order)) {
    throw ContractViolation("fit_lpc: context must be longer than the order");
  }
  const auto n = context.size();
  LpcFit fit;
  fit.coeffs.assign(static_cast<std::size_t>(order), 0.0);

  double energy = 0.0;
  for (double v : context) energy += v * v;
  if (energy <= 0.0) {
    fit.degenerate = true;
    return fit;
  }

  // Covariance (least-squares) fit over every full-history sample, with a
  // small ridge so rank-deficient contexts (few sinusoids, high order) stay
  // well conditioned.
  const auto p = static_cast<Eigen::Index>(order);
  const auto rows = static_cast<Eigen::Index>(n) - p;
  Eigen::MatrixXd X(rows, p);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto t = static_cast<std::size_t>(i + p);
    y(i) = context[t];
    for (Eigen::Index k = 0; k < p; ++k) X(i, k) = context[t - 1 - static_cast<std::size_t>(k)];
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const double ridge = kRidge * gram.trace() / double(p);
  gram.diagonal().array() += ridge;
  Eigen::VectorXd c = gram.ldlt().solve(X.transpose() * y);

  // Pull any pole outside the unit circle back just inside it.
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = c.transpose();
  if (p > 1) companion.bottomLeftCorner(p - 1, p - 1).setIdentity();
  const double radius = companion.eigenvalues().cwiseAbs().maxCoeff();
  if (radius > 1.0) {
    const double shrink = (1.0 - 1e-9) / radius;
    double scale = 1.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      scale *= shrink;
      c(k) *= scale;
    }
  }
  for (Eigen::Index k = 0; k < p; ++k) fit.coeffs[static_cast<std::size_t>(k)] = c(k);
  return fit;
}

double predict_next(const LpcFit& fit, std::span<const double> history) {
  const auto p = fit.coeffs.size();
  if (history.size() < p) throw ContractViolation("predict_next: history shorter than order");
  double acc = 0.0;
  for (std::size_t k = 0; k < p; ++k) acc += fit.coeffs[k] * history[history.size() - 1 - k];
  return acc;
}

namespace {

constexpr int kMinOrder = 2;

Waveform extrapolate_bounded(const Waveform& w, const SampleInterval& gap, const LpcConfig& cfg,
                             std::size_t right_bound) {
  if (gap.start > gap.end || gap.end > right_bound || right_bound > w.size()) {
    throw ContractViolation("extrapolate_gap: gap outside waveform");
  }
  Waveform out = w;
  const std::size_t len = gap.end - gap.start;
  if (len == 0) return out;

  // Short contexts fit a correspondingly lower order.
  const std::size_t left_avail = std::min(cfg.context, gap.start);
  const std::size_t right_avail = std::min(cfg.context, right_bound - gap.end);
  const int left_order = std::min(cfg.order, static_cast<int>(left_avail / 2));
  const int right_order = std::min(cfg.order, static_cast<int>(right_avail / 2));
  const bool use_left = left_order >= kMinOrder;
  const bool use_right = right_order >= kMinOrder;
  if (!use_left && !use_right) {
    throw ContractViolation("extrapolate_gap: not enough context on either side of the gap");
  }

  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  const double limit = 10.0 * peak;

  std::vector<double> forward, backward;
  if (use_left) {
    forward = run_predictor({w.samples.data() + gap.start - left_avail, left_avail}, len,
                            left_order, limit);
  }
  if (use_right) {
    std::vector<double> reversed(w.samples.begin() + static_cast<std::ptrdiff_t>(gap.end),
                                 w.samples.begin() + static_cast<std::ptrdiff_t>(gap.end + right_avail));
    std::reverse(reversed.begin(), reversed.end());
    backward = run_predictor(reversed, len, right_order, limit);
    std::reverse(backward.begin(), backward.end());
  }

  if (!use_right) {
    std::copy(forward.begin(), forward.end(), out.samples.begin() + static_cast<std::ptrdiff_t>(gap.start));
    return out;
  }
  if (!use_left) {
    std::copy(backward.begin(), backward.end(), out.samples.begin() + static_cast<std::ptrdiff_t>(gap.start));
    return out;
  }

  const std::size_t fade = cfg.crossfade == 0 ? len : std::min(cfg.crossfade, len);
  const std::size_t fade_start = (len - fade) / 2;
  for (std::size_t i = 0; i < len; ++i) {
    double weight;  // share of the backward prediction
    if (i < fade_start) {
      weight = 0.0;
    } else if (i >= fade_start + fade) {
      weight = 1.0;
    } else {
      const double t = (double(i - fade_start) + 0.5) / double(fade);
      weight = 0.5 - 0.5 * std::cos(std::numbers::pi * t);
    }
    out.samples[gap.start + i] = (1.0 - weight) * forward[i] + weight * backward[i];
  }
  return out;
}

}  // namespace

Waveform extrapolate_gap(const Waveform& w, const SampleInterval& gap, const LpcConfig& cfg) {
  return extrapolate_bounded(w, gap, cfg, w.size());
}

Waveform inpaint_gaps(const Waveform& w, std::span<const SampleInterval> gaps,
                      const LpcConfig& cfg) {
  Waveform out = w;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (i > 0 && gaps[i].start < gaps[i - 1].end) {
      throw ContractViolation("inpaint_gaps: gaps must be sorted and disjoint");
    }
    const std::size_t next = i + 1 < gaps.size() ? gaps[i + 1].start : out.size();
    const SampleInterval clipped{std::min(gaps[i].start, out.size()),
                                 std::min(gaps[i].end, out.size())};
    // Unrestored later gaps are not usable as right context.
    out = extrapolate_bounded(out, clipped, cfg, std::max(std::min(next, out.size()), clipped.end));
  }
  return out;
}

Waveform inpaint_time_masks(const Waveform& w, const Mask& mask, const LpcConfig& cfg) {
  const auto gaps = mask_to_time_gaps(mask);
  return inpaint_gaps(w, gaps, cfg);
}

}  // namespace sinpaint
