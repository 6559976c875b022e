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

#include "sinpaint/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "sinpaint/error.hpp"
#include "sinpaint/rng.hpp"

namespace sinpaint {

namespace {

constexpr int kMaskFormatVersion = 1;

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Uniformly random composition of `items` identical items into `bins` bins.
std::vector<int> stars_and_bars(int items, int bins, Rng& rng) {
  std::vector<int> out(static_cast<std::size_t>(bins), 0);
  if (bins == 1) {
    out[0] = items;
    return out;
  }
  const int slots = items + bins - 1;
  std::vector<int> pos(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) pos[i] = i;
  // Partial Fisher-Yates: the first bins-1 entries become bar positions.
  for (int i = 0; i < bins - 1; ++i) std::swap(pos[i], pos[uniform_int(rng, i, slots - 1)]);
  std::vector<int> bars(pos.begin(), pos.begin() + (bins - 1));
  std::sort(bars.begin(), bars.end());
  int prev = -1;
  for (int b = 0; b < bins - 1; ++b) {
    out[b] = bars[b] - prev - 1;
    prev = bars[b];
  }
  out[bins - 1] = slots - prev - 1;
  return out;
}

// 1-4 non-touching blocks, each >= kMinBlockBins, totalling `total` bins.
std::vector<std::pair<int, int>> place_blocks(int total, int length, Rng& rng) {
  if (total <= 0) return {};
  total = std::clamp(total, kMinBlockBins, length);
  int max_blocks = std::min(kMaxBlocks, total / kMinBlockBins);
  max_blocks = std::min(max_blocks, length - total + 1);
  max_blocks = std::max(max_blocks, 1);
  const int blocks = uniform_int(rng, 1, max_blocks);

  std::vector<int> sizes = stars_and_bars(total - blocks * kMinBlockBins, blocks, rng);
  for (int& s : sizes) s += kMinBlockBins;
  std::vector<int> gaps = stars_and_bars(length - total - (blocks - 1), blocks + 1, rng);
  for (int i = 1; i < blocks; ++i) gaps[i] += 1;

  std::vector<std::pair<int, int>> out;
  int cursor = 0;
  for (int b = 0; b < blocks; ++b) {
    cursor += gaps[b];
    out.emplace_back(cursor, cursor + sizes[b]);
    cursor += sizes[b];
  }
  return out;
}

struct Rect {
  int row, col, height, width;
  bool overlaps(const Rect& o) const {
    return row < o.row + o.height && o.row < row + height && col < o.col + o.width &&
           o.col < col + width;
  }
};

bool try_random_rects(int target, Rng& rng, std::vector<Rect>& rects) {
  constexpr int kMinArea = kMinBlockBins * kMinBlockBins;
  const int max_blocks = std::clamp(target / kMinArea, 1, kMaxBlocks);
  const int blocks = uniform_int(rng, 1, max_blocks);
  std::vector<int> shares =
      stars_and_bars(std::max(target - blocks * kMinArea, 0), blocks, rng);
  rects.clear();
  for (int b = 0; b < blocks; ++b) {
    const int area = shares[b] + kMinArea;
    const double min_w = std::max<double>(kMinBlockBins, std::ceil(area / double(kNumBins)));
    const double max_w = std::min<double>(kNumFrames, std::floor(area / double(kMinBlockBins)));
    if (min_w > max_w) return false;
    const double lw = std::uniform_real_distribution<double>(std::log(min_w), std::log(max_w))(rng);
    const int width = std::clamp(static_cast<int>(std::lround(std::exp(lw))), kMinBlockBins,
                                 kNumFrames);
    const int height =
        std::clamp(static_cast<int>(std::lround(double(area) / width)), kMinBlockBins, kNumBins);
    bool placed = false;
    for (int tries = 0; tries < 64 && !placed; ++tries) {
      Rect r{uniform_int(rng, 0, kNumBins - height), uniform_int(rng, 0, kNumFrames - width),
             height, width};
      if (std::none_of(rects.begin(), rects.end(), [&](const Rect& o) { return r.overlaps(o); })) {
        rects.push_back(r);
        placed = true;
      }
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Time: return "time";
    case MaskKind::TimeFreq: return "timefreq";
    case MaskKind::Random: return "random";
  }
  return "time";
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "time") return MaskKind::Time;
  if (s == "timefreq" || s == "time+freq") return MaskKind::TimeFreq;
  if (s == "random") return MaskKind::Random;
  throw ContractViolation("unknown mask kind '" + s + "' (time, timefreq, random)");
}

std::string to_string(FillMode m) {
  switch (m) {
    case FillMode::Zeros: return "gaps";
    case FillMode::WhiteNoise: return "noise";
    case FillMode::AdditiveNoise: return "additive";
    case FillMode::SpeechShaped: return "speech-shaped";
  }
  return "gaps";
}

FillMode parse_fill_mode(const std::string& s) {
  if (s == "gaps" || s == "zeros") return FillMode::Zeros;
  if (s == "noise" || s == "white") return FillMode::WhiteNoise;
  if (s == "additive") return FillMode::AdditiveNoise;
  if (s == "speech-shaped") return FillMode::SpeechShaped;
  throw UnsupportedError("unknown fill mode '" + s + "' (gaps, noise, additive, speech-shaped)");
}

std::size_t Mask::masked_count() const {
  return static_cast<std::size_t>(valid.size() - valid.count());
}

double Mask::masked_fraction() const {
  return valid.size() == 0 ? 0.0 : double(masked_count()) / double(valid.size());
}

Mask Mask::all_valid(const MaskSpec& spec) {
  return Mask{ValidMap::Constant(kNumBins, kNumFrames, true), spec};
}

Mask sample_mask(const MaskSpec& spec) {
  if (!(spec.coverage >= 0.0 && spec.coverage <= kMaxCoverage)) {
    throw ContractViolation("sample_mask: coverage must lie in [0, 0.6]");
  }
  Mask mask = Mask::all_valid(spec);
  Rng rng(spec.seed);
  switch (spec.kind) {
    case MaskKind::Time:
    case MaskKind::TimeFreq: {
      const int cols = static_cast<int>(std::lround(spec.coverage * kNumFrames));
      for (auto [a, b] : place_blocks(cols, kNumFrames, rng)) {
        mask.valid.middleCols(a, b - a).setConstant(false);
      }
      if (spec.kind == MaskKind::TimeFreq) {
        const int rows = static_cast<int>(std::lround(spec.coverage * kNumBins));
        for (auto [a, b] : place_blocks(rows, kNumBins, rng)) {
          mask.valid.middleRows(a, b - a).setConstant(false);
        }
      }
      break;
    }
    case MaskKind::Random: {
      const double wanted = spec.coverage * kNumBins * kNumFrames;
      const int target = static_cast<int>(std::lround(wanted));
      if (target == 0) break;
      const double tolerance = 0.02 * kNumBins * kNumFrames;
      std::vector<Rect> rects;
      bool ok = false;
      for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
        if (!try_random_rects(std::max(target, kMinBlockBins * kMinBlockBins), rng, rects)) {
          continue;
        }
        int area = 0;
        for (const auto& r : rects) area += r.height * r.width;
        ok = std::abs(area - wanted) <= tolerance;
      }
      if (!ok) {
        // Single near-square block always fits below the 0.6 coverage cap.
        const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(wanted))),
                                    kMinBlockBins, kNumBins);
        const int width = std::clamp(static_cast<int>(std::lround(wanted / side)),
                                     kMinBlockBins, kNumFrames);
        rects = {Rect{uniform_int(rng, 0, kNumBins - side), uniform_int(rng, 0, kNumFrames - width),
                      side, width}};
      }
      for (const auto& r : rects) {
        mask.valid.block(r.row, r.col, r.height, r.width).setConstant(false);
      }
      break;
    }
  }
  return mask;
}

double sample_training_size(const MaskSizeSampler& s, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(s.mu, s.sigma);
  for (;;) {
    const double v = normal(rng);
    if (v >= s.lower && v <= s.upper) return v;
  }
}

CorruptedInput apply_mask(const LogMagnitude& m, const PhaseMatrix& p, const Mask& mask,
                          FillMode mode, const NoiseParams& noise, std::uint64_t seed) {
  const auto& v = mask.valid;
  if (m.values.rows() != v.rows() || m.values.cols() != v.cols() ||
      p.values.rows() != v.rows() || p.values.cols() != v.cols()) {
    throw ContractViolation("apply_mask: magnitude, phase and mask shapes differ");
  }
  CorruptedInput out{m, p};
  auto& values = out.magnitude.values;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  switch (mode) {
    case FillMode::Zeros: {
      const double fill = m.normalized ? 0.0 : std::log(kLogFloor);
      values = v.select(values, fill);
      break;
    }
    case FillMode::WhiteNoise:
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
          if (!v(r, c)) values(r, c) = noise.white_mean + noise.white_std * gauss(rng);
        }
      }
      break;
    case FillMode::AdditiveNoise: {
      const std::size_t masked = mask.masked_count();
      double power = 0.0;
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
          if (!v(r, c)) power += values(r, c) * values(r, c);
        }
      }
      power = masked > 0 ? power / double(masked) : 0.0;
      if (power <= 0.0) power = 1.0;
      const double sigma = std::sqrt(power / std::pow(10.0, noise.additive_snr_db / 10.0));
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
          if (!v(r, c)) values(r, c) += sigma * gauss(rng);
        }
      }
      break;
    }
    case FillMode::SpeechShaped:
      if (m.normalized) {
        throw ContractViolation("apply_mask: speech-shaped fill needs a denormalized magnitude");
      }
      out.magnitude = speech_shaped_noise_fill(m, v, seed);
      break;
    default:
      throw UnsupportedError("apply_mask: unknown fill mode");
  }
  out.phase.values = v.select(out.phase.values, 0.0);
  return out;
}

double masked_region_snr_db(const LogMagnitude& clean, const LogMagnitude& corrupted,
                            const Mask& mask) {
  double signal = 0.0, noise = 0.0;
  for (Eigen::Index c = 0; c < clean.values.cols(); ++c) {
    for (Eigen::Index r = 0; r < clean.values.rows(); ++r) {
      if (mask.valid(r, c)) continue;
      const double s = clean.values(r, c);
      const double d = corrupted.values(r, c) - s;
      signal += s * s;
      noise += d * d;
    }
  }
  if (noise <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

std::vector<std::pair<int, int>> masked_runs(const Mask& mask, bool rows) {
  const auto& v = mask.valid;
  const int n = static_cast<int>(rows ? v.rows() : v.cols());
  std::vector<std::pair<int, int>> runs;
  int start = -1;
  for (int i = 0; i <= n; ++i) {
    const bool full = i < n && (rows ? !v.row(i).any() : !v.col(i).any());
    if (full && start < 0) start = i;
    if (!full && start >= 0) {
      runs.emplace_back(start, i);
      start = -1;
    }
  }
  return runs;
}

std::vector<SampleInterval> mask_to_time_gaps(const Mask& mask) {
  if (mask.spec.kind == MaskKind::Random) {
    throw UnsupportedError("time gaps are undefined for random masks");
  }
  std::vector<SampleInterval> out;
  for (auto [a, b] : masked_runs(mask, false)) {
    out.push_back({static_cast<std::size_t>(a) * kHopLength,
                   static_cast<std::size_t>(b) * kHopLength});
  }
  return out;
}

void save_mask(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mask file " + path.string());
  out.precision(17);
  out << "sinpaint-mask " << kMaskFormatVersion << "\n";
  out << "kind " << to_string(mask.spec.kind) << "\n";
  out << "coverage " << mask.spec.coverage << "\n";
  out << "seed " << mask.spec.seed << "\n";
  out << "shape " << mask.valid.rows() << ' ' << mask.valid.cols() << "\n";
  for (Eigen::Index r = 0; r < mask.valid.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.valid.cols(); ++c) out << (mask.valid(r, c) ? '1' : '0');
    out << '\n';
  }
}

Mask load_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mask file " + path.string());
  std::string magic, key, kind;
  int version = 0;
  in >> magic >> version;
  if (magic != "sinpaint-mask") throw DataError(path.string() + " is not a mask file");
  if (version != kMaskFormatVersion) {
    throw DataError("unsupported mask file version " + std::to_string(version));
  }
  Mask mask;
  Eigen::Index rows = 0, cols = 0;
  in >> key >> kind;
  if (key != "kind") throw DataError("mask file: expected 'kind'");
  mask.spec.kind = parse_mask_kind(kind);
  in >> key >> mask.spec.coverage;
  if (key != "coverage") throw DataError("mask file: expected 'coverage'");
  in >> key >> mask.spec.seed;
  if (key != "seed") throw DataError("mask file: expected 'seed'");
  in >> key >> rows >> cols;
  if (key != "shape" || rows != kNumBins || cols != kNumFrames) {
    throw DataError("mask file: shape must be 128 128");
  }
  mask.valid.resize(rows, cols);
  std::string line;
  for (Eigen::Index r = 0; r < rows; ++r) {
    in >> line;
    if (static_cast<Eigen::Index>(line.size()) != cols) {
      throw DataError("mask file: row " + std::to_string(r) + " has wrong length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (line[c] != '0' && line[c] != '1') throw DataError("mask file: cells must be 0 or 1");
      mask.valid(r, c) = line[c] == '1';
    }
  }
  return mask;
}

}  // namespace sinpaint
