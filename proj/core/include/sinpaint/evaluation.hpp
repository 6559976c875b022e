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

// Experiment driver: corrupt, restore, reconstruct and score segments over a
// grid of (intrusion, size, scenario) conditions; CSV output, single-file
// inpainting and the text/SVG report.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sinpaint/corpus.hpp"
#include "sinpaint/dsp.hpp"
#include "sinpaint/lpc.hpp"
#include "sinpaint/mask.hpp"
#include "sinpaint/metrics.hpp"
#include "sinpaint/unet.hpp"

namespace sinpaint {

enum class ScenarioKind { Gaps, Noise, Lpc, Informed, Blind };

// Text forms: "gaps", "noise" (speech-shaped), "noise:<fill>", "lpc",
// "informed:<label>" and "blind:<fill>".
struct Scenario {
  ScenarioKind kind = ScenarioKind::Gaps;
  std::string variant;

  std::string name() const;
  static Scenario parse(const std::string& text);
  // Fill of the corrupted input (Noise and Blind).
  FillMode fill() const;
  bool uses_model() const { return kind == ScenarioKind::Informed || kind == ScenarioKind::Blind; }
  bool operator==(const Scenario&) const = default;
};

struct Condition {
  MaskKind intrusion = MaskKind::Time;
  double size = 0.1;
  Scenario scenario;

  // LPC cannot restore random rectangles.
  bool applicable() const;
};

std::vector<Condition> make_grid(const std::vector<MaskKind>& intrusions,
                                 const std::vector<double>& sizes,
                                 const std::vector<Scenario>& scenarios);

struct EvalRecord {
  Condition condition;
  Summary stoi;
  std::optional<Summary> pesq;
  std::size_t failed = 0;  // segments dropped because a metric failed
  std::uint64_t seed = 0;
  bool not_applicable = false;
};

// Clean 16384-sample segments with stable ids "<utt>/<index>".
struct EvalDataset {
  std::vector<std::string> ids;
  std::vector<Waveform> segments;

  std::size_t size() const { return segments.size(); }
};

EvalDataset load_eval_segments(const std::vector<UtteranceRecord>& records,
                               std::size_t max_segments);

// Trained networks keyed by scenario name ("informed:<label>", "blind:<fill>").
struct ModelBank {
  std::map<std::string, const UNet*> models;
  const ChannelStats* stats = nullptr;

  const UNet* find(const Scenario& s) const;
};

struct EvalConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  PhaseOptions phase;
  LpcConfig lpc;
  NoiseParams noise;
  const PesqBackend* pesq = nullptr;
  // Informed outputs keep the observed bins and take only masked bins from
  // the network.
  bool composite = true;
  // Seed the phase search with the observed phase and keep it fixed on valid
  // bins (otherwise the phase is estimated from scratch).
  bool keep_valid_phase = true;
};

// Seed of the mask applied to one segment; scenario-independent.
std::uint64_t segment_mask_seed(std::uint64_t seed, const std::string& segment_id,
                                MaskKind intrusion, double size);

// The restored waveform for one segment under `cond`.
Waveform restore_segment(const Waveform& clean, const std::string& segment_id,
                         const Condition& cond, const ModelBank& models, const EvalConfig& cfg);

// Missing models raise ModelError before any work; LPC on random masks gives a
// not-applicable record.
EvalRecord run_condition(const Condition& cond, const EvalDataset& data, const ModelBank& models,
                         const EvalConfig& cfg);

// Records ordered by (intrusion, size, scenario). A condition that throws is
// logged to `errors` and recorded with n = 0.
std::vector<EvalRecord> run_grid(std::vector<Condition> conditions, const EvalDataset& data,
                                 const ModelBank& models, const EvalConfig& cfg,
                                 std::vector<std::string>* errors = nullptr);

void write_csv(std::ostream& out, const std::vector<EvalRecord>& records);
void write_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_csv(const std::filesystem::path& path);

// Single-file restoration.
struct InpaintRequest {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> mask_file;  // applied to every segment
  MaskSpec mask;                                   // used without a mask file
  std::optional<std::filesystem::path> reference;  // clean signal for scoring
  std::optional<std::filesystem::path> report;     // JSON report path
  FillMode blind_fill = FillMode::Zeros;
};

struct SegmentScore {
  std::size_t index = 0;
  double masked_fraction = 0.0;
  std::optional<double> stoi;
  std::optional<double> pesq;
};

struct InpaintReport {
  std::size_t segments = 0;
  std::vector<SegmentScore> scores;
};

// Needs `stats` when a model is given. The waveform is processed in
// 16384-sample segments; the tail is zero-padded and trimmed again.
InpaintReport inpaint_file(const InpaintRequest& req, const ChannelStats* stats,
                           const EvalConfig& cfg);

struct ReportFiles {
  std::string table;
  std::vector<std::filesystem::path> plots;
};

// Table with one row per (intrusion, size) and one column per scenario; the
// best STOI and PESQ of each row carry a '*'. Writes one SVG line plot per
// intrusion and metric into `plot_dir` when it is non-empty.
ReportFiles render_report(const std::vector<EvalRecord>& records,
                          const std::filesystem::path& plot_dir = {});

}  // namespace sinpaint
