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

#include "sinpaint/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sinpaint/error.hpp"
#include "sinpaint/parallel.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/training.hpp"
#include "sinpaint/wav.hpp"

namespace sinpaint {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string size_text(double size) { return fixed(size, 2); }

int scenario_rank(const Scenario& s) { return static_cast<int>(s.kind); }

bool condition_less(const Condition& a, const Condition& b) {
  if (a.intrusion != b.intrusion) return a.intrusion < b.intrusion;
  if (a.size != b.size) return a.size < b.size;
  if (scenario_rank(a.scenario) != scenario_rank(b.scenario)) {
    return scenario_rank(a.scenario) < scenario_rank(b.scenario);
  }
  return a.scenario.variant < b.scenario.variant;
}

const ChannelStats& need_stats(const ModelBank& models, const Scenario& s) {
  if (models.stats == nullptr) {
    throw DataError("scenario " + s.name() + " needs channel statistics (--stats)");
  }
  return *models.stats;
}

// Corrupted magnitude and phase as the listener would receive them.
CorruptedInput corrupt_reference(const LogMagnitude& mag, const PhaseMatrix& phase,
                                 const Mask& mask, FillMode fill, const ModelBank& models,
                                 const Scenario& s, const EvalConfig& cfg, std::uint64_t seed) {
  if (fill == FillMode::Zeros || fill == FillMode::SpeechShaped) {
    return apply_mask(mag, phase, mask, fill, cfg.noise, seed);
  }
  const ChannelStats& stats = need_stats(models, s);
  CorruptedInput out = apply_mask(mag, phase, mask, FillMode::Zeros, cfg.noise, seed);
  out.magnitude = denormalize(
      corrupt_normalized(normalize(mag, stats), mask, fill, cfg.noise, &stats, seed), stats);
  return out;
}

Waveform synthesize(const LogMagnitude& restored, const CorruptedInput& observed,
                    const Mask& mask, const EvalConfig& cfg) {
  PhaseOptions opts = cfg.phase;
  if (cfg.keep_valid_phase) {
    opts.initial_phase = observed.phase;
    opts.fixed = mask.valid;
  }
  const PhaseResult ph = reconstruct_phase(restored, opts);
  return istft(restored, ph.phase);
}

Waveform run_model(const UNet& net, const LogMagnitude& mag, const PhaseMatrix& phase,
                   const Mask& mask, FillMode fill, bool informed, const ChannelStats& stats,
                   const EvalConfig& cfg, std::uint64_t seed) {
  const LogMagnitude clean_norm = normalize(mag, stats);
  const LogMagnitude input = corrupt_normalized(clean_norm, mask, fill, cfg.noise, &stats, seed);
  LogMagnitude out = inpaint(net, input, informed ? &mask.valid : nullptr);
  if (informed && cfg.composite) out.values = mask.valid.select(input.values, out.values);
  const CorruptedInput observed = apply_mask(mag, phase, mask, FillMode::Zeros, cfg.noise, seed);
  return synthesize(denormalize(out, stats), observed, mask, cfg);
}

// Samples touched by the masked frames: a frame starting at hop k spans two
// hops, so each gap reaches one hop further than its first-sample mapping.
std::vector<SampleInterval> frame_support(std::vector<SampleInterval> gaps, std::size_t length) {
  std::vector<SampleInterval> out;
  for (auto g : gaps) {
    g.end = std::min(g.end + static_cast<std::size_t>(kHopLength), length);
    if (!out.empty() && g.start <= out.back().end) {
      out.back().end = std::max(out.back().end, g.end);
    } else {
      out.push_back(g);
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string cell(const std::optional<Summary>& s, bool mean, int digits = 6) {
  if (!s || s->n == 0) return "NA";
  return fixed(mean ? s->mean : s->std, digits);
}

std::optional<double> parse_cell(const std::string& v) {
  if (v == "NA") return std::nullopt;
  return std::stod(v);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string Scenario::name() const {
  switch (kind) {
    case ScenarioKind::Gaps:
      return "gaps";
    case ScenarioKind::Noise:
      return variant.empty() || variant == "speech-shaped" ? "noise" : "noise:" + variant;
    case ScenarioKind::Lpc:
      return "lpc";
    case ScenarioKind::Informed:
      return "informed:" + variant;
    case ScenarioKind::Blind:
      return "blind:" + variant;
  }
  return "?";
}

Scenario Scenario::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto canonical_fill = [&](const std::string& v) {
    try {
      return to_string(parse_fill_mode(v));
    } catch (const UnsupportedError&) {
      throw ContractViolation("scenario '" + text + "': unknown fill '" + v + "'");
    }
  };
  if (head == "gaps" && tail.empty()) return {ScenarioKind::Gaps, ""};
  if (head == "lpc" && tail.empty()) return {ScenarioKind::Lpc, ""};
  if (head == "noise") {
    const std::string fill = tail.empty() ? "speech-shaped" : canonical_fill(tail);
    return {ScenarioKind::Noise, fill == "speech-shaped" ? "" : fill};
  }
  if (head == "informed") return {ScenarioKind::Informed, tail.empty() ? "deep-feature" : tail};
  if (head == "blind") return {ScenarioKind::Blind, canonical_fill(tail.empty() ? "additive" : tail)};
  throw ContractViolation("unknown scenario '" + text +
                          "' (gaps, noise[:fill], lpc, informed:<label>, blind:<fill>)");
}

FillMode Scenario::fill() const {
  switch (kind) {
    case ScenarioKind::Noise:
      return variant.empty() ? FillMode::SpeechShaped : parse_fill_mode(variant);
    case ScenarioKind::Blind:
      return parse_fill_mode(variant);
    default:
      return FillMode::Zeros;
  }
}

bool Condition::applicable() const {
  return !(scenario.kind == ScenarioKind::Lpc && intrusion == MaskKind::Random);
}

std::vector<Condition> make_grid(const std::vector<MaskKind>& intrusions,
                                 const std::vector<double>& sizes,
                                 const std::vector<Scenario>& scenarios) {
  std::vector<Condition> out;
  for (MaskKind k : intrusions) {
    for (double s : sizes) {
      for (const auto& sc : scenarios) out.push_back({k, s, sc});
    }
  }
  std::stable_sort(out.begin(), out.end(), condition_less);
  return out;
}

EvalDataset load_eval_segments(const std::vector<UtteranceRecord>& records,
                               std::size_t max_segments) {
  EvalDataset data;
  for (const auto& r : records) {
    const auto segs = segment(read_wav(r.audio_path));
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (max_segments != 0 && data.size() >= max_segments) return data;
      data.ids.push_back(r.id + "/" + std::to_string(i));
      data.segments.push_back(segs[i]);
    }
  }
  return data;
}

const UNet* ModelBank::find(const Scenario& s) const {
  const auto it = models.find(s.name());
  return it == models.end() ? nullptr : it->second;
}

std::uint64_t segment_mask_seed(std::uint64_t seed, const std::string& segment_id,
                                MaskKind intrusion, double size) {
  return derive_seed(seed, hash_string(segment_id),
                     hash_string(to_string(intrusion) + "@" + size_text(size)));
}

Waveform restore_segment(const Waveform& clean, const std::string& segment_id,
                         const Condition& cond, const ModelBank& models, const EvalConfig& cfg) {
  const ComplexSpectrogram spec = stft(clean);
  const LogMagnitude mag = log_magnitude(spec);
  const PhaseMatrix phase = phase_of(spec);
  const Mask mask = sample_mask(
      {cond.intrusion, cond.size, segment_mask_seed(cfg.seed, segment_id, cond.intrusion, cond.size)});
  const std::uint64_t fill_seed = derive_seed(mask.spec.seed, 3);
  const Scenario& s = cond.scenario;

  switch (s.kind) {
    case ScenarioKind::Gaps:
    case ScenarioKind::Noise: {
      const CorruptedInput c = corrupt_reference(mag, phase, mask, s.fill(), models, s, cfg, fill_seed);
      return istft(c.magnitude, c.phase);
    }
    case ScenarioKind::Lpc: {
      if (cond.intrusion == MaskKind::Random) {
        throw UnsupportedError("LPC restoration needs time gaps; random masks have none");
      }
      const CorruptedInput c = apply_mask(mag, phase, mask, FillMode::Zeros, cfg.noise, fill_seed);
      const Waveform gapped = istft(c.magnitude, c.phase);
      return inpaint_gaps(gapped, frame_support(mask_to_time_gaps(mask), gapped.size()), cfg.lpc);
    }
    case ScenarioKind::Informed:
    case ScenarioKind::Blind: {
      const UNet* net = models.find(s);
      if (net == nullptr) throw ModelError("no model loaded for scenario " + s.name());
      const bool informed = s.kind == ScenarioKind::Informed;
      if (net->config().mode != (informed ? UNetMode::Informed : UNetMode::Blind)) {
        throw ModelError("model for " + s.name() + " was trained in " +
                         to_string(net->config().mode) + " mode");
      }
      return run_model(*net, mag, phase, mask, informed ? FillMode::Zeros : s.fill(), informed,
                       need_stats(models, s), cfg, fill_seed);
    }
  }
  throw ContractViolation("unhandled scenario");
}

EvalRecord run_condition(const Condition& cond, const EvalDataset& data, const ModelBank& models,
                         const EvalConfig& cfg) {
  EvalRecord rec;
  rec.condition = cond;
  rec.seed = cfg.seed;
  if (!cond.applicable()) {
    rec.not_applicable = true;
    return rec;
  }
  if (cond.scenario.uses_model()) {
    if (models.find(cond.scenario) == nullptr) {
      throw ModelError("no model loaded for scenario " + cond.scenario.name());
    }
    need_stats(models, cond.scenario);
  }
  if (data.size() == 0) throw DataError("no evaluation segments");

  std::vector<std::optional<double>> stoi_v(data.size()), pesq_v(data.size());
  std::vector<char> failed(data.size(), 0);
  std::mutex first_error_mu;
  std::optional<std::string> first_error;
  parallel_for(data.size(), cfg.workers, [&](std::size_t i) {
    Waveform restored;
    try {
      restored = restore_segment(data.segments[i], data.ids[i], cond, models, cfg);
      stoi_v[i] = stoi(data.segments[i], restored);
    } catch (const ModelError&) {
      throw;
    } catch (const Error& e) {
      failed[i] = 1;
      std::lock_guard lock(first_error_mu);
      if (!first_error) first_error = data.ids[i] + ": " + e.what();
      return;
    }
    if (cfg.pesq != nullptr) {
      try {
        pesq_v[i] = cfg.pesq->score(data.segments[i], restored);
      } catch (const PesqError&) {
        failed[i] = 1;
      }
    }
  });

  std::vector<double> s, p;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (stoi_v[i]) s.push_back(*stoi_v[i]);
    if (pesq_v[i]) p.push_back(*pesq_v[i]);
    rec.failed += static_cast<std::size_t>(failed[i]);
  }
  if (s.empty()) {
    throw DataError("every segment failed for " + cond.scenario.name() +
                    (first_error ? " (" + *first_error + ")" : std::string()));
  }
  rec.stoi = summarize(s);
  if (!p.empty()) rec.pesq = summarize(p);
  return rec;
}

std::vector<EvalRecord> run_grid(std::vector<Condition> conditions, const EvalDataset& data,
                                 const ModelBank& models, const EvalConfig& cfg,
                                 std::vector<std::string>* errors) {
  std::stable_sort(conditions.begin(), conditions.end(), condition_less);
  std::vector<EvalRecord> out;
  for (const auto& c : conditions) {
    try {
      out.push_back(run_condition(c, data, models, cfg));
    } catch (const Error& e) {
      if (errors != nullptr) {
        errors->push_back(to_string(c.intrusion) + "/" + size_text(c.size) + "/" +
                          c.scenario.name() + ": " + e.what());
      }
      EvalRecord r;
      r.condition = c;
      r.seed = cfg.seed;
      out.push_back(r);
    }
  }
  return out;
}

void write_csv(std::ostream& out, const std::vector<EvalRecord>& records) {
  out << "intrusion,size,scenario,n,stoi_mean,stoi_std,pesq_mean,pesq_std,seed\n";
  for (const auto& r : records) {
    const std::optional<Summary> st =
        r.not_applicable || r.stoi.n == 0 ? std::nullopt : std::optional<Summary>(r.stoi);
    out << to_string(r.condition.intrusion) << ',' << size_text(r.condition.size) << ','
        << r.condition.scenario.name() << ',' << (st ? st->n : 0) << ',' << cell(st, true) << ','
        << cell(st, false) << ',' << cell(r.pesq, true) << ',' << cell(r.pesq, false) << ','
        << r.seed << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, records);
}

std::vector<EvalRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("intrusion,size,scenario,n,", 0) != 0) {
    throw DataError(path.string() + ": not a results CSV");
  }
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 9 fields");
    }
    try {
      EvalRecord r;
      r.condition.intrusion = parse_mask_kind(f[0]);
      r.condition.size = std::stod(f[1]);
      r.condition.scenario = Scenario::parse(f[2]);
      r.seed = std::stoull(f[8]);
      const auto sm = parse_cell(f[4]);
      if (sm) {
        r.stoi = {static_cast<std::size_t>(std::stoull(f[3])), *sm, parse_cell(f[5]).value_or(0.0)};
      }
      r.not_applicable = !r.condition.applicable();
      if (const auto pm = parse_cell(f[6])) {
        r.pesq = Summary{r.stoi.n, *pm, parse_cell(f[7]).value_or(0.0)};
      }
      out.push_back(r);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

InpaintReport inpaint_file(const InpaintRequest& req, const ChannelStats* stats,
                           const EvalConfig& cfg) {
  std::optional<UNet> net;
  if (req.model) {
    if (!std::filesystem::exists(*req.model)) {
      throw ModelError("model file not found: " + req.model->string());
    }
    net.emplace(UNet::load(*req.model));
    if (stats == nullptr) throw DataError("model inference needs channel statistics (--stats)");
  }
  std::optional<Mask> file_mask;
  if (req.mask_file) file_mask = load_mask(*req.mask_file);

  const Waveform input = read_wav(req.input);
  std::optional<Waveform> reference;
  if (req.reference) {
    reference = read_wav(*req.reference);
    if (reference->size() != input.size()) {
      throw DataError("reference and input differ in length (" +
                      std::to_string(reference->size()) + " vs " +
                      std::to_string(input.size()) + " samples)");
    }
  }

  const std::size_t n_seg = (input.size() + kSegmentSamples - 1) / kSegmentSamples;
  Waveform output;
  output.samples.assign(n_seg * kSegmentSamples, 0.0);
  InpaintReport report;
  report.segments = n_seg;

  for (std::size_t i = 0; i < n_seg; ++i) {
    auto cut = [&](const Waveform& w) {
      Waveform seg;
      seg.samples.assign(kSegmentSamples, 0.0);
      const std::size_t first = i * kSegmentSamples;
      const std::size_t len = std::min(kSegmentSamples, w.size() - first);
      std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(first), len, seg.samples.begin());
      return seg;
    };
    const Waveform seg = cut(input);
    const Mask mask = file_mask ? *file_mask
                                : sample_mask({req.mask.kind, req.mask.coverage,
                                               derive_seed(req.mask.seed, i)});
    const ComplexSpectrogram spec = stft(seg);
    const LogMagnitude mag = log_magnitude(spec);
    const PhaseMatrix phase = phase_of(spec);
    const std::uint64_t fill_seed = derive_seed(mask.spec.seed, 3);

    Waveform restored;
    if (net) {
      const bool informed = net->config().mode == UNetMode::Informed;
      restored = run_model(*net, mag, phase, mask, informed ? FillMode::Zeros : req.blind_fill,
                           informed, *stats, cfg, fill_seed);
    } else if (mask.masked_count() == 0) {
      restored = istft(spec);
    } else {
      const CorruptedInput c = apply_mask(mag, phase, mask, FillMode::Zeros, cfg.noise, fill_seed);
      const Waveform gapped = istft(c.magnitude, c.phase);
      restored = inpaint_gaps(gapped, frame_support(mask_to_time_gaps(mask), gapped.size()), cfg.lpc);
    }
    std::copy(restored.samples.begin(), restored.samples.end(),
              output.samples.begin() + static_cast<std::ptrdiff_t>(i * kSegmentSamples));

    SegmentScore score;
    score.index = i;
    score.masked_fraction = mask.masked_fraction();
    if (reference) {
      const Waveform ref = cut(*reference);
      try {
        score.stoi = stoi(ref, restored);
      } catch (const Error&) {
      }
      if (cfg.pesq != nullptr) {
        try {
          score.pesq = cfg.pesq->score(ref, restored);
        } catch (const PesqError&) {
        }
      }
    }
    report.scores.push_back(score);
  }

  output.samples.resize(input.size());
  if (req.output.has_parent_path()) std::filesystem::create_directories(req.output.parent_path());
  write_wav(req.output, output);

  if (req.report) {
    nlohmann::ordered_json j;
    j["input"] = req.input.string();
    j["output"] = req.output.string();
    j["model"] = req.model ? req.model->string() : "lpc";
    j["segments"] = report.segments;
    j["pesq_scale"] = cfg.pesq != nullptr ? cfg.pesq->scale() : "unavailable";
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : report.scores) {
      nlohmann::ordered_json e;
      e["index"] = s.index;
      e["masked_fraction"] = s.masked_fraction;
      e["stoi"] = s.stoi ? nlohmann::ordered_json(*s.stoi) : nlohmann::ordered_json(nullptr);
      e["pesq"] = s.pesq ? nlohmann::ordered_json(*s.pesq) : nlohmann::ordered_json(nullptr);
      arr.push_back(e);
    }
    j["scores"] = arr;
    std::ofstream out(*req.report);
    if (!out) throw DataError("cannot write " + req.report->string());
    out << j.dump(2) << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

void write_svg(const std::filesystem::path& path, const std::string& title,
               const std::string& ylabel, const std::vector<PlotSeries>& series) {
  const double W = 560, H = 360, L = 60, R = 150, T = 36, B = 48;
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) return;
  if (xmax - xmin < 1e-9) {
    xmin -= 0.05;
    xmax += 0.05;
  }
  const double pad = std::max(0.02, (ymax - ymin) * 0.1);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::fixed << std::setprecision(1);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << svg_escape(title) << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  std::set<double> xs;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) xs.insert(x);
  }
  for (double x : xs) {
    out << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << fixed(x * 100.0, 0) << "%</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
        << fixed(y, 2) << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << py(y) << "\" x2=\"" << W - R << "\" y2=\"" << py(y)
        << "\" stroke=\"#ddd\"/>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\">mask size</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << svg_escape(ylabel) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : series[i].points) pts += fixed(px(x), 1) + "," + fixed(py(y), 1) + " ";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts
        << "\"/>\n";
    for (auto [x, y] : series[i].points) {
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << svg_escape(series[i].label)
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

ReportFiles render_report(const std::vector<EvalRecord>& records,
                          const std::filesystem::path& plot_dir) {
  if (records.empty()) throw ContractViolation("render_report: no records");

  std::vector<Scenario> columns;
  for (const auto& r : records) {
    if (std::find(columns.begin(), columns.end(), r.condition.scenario) == columns.end()) {
      columns.push_back(r.condition.scenario);
    }
  }
  std::stable_sort(columns.begin(), columns.end(), [](const Scenario& a, const Scenario& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.variant < b.variant;
  });
  using RowKey = std::pair<MaskKind, double>;
  std::map<RowKey, std::map<std::string, const EvalRecord*>> rows;
  for (const auto& r : records) {
    rows[{r.condition.intrusion, r.condition.size}][r.condition.scenario.name()] = &r;
  }

  auto has_stoi = [](const EvalRecord* r) {
    return r != nullptr && !r->not_applicable && r->stoi.n > 0;
  };
  auto has_pesq = [&](const EvalRecord* r) { return has_stoi(r) && r->pesq && r->pesq->n > 0; };

  const std::size_t width = 16;
  std::ostringstream t;
  auto pad = [&](const std::string& s, std::size_t w) {
    return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
  };
  t << pad("intrusion", 10) << pad("size", 6);
  for (const auto& c : columns) t << pad(c.name(), width);
  t << "\n" << pad("", 16);
  for (std::size_t i = 0; i < columns.size(); ++i) t << pad("STOI   PESQ", width);
  t << "\n";
  for (const auto& [key, cells] : rows) {
    const EvalRecord* best_s = nullptr;
    const EvalRecord* best_p = nullptr;
    for (const auto& c : columns) {
      const auto it = cells.find(c.name());
      const EvalRecord* r = it == cells.end() ? nullptr : it->second;
      if (has_stoi(r) && (best_s == nullptr || r->stoi.mean > best_s->stoi.mean)) best_s = r;
      if (has_pesq(r) && (best_p == nullptr || r->pesq->mean > best_p->pesq->mean)) best_p = r;
    }
    t << pad(to_string(key.first), 10) << pad(fixed(key.second * 100.0, 0) + "%", 6);
    for (const auto& c : columns) {
      const auto it = cells.find(c.name());
      const EvalRecord* r = it == cells.end() ? nullptr : it->second;
      std::string text;
      if (r == nullptr) {
        text = "-";
      } else if (r->not_applicable) {
        text = "N/A";
      } else if (!has_stoi(r)) {
        text = "failed";
      } else {
        text = fixed(r->stoi.mean, 3) + (r == best_s ? "*" : " ");
        text += " " + (has_pesq(r) ? fixed(r->pesq->mean, 2) + (r == best_p ? "*" : "") : "NA");
      }
      t << pad(text, width);
    }
    t << "\n";
  }

  ReportFiles files;
  files.table = t.str();
  if (plot_dir.empty()) return files;
  std::filesystem::create_directories(plot_dir);
  std::set<MaskKind> kinds;
  for (const auto& [key, cells] : rows) kinds.insert(key.first);
  for (MaskKind k : kinds) {
    for (const bool pesq_plot : {false, true}) {
      std::vector<PlotSeries> series;
      for (const auto& c : columns) {
        PlotSeries s{c.name(), {}};
        for (const auto& [key, cells] : rows) {
          if (key.first != k) continue;
          const auto it = cells.find(c.name());
          if (it == cells.end()) continue;
          const EvalRecord* r = it->second;
          if (pesq_plot ? has_pesq(r) : has_stoi(r)) {
            s.points.emplace_back(key.second, pesq_plot ? r->pesq->mean : r->stoi.mean);
          }
        }
        if (!s.points.empty()) series.push_back(std::move(s));
      }
      if (series.empty()) continue;
      const std::string metric = pesq_plot ? "pesq" : "stoi";
      const auto path = plot_dir / (metric + "_" + to_string(k) + ".svg");
      write_svg(path, to_string(k) + " masks", pesq_plot ? "PESQ" : "STOI", series);
      files.plots.push_back(path);
    }
  }
  return files;
}

}  // namespace sinpaint
