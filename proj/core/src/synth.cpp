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

#include "sinpaint/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "sinpaint/corpus.hpp"
#include "sinpaint/error.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/wav.hpp"

namespace sinpaint {

namespace {

enum class PhoneClass { Vowel, Fricative, VoicedFricative, Plosive, VoicedPlosive, Nasal, Glide };

struct PhoneDef {
  const char* spelling;
  PhoneClass cls;
  std::array<double, 3> formants;  // Hz, adult male reference
  double noise_center;             // Hz, obstruents only
  double noise_bandwidth;
  double min_ms;
  double max_ms;
  double amplitude;
};

// clang-format off
constexpr std::array<PhoneDef, 31> kPhones{{
    {"ee", PhoneClass::Vowel, {270, 2290, 3010}, 0, 0, 90, 170, 1.0},
    {"i",  PhoneClass::Vowel, {390, 1990, 2550}, 0, 0, 60, 120, 1.0},
    {"e",  PhoneClass::Vowel, {530, 1840, 2480}, 0, 0, 70, 130, 1.0},
    {"a",  PhoneClass::Vowel, {660, 1720, 2410}, 0, 0, 90, 170, 1.0},
    {"o",  PhoneClass::Vowel, {730, 1090, 2440}, 0, 0, 90, 170, 1.0},
    {"aw", PhoneClass::Vowel, {570, 840, 2410},  0, 0, 90, 170, 1.0},
    {"oo", PhoneClass::Vowel, {300, 870, 2240},  0, 0, 80, 160, 1.0},
    {"u",  PhoneClass::Vowel, {440, 1020, 2240}, 0, 0, 60, 120, 1.0},
    {"uh", PhoneClass::Vowel, {640, 1190, 2390}, 0, 0, 60, 120, 1.0},
    {"er", PhoneClass::Vowel, {490, 1350, 1690}, 0, 0, 80, 150, 1.0},
    {"s",  PhoneClass::Fricative, {0, 0, 0}, 6000, 2500, 80, 140, 0.22},
    {"sh", PhoneClass::Fricative, {0, 0, 0}, 3300, 2000, 80, 140, 0.28},
    {"f",  PhoneClass::Fricative, {0, 0, 0}, 4500, 5000, 70, 120, 0.07},
    {"th", PhoneClass::Fricative, {0, 0, 0}, 5200, 4500, 60, 110, 0.05},
    {"h",  PhoneClass::Fricative, {0, 0, 0}, 1500, 3000, 50, 90, 0.10},
    {"z",  PhoneClass::VoicedFricative, {250, 1600, 2600}, 6000, 2500, 60, 110, 0.15},
    {"v",  PhoneClass::VoicedFricative, {250, 1200, 2300}, 4000, 4000, 50, 100, 0.08},
    {"p",  PhoneClass::Plosive, {0, 0, 0}, 900, 1200, 90, 140, 0.25},
    {"t",  PhoneClass::Plosive, {0, 0, 0}, 4200, 2500, 90, 140, 0.30},
    {"k",  PhoneClass::Plosive, {0, 0, 0}, 2200, 1200, 90, 140, 0.30},
    {"b",  PhoneClass::VoicedPlosive, {200, 900, 2200}, 900, 1200, 60, 100, 0.20},
    {"d",  PhoneClass::VoicedPlosive, {200, 1700, 2600}, 4000, 2500, 60, 100, 0.22},
    {"g",  PhoneClass::VoicedPlosive, {200, 2000, 2500}, 2200, 1200, 60, 100, 0.22},
    {"m",  PhoneClass::Nasal, {250, 1100, 2200}, 0, 0, 60, 110, 0.45},
    {"n",  PhoneClass::Nasal, {250, 1700, 2600}, 0, 0, 50, 100, 0.45},
    {"ng", PhoneClass::Nasal, {250, 2200, 2700}, 0, 0, 60, 100, 0.40},
    {"l",  PhoneClass::Glide, {360, 1300, 2800}, 0, 0, 50, 90, 0.60},
    {"r",  PhoneClass::Glide, {420, 1300, 1600}, 0, 0, 50, 90, 0.60},
    {"w",  PhoneClass::Glide, {300, 700, 2200},  0, 0, 40, 80, 0.55},
    {"y",  PhoneClass::Glide, {280, 2200, 3000}, 0, 0, 40, 80, 0.55},
    {"j",  PhoneClass::VoicedFricative, {250, 1900, 2600}, 3000, 2000, 60, 100, 0.15},
}};
// clang-format on

constexpr int kFirstConsonant = 10;

bool is_vowel(int p) { return kPhones[p].cls == PhoneClass::Vowel; }

int pick(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int phone_index(const char* spelling) {
  for (int i = 0; i < static_cast<int>(kPhones.size()); ++i) {
    if (std::string_view(kPhones[i].spelling) == spelling) return i;
  }
  return 0;
}

std::vector<int> random_syllable(Rng& rng) {
  static const std::vector<std::vector<const char*>> clusters = {
      {"s", "t"}, {"s", "p"}, {"s", "k"}, {"p", "l"}, {"p", "r"}, {"t", "r"},
      {"k", "l"}, {"k", "r"}, {"b", "r"}, {"g", "r"}, {"f", "l"}, {"d", "r"}};
  std::vector<int> out;
  const double r = uniform(rng, 0.0, 1.0);
  if (r < 0.15) {
    for (const char* c : clusters[pick(rng, 0, static_cast<int>(clusters.size()) - 1)]) {
      out.push_back(phone_index(c));
    }
  } else if (r < 0.9) {
    out.push_back(pick(rng, kFirstConsonant, static_cast<int>(kPhones.size()) - 1));
  }
  out.push_back(pick(rng, 0, kFirstConsonant - 1));
  if (uniform(rng, 0.0, 1.0) < 0.45) {
    int coda;
    do {
      coda = pick(rng, kFirstConsonant, static_cast<int>(kPhones.size()) - 1);
    } while (kPhones[coda].cls == PhoneClass::Glide || coda == phone_index("h"));
    out.push_back(coda);
  }
  return out;
}

// Klatt-style two-pole resonator with unity gain at DC.
class Resonator {
 public:
  void set(double freq, double bandwidth) {
    freq = std::min(freq, 0.45 * kSampleRate);
    const double r = std::exp(-std::numbers::pi * bandwidth / kSampleRate);
    b1_ = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / kSampleRate);
    b2_ = -r * r;
    a0_ = 1.0 - b1_ - b2_;
  }
  double operator()(double x) {
    const double y = a0_ * x + b1_ * y1_ + b2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a0_ = 1.0, b1_ = 0.0, b2_ = 0.0, y1_ = 0.0, y2_ = 0.0;
};

// Second-order band-pass (constant peak gain) for frication noise.
class BandPass {
 public:
  void set(double center, double bandwidth) {
    center = std::min(center, 0.45 * kSampleRate);
    const double w0 = 2.0 * std::numbers::pi * center / kSampleRate;
    const double q = std::max(center / std::max(bandwidth, 1.0), 0.3);
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_ = 0, b2_ = 0, a1_ = 0, a2_ = 0, x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// One rendered stretch with constant articulatory targets.
struct Target {
  std::size_t length = 0;
  std::array<double, 3> formants{500, 1500, 2500};
  double voicing = 0.0;
  double noise = 0.0;
  double noise_center = 4000.0;
  double noise_bandwidth = 3000.0;
  bool aspirated = false;  // noise routed through the vocal-tract filter
  int word = -1;           // index into the sentence, -1 for silence
};

// Rosenberg glottal pulse (open 40%, closing 16% of the period).
double glottal_pulse(double phase) {
  constexpr double open = 0.40, close = 0.16;
  if (phase < open) return 0.5 * (1.0 - std::cos(std::numbers::pi * phase / open));
  if (phase < open + close) return std::cos(std::numbers::pi * (phase - open) / (2.0 * close));
  return 0.0;
}

}  // namespace

SpeechSynthesizer::SpeechSynthesizer(std::uint64_t lexicon_seed, int lexicon_size) {
  Rng rng(lexicon_seed);
  std::set<std::string> seen;
  while (static_cast<int>(spellings_.size()) < lexicon_size) {
    const double r = uniform(rng, 0.0, 1.0);
    const int syllables = r < 0.35 ? 1 : (r < 0.8 ? 2 : 3);
    std::vector<int> phones;
    for (int s = 0; s < syllables; ++s) {
      auto syl = random_syllable(rng);
      phones.insert(phones.end(), syl.begin(), syl.end());
    }
    std::string spelling;
    for (int p : phones) spelling += kPhones[p].spelling;
    if (!seen.insert(spelling).second) continue;
    pronunciations_.push_back(std::move(phones));
    spellings_.push_back(std::move(spelling));
  }
  double total = 0.0;
  for (int i = 0; i < lexicon_size; ++i) {
    total += 1.0 / (i + 2.7);
    zipf_cdf_.push_back(total);
  }
  for (double& v : zipf_cdf_) v /= total;
}

SpeakerProfile SpeechSynthesizer::random_speaker(std::uint64_t seed, bool female) {
  Rng rng(seed);
  SpeakerProfile p;
  p.f0_hz = female ? uniform(rng, 165.0, 240.0) : uniform(rng, 90.0, 140.0);
  p.formant_scale = female ? uniform(rng, 1.08, 1.2) : uniform(rng, 0.92, 1.04);
  p.rate = uniform(rng, 0.85, 1.2);
  p.breathiness = uniform(rng, 0.02, 0.12);
  return p;
}

std::vector<int> SpeechSynthesizer::random_sentence(std::uint64_t seed) const {
  Rng rng(seed);
  const int n = pick(rng, 6, 24);
  std::vector<int> words;
  for (int i = 0; i < n; ++i) {
    const double u = uniform(rng, 0.0, 1.0);
    const auto it = std::lower_bound(zipf_cdf_.begin(), zipf_cdf_.end(), u);
    words.push_back(static_cast<int>(std::min<std::ptrdiff_t>(
        it - zipf_cdf_.begin(), static_cast<std::ptrdiff_t>(zipf_cdf_.size()) - 1)));
  }
  return words;
}

Waveform SpeechSynthesizer::speak(const std::vector<int>& words, const SpeakerProfile& speaker,
                                  std::uint64_t seed, std::vector<WordTiming>* timings) const {
  Rng rng(seed);
  const auto ms = [&](double v) {
    return static_cast<std::size_t>(v * 1e-3 * kSampleRate / speaker.rate);
  };

  // Build the articulatory target sequence.
  std::vector<Target> targets;
  auto silence = [&](double lo_ms, double hi_ms) {
    Target t;
    t.length = ms(uniform(rng, lo_ms, hi_ms));
    targets.push_back(t);
  };
  silence(120.0, 400.0);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& phones = pronunciations_.at(static_cast<std::size_t>(words[w]));
    const double emphasis = uniform(rng, 0.7, 1.15);
    bool first_vowel = true;
    for (std::size_t k = 0; k < phones.size(); ++k) {
      const PhoneDef& def = kPhones[phones[k]];
      // Obstruents borrow formants from the nearest vowel.
      std::array<double, 3> vowel_formants{500, 1500, 2500};
      for (std::size_t j = k; j < phones.size(); ++j) {
        if (is_vowel(phones[j])) {
          vowel_formants = kPhones[phones[j]].formants;
          break;
        }
      }
      Target t;
      t.word = static_cast<int>(w);
      double dur = uniform(rng, def.min_ms, def.max_ms);
      if (def.cls == PhoneClass::Vowel && first_vowel) dur *= 1.25;
      t.length = ms(dur);
      const double stress = (def.cls == PhoneClass::Vowel && first_vowel) ? 1.0 : 0.75;
      switch (def.cls) {
        case PhoneClass::Vowel:
          t.formants = def.formants;
          t.voicing = emphasis * stress * def.amplitude;
          first_vowel = false;
          break;
        case PhoneClass::Nasal:
        case PhoneClass::Glide:
          t.formants = def.formants;
          t.voicing = emphasis * def.amplitude;
          break;
        case PhoneClass::Fricative:
          t.formants = vowel_formants;
          t.noise = emphasis * def.amplitude;
          t.noise_center = def.noise_center;
          t.noise_bandwidth = def.noise_bandwidth;
          t.aspirated = std::string_view(def.spelling) == "h";
          break;
        case PhoneClass::VoicedFricative:
          t.formants = def.formants;
          t.voicing = 0.25 * emphasis;
          t.noise = emphasis * def.amplitude;
          t.noise_center = def.noise_center;
          t.noise_bandwidth = def.noise_bandwidth;
          break;
        case PhoneClass::Plosive:
        case PhoneClass::VoicedPlosive: {
          const bool voiced = def.cls == PhoneClass::VoicedPlosive;
          Target closure = t;
          closure.length = ms(dur * 0.6);
          closure.formants = voiced ? def.formants : vowel_formants;
          closure.voicing = voiced ? 0.12 : 0.0;
          targets.push_back(closure);
          Target burst = t;
          burst.length = ms(voiced ? 12.0 : 18.0);
          burst.formants = vowel_formants;
          burst.noise = 1.6 * emphasis * def.amplitude;
          burst.noise_center = def.noise_center;
          burst.noise_bandwidth = def.noise_bandwidth;
          targets.push_back(burst);
          t.length = ms(voiced ? 10.0 : dur * 0.35);
          t.formants = vowel_formants;
          t.noise = voiced ? 0.0 : 0.12 * emphasis;
          t.aspirated = true;
          t.voicing = voiced ? 0.3 : 0.0;
          break;
        }
      }
      targets.push_back(t);
    }
    if (w + 1 < words.size() && uniform(rng, 0.0, 1.0) < 0.18) silence(80.0, 320.0);
  }
  silence(120.0, 400.0);

  std::size_t total = 0;
  for (const auto& t : targets) total += t.length;

  std::vector<double> out(total, 0.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::array<Resonator, 5> tract;
  BandPass frication;
  Resonator aspiration_lp;
  aspiration_lp.set(0.0, 3000.0);

  std::array<double, 3> formants = targets.front().formants;
  double voicing = 0.0, noise = 0.0;
  double phase = 0.0, prev_pulse = 0.0, f0_drift = 0.0;
  const double scale = speaker.formant_scale;
  const double form_alpha = 1.0 - std::exp(-1.0 / (0.012 * kSampleRate));
  const double amp_alpha = 1.0 - std::exp(-1.0 / (0.006 * kSampleRate));
  const double utterance_seconds = static_cast<double>(total) / kSampleRate;

  std::vector<WordTiming> word_times(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) word_times[w].word = words[w];
  std::vector<bool> word_seen(words.size(), false);
  std::vector<double> word_accent(words.size());
  for (auto& a : word_accent) a = uniform(rng, -0.08, 0.22);

  std::size_t n = 0;
  for (const auto& t : targets) {
    if (t.word >= 0) {
      auto& wt = word_times[static_cast<std::size_t>(t.word)];
      if (!word_seen[static_cast<std::size_t>(t.word)]) {
        wt.start = static_cast<double>(n) / kSampleRate;
        word_seen[static_cast<std::size_t>(t.word)] = true;
      }
      wt.end = static_cast<double>(n + t.length) / kSampleRate;
    }
    const double accent = t.word >= 0 ? word_accent[static_cast<std::size_t>(t.word)] : 0.0;
    frication.set(t.noise_center, t.noise_bandwidth);
    for (std::size_t i = 0; i < t.length; ++i, ++n) {
      for (int k = 0; k < 3; ++k) formants[k] += form_alpha * (t.formants[k] - formants[k]);
      voicing += amp_alpha * (t.voicing - voicing);
      noise += amp_alpha * (t.noise - noise);

      const double time = static_cast<double>(n) / kSampleRate;
      f0_drift = 0.9995 * f0_drift + 0.0005 * gauss(rng);
      const double f0 = speaker.f0_hz * (1.0 + accent) * (1.0 - 0.15 * time / utterance_seconds) *
                        (1.0 + 2.0 * f0_drift);
      phase += f0 / kSampleRate;
      if (phase >= 1.0) phase -= 1.0;
      const double pulse = glottal_pulse(phase);
      double source = (pulse - prev_pulse) * 6.0;
      prev_pulse = pulse;
      source += speaker.breathiness * pulse * gauss(rng);

      tract[0].set(formants[0] * scale, 70.0);
      tract[1].set(formants[1] * scale, 100.0);
      tract[2].set(formants[2] * scale, 140.0);
      tract[3].set(3500.0 * scale, 220.0);
      tract[4].set(4500.0 * scale, 300.0);

      const double white = gauss(rng);
      double excitation = voicing * source;
      if (t.aspirated) excitation += 0.6 * noise * aspiration_lp(white);
      double y = excitation;
      for (auto& r : tract) y = r(y);
      if (!t.aspirated) y += noise * frication(white);
      out[n] = y;
    }
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? uniform(rng, 0.3, 0.6) / peak : 0.0;
  const double floor = 3e-5;
  for (double& v : out) v = v * gain + floor * gauss(rng);

  if (timings) *timings = std::move(word_times);
  return Waveform{std::move(out), kSampleRate};
}

void write_synthetic_corpus(const std::filesystem::path& root,
                            const SyntheticCorpusOptions& opts) {
  namespace fs = std::filesystem;
  const SpeechSynthesizer synth(opts.seed, opts.lexicon_size);
  struct SplitPlan {
    const char* dir;
    int speakers;
    int utterances;
    int speaker_base;
  };
  const std::array<SplitPlan, 3> plans{{
      {"train-clean-100", opts.train_speakers, opts.train_utterances_per_chapter, 100},
      {"dev-clean", opts.dev_speakers, opts.eval_utterances_per_chapter, 500},
      {"test-clean", opts.test_speakers, opts.eval_utterances_per_chapter, 800},
  }};
  for (const auto& plan : plans) {
    std::vector<WordSegment> alignments;
    for (int s = 0; s < plan.speakers; ++s) {
      const int speaker_id = plan.speaker_base + s * 7;
      const SpeakerProfile speaker = SpeechSynthesizer::random_speaker(
          derive_seed(opts.seed, static_cast<std::uint64_t>(speaker_id)), s % 2 == 1);
      for (int c = 0; c < opts.chapters_per_speaker; ++c) {
        const int chapter_id = 1000 + speaker_id * 3 + c;
        const fs::path dir = root / plan.dir / std::to_string(speaker_id) /
                             std::to_string(chapter_id);
        fs::create_directories(dir);
        std::ofstream trans(dir / (std::to_string(speaker_id) + "-" +
                                   std::to_string(chapter_id) + ".trans.txt"));
        for (int u = 0; u < plan.utterances; ++u) {
          std::ostringstream id;
          id << speaker_id << '-' << chapter_id << '-' << std::setw(4) << std::setfill('0') << u;
          const std::uint64_t utt_seed =
              derive_seed(opts.seed, hash_string(id.str()));
          const auto words = synth.random_sentence(utt_seed);
          std::vector<WordTiming> timing;
          const Waveform w = synth.speak(words, speaker, derive_seed(utt_seed, 1), &timing);
          write_wav(dir / (id.str() + ".wav"), w);
          trans << id.str();
          for (int word : words) {
            std::string up = synth.lexicon()[static_cast<std::size_t>(word)];
            std::transform(up.begin(), up.end(), up.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
            trans << ' ' << up;
          }
          trans << '\n';
          for (const auto& t : timing) {
            alignments.push_back(
                {id.str(), synth.lexicon()[static_cast<std::size_t>(t.word)], t.start, t.end});
          }
        }
      }
    }
    write_alignments(root / (std::string(plan.dir) + ".alignments.jsonl"), alignments);
  }
}

}  // namespace sinpaint
