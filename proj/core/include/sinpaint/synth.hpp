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

// Formant synthesizer producing speech-like utterances over a pseudo-English
// lexicon. Used to build a LibriSpeech-layout surrogate corpus (with exact word
// alignments) when the real corpus is not available.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sinpaint/dsp.hpp"

namespace sinpaint {

struct SpeakerProfile {
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double rate = 1.0;  // >1 speaks faster
  double breathiness = 0.05;
};

struct WordTiming {
  int word = 0;
  double start = 0.0;  // seconds
  double end = 0.0;
};

class SpeechSynthesizer {
 public:
  SpeechSynthesizer(std::uint64_t lexicon_seed, int lexicon_size);

  const std::vector<std::string>& lexicon() const { return spellings_; }

  // Draws a speaker profile; `female` selects the higher-pitched range.
  static SpeakerProfile random_speaker(std::uint64_t seed, bool female);

  // Zipf-distributed word ids for one sentence.
  std::vector<int> random_sentence(std::uint64_t seed) const;

  Waveform speak(const std::vector<int>& words, const SpeakerProfile& speaker,
                 std::uint64_t seed, std::vector<WordTiming>* timings = nullptr) const;

 private:
  std::vector<std::vector<int>> pronunciations_;
  std::vector<std::string> spellings_;
  std::vector<double> zipf_cdf_;
};

struct SyntheticCorpusOptions {
  int lexicon_size = 1200;
  std::uint64_t seed = 2020;
  int train_speakers = 24;
  int dev_speakers = 8;
  int test_speakers = 6;
  int chapters_per_speaker = 2;
  int train_utterances_per_chapter = 8;
  int eval_utterances_per_chapter = 4;
};

// Writes root/{train-clean-100,dev-clean,test-clean}/speaker/chapter/*.wav with
// LibriSpeech-style transcripts, plus root/<split>.alignments.jsonl.
void write_synthetic_corpus(const std::filesystem::path& root,
                            const SyntheticCorpusOptions& opts);

}  // namespace sinpaint
