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

// Dataset ingestion: manifests over LibriSpeech-layout trees, word alignments,
// vocabulary construction, word-sample extraction and SpecAugment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sinpaint/dsp.hpp"

namespace sinpaint {

enum class Split { Train, Test, Dev };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct UtteranceRecord {
  std::string id;
  std::string audio_path;
  std::string transcript;
  Split split = Split::Train;

  bool operator==(const UtteranceRecord&) const = default;
};

struct WordSegment {
  std::string utterance_id;
  std::string word;
  double start = 0.0;  // seconds
  double end = 0.0;
};

struct ManifestResult {
  std::vector<UtteranceRecord> records;
  // One line per excluded utterance (missing audio or transcript).
  std::vector<std::string> warnings;
};

// Scans root/<speaker>/<chapter>/ for <speaker>-<chapter>.trans.txt files and
// the matching <id>.wav files. Records are sorted by id. Duplicate ids raise
// DataError.
ManifestResult build_manifest(const std::filesystem::path& root, Split split);

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& recs);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

void write_alignments(const std::filesystem::path& path, const std::vector<WordSegment>& segs);
std::vector<WordSegment> read_alignments(const std::filesystem::path& path);

// Lower-cased alphabetic tokens of a transcript; apostrophes are removed and
// any other non-letter splits a token.
std::vector<std::string> tokenize_transcript(const std::string& transcript);

class Vocabulary {
 public:
  static constexpr std::size_t kTargetSize = 1000;
  static constexpr std::size_t kMinLetters = 4;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  std::optional<int> index_of(const std::string& word) const;
  // Fewer than kTargetSize qualifying words were available.
  bool is_short() const { return words_.size() < kTargetSize; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

// Counts qualifying tokens (>= 4 letters) over Train-split transcripts and
// keeps the `limit` most frequent, ties broken alphabetically.
Vocabulary build_vocabulary(const std::vector<UtteranceRecord>& records,
                            std::size_t limit = Vocabulary::kTargetSize);

struct WordSample {
  LogMagnitude features;  // normalized, 128x128
  int label = 0;
  int offset = 0;       // first content frame
  int content_frames = 0;
};

// Cuts the aligned word out of `utterance`, computes its normalized
// log-magnitude and places it at a seed-determined offset inside 128 zero
// frames. Returns nullopt for words longer than one segment or missing from
// the vocabulary.
std::optional<WordSample> extract_word_sample(const Waveform& utterance, const WordSegment& ws,
                                              const Vocabulary& vocab, const ChannelStats& stats,
                                              std::uint64_t seed);

struct SpecAugmentParams {
  int max_freq_masks = 2;
  int max_freq_width = 15;
  int max_time_masks = 2;
  int max_time_width = 20;
};

LogMagnitude spec_augment(const LogMagnitude& m, std::uint64_t seed,
                          const SpecAugmentParams& params = {});

}  // namespace sinpaint
