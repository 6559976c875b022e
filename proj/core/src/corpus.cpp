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

#include "sinpaint/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sinpaint/error.hpp"
#include "sinpaint/rng.hpp"
#include "sinpaint/wav.hpp"

namespace sinpaint {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Dev: return "dev";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "dev") return Split::Dev;
  throw DataError("unknown split '" + s + "' (expected train, test or dev)");
}

ManifestResult build_manifest(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root.string());
  ManifestResult result;
  std::set<std::string> ids;
  std::vector<fs::path> transcripts;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.ends_with(".trans.txt")) transcripts.push_back(entry.path());
  }
  std::sort(transcripts.begin(), transcripts.end());

  std::set<std::string> transcribed;
  for (const auto& tpath : transcripts) {
    std::ifstream in(tpath);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto space = line.find(' ');
      const std::string id = line.substr(0, space);
      const std::string text = space == std::string::npos ? "" : line.substr(space + 1);
      const fs::path audio = tpath.parent_path() / (id + ".wav");
      transcribed.insert(id);
      if (!fs::exists(audio)) {
        result.warnings.push_back(id + ": transcript present but audio missing (" +
                                  audio.string() + ")");
        continue;
      }
      if (!ids.insert(id).second) throw DataError("duplicate utterance id " + id);
      result.records.push_back({id, audio.string(), text, split});
    }
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".wav") continue;
    const std::string id = entry.path().stem().string();
    if (!transcribed.contains(id)) {
      result.warnings.push_back(id + ": audio present but no transcript line");
    }
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(result.warnings.begin(), result.warnings.end());
  return result;
}

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& r : recs) {
    out << json{{"id", r.id}, {"audio", r.audio_path}, {"transcript", r.transcript},
                {"split", to_string(r.split)}}
               .dump()
        << '\n';
  }
}

std::vector<UtteranceRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<UtteranceRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      UtteranceRecord r{j.at("id").get<std::string>(), j.at("audio").get<std::string>(),
                        j.at("transcript").get<std::string>(),
                        parse_split(j.at("split").get<std::string>())};
      if (!ids.insert(r.id).second) throw DataError("duplicate utterance id " + r.id);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_alignments(const fs::path& path, const std::vector<WordSegment>& segs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write alignments " + path.string());
  for (const auto& s : segs) {
    out << json{{"utterance", s.utterance_id}, {"word", s.word}, {"start", s.start},
                {"end", s.end}}
               .dump()
        << '\n';
  }
}

std::vector<WordSegment> read_alignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open alignments " + path.string());
  std::vector<WordSegment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      WordSegment s{j.at("utterance").get<std::string>(), j.at("word").get<std::string>(),
                    j.at("start").get<double>(), j.at("end").get<double>()};
      if (!(s.start >= 0.0 && s.start < s.end)) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": start must precede end");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> tokenize_transcript(const std::string& transcript) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : transcript) {
    const auto ch = static_cast<unsigned char>(raw);
    if (ch == '\'') continue;
    if (std::isalpha(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary contains duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::index_of(const std::string& word) const {
  const auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

Vocabulary build_vocabulary(const std::vector<UtteranceRecord>& records, std::size_t limit) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    for (auto& tok : tokenize_transcript(r.transcript)) {
      if (tok.size() >= Vocabulary::kMinLetters) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is alphabetical, so a stable sort by count keeps ties
  // in alphabetical order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > limit) ranked.resize(limit);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, c] : ranked) words.push_back(w);
  return Vocabulary(std::move(words));
}

std::optional<WordSample> extract_word_sample(const Waveform& utterance, const WordSegment& ws,
                                              const Vocabulary& vocab, const ChannelStats& stats,
                                              std::uint64_t seed) {
  const auto label = vocab.index_of(ws.word);
  if (!label) return std::nullopt;
  const auto first = static_cast<std::size_t>(std::llround(ws.start * kSampleRate));
  const auto last = std::min(static_cast<std::size_t>(std::llround(ws.end * kSampleRate)),
                             utterance.size());
  if (first >= last) return std::nullopt;
  const std::size_t length = last - first;
  if (length > kSegmentSamples) return std::nullopt;

  Waveform word;
  word.samples.assign(kSegmentSamples, 0.0);
  std::copy_n(utterance.samples.begin() + static_cast<std::ptrdiff_t>(first), length,
              word.samples.begin());
  const LogMagnitude full = normalize(log_magnitude(stft(word)), stats);

  const int frames = std::clamp(
      static_cast<int>((length + kHopLength - 1) / kHopLength), 1, kNumFrames);
  Rng rng(seed);
  const int offset = std::uniform_int_distribution<int>(0, kNumFrames - frames)(rng);

  WordSample sample;
  sample.features = LogMagnitude{TfMatrix::Zero(kNumBins, kNumFrames), true};
  sample.features.values.middleCols(offset, frames) = full.values.leftCols(frames);
  sample.label = *label;
  sample.offset = offset;
  sample.content_frames = frames;
  return sample;
}

LogMagnitude spec_augment(const LogMagnitude& m, std::uint64_t seed,
                          const SpecAugmentParams& params) {
  if (!m.normalized) throw ContractViolation("spec_augment: input must be normalized");
  LogMagnitude out = m;
  Rng rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const auto rows = static_cast<int>(m.values.rows());
  const auto cols = static_cast<int>(m.values.cols());
  const int freq_masks = uniform(0, params.max_freq_masks);
  for (int i = 0; i < freq_masks; ++i) {
    const int width = uniform(0, params.max_freq_width);
    const int start = uniform(0, rows - width);
    out.values.middleRows(start, width).setZero();
  }
  const int time_masks = uniform(0, params.max_time_masks);
  for (int i = 0; i < time_masks; ++i) {
    const int width = uniform(0, params.max_time_width);
    const int start = uniform(0, cols - width);
    out.values.middleCols(start, width).setZero();
  }
  return out;
}

}  // namespace sinpaint
