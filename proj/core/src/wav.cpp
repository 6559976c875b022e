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

#include "sinpaint/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sinpaint/error.hpp"

namespace sinpaint {

namespace {

constexpr const char* kRemedy =
    " (convert with e.g. `sox in.flac -r 16000 -c 1 -b 16 out.wav`)";

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(name + ": not a RIFF/WAVE file" + kRemedy);
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size() && std::memcmp(hdr, "data", 4) != 0) break;
    if (std::memcmp(hdr, "fmt ", 4) == 0 && len >= 16) {
      const unsigned char* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == 0xFFFE && len >= 26) format = le16(f + 24);  // extensible
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) throw DataError(name + ": missing fmt or data chunk");
  if (format != 1 || bits != 16) {
    throw DataError(name + ": only 16-bit PCM is supported" + kRemedy);
  }
  if (channels != 1) throw DataError(name + ": expected mono audio" + kRemedy);
  if (rate != static_cast<std::uint32_t>(kSampleRate)) {
    throw DataError(name + ": sample rate " + std::to_string(rate) + " Hz, expected 16000" +
                    kRemedy);
  }
  Waveform w;
  w.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
    w.samples[i] = v / 32768.0;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * static_cast<std::size_t>(n));
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<std::uint32_t>(w.rate));
  put32(b, static_cast<std::uint32_t>(w.rate) * 2);
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, 2 * n);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(std::min(c * 32768.0, 32767.0)));
    put16(b, static_cast<std::uint16_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace sinpaint
