// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sofi/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace sofi {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path);

  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw DataError(path + ": not a RIFF file");
  read_le<std::uint32_t>(in);
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw DataError(path + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<char> data;

  while (in.read(tag, 4)) {
    const std::uint32_t size = read_le<std::uint32_t>(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      sample_rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (!in) throw DataError(path + ": truncated data chunk");
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }

  if (!have_fmt || data.empty()) throw DataError(path + ": missing fmt or data chunk");
  if (format == kFormatExtensible)
    throw DataError(path + ": WAVE_FORMAT_EXTENSIBLE unsupported; convert to plain 16-bit PCM");
  if (channels != 1)
    throw DataError(path + ": " + std::to_string(channels) +
                    " channels; only mono is supported (downmix first)");

  AudioBuffer out;
  out.sample_rate = static_cast<int>(sample_rate);
  if (format == kFormatPcm && bits == 16) {
    const size_t n = data.size() / 2;
    out.samples.resize(static_cast<Index>(n));
    for (size_t i = 0; i < n; ++i) {
      const auto lo = static_cast<unsigned char>(data[2 * i]);
      const auto hi = static_cast<unsigned char>(data[2 * i + 1]);
      const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo) |
                                               (static_cast<std::uint16_t>(hi) << 8));
      out.samples(static_cast<Index>(i)) = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t n = data.size() / 4;
    out.samples.resize(static_cast<Index>(n));
    for (size_t i = 0; i < n; ++i) {
      std::uint32_t raw = 0;
      for (size_t b = 0; b < 4; ++b)
        raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[4 * i + b])) << (8 * b);
      float f;
      std::memcpy(&f, &raw, 4);
      out.samples(static_cast<Index>(i)) = static_cast<double>(f);
    }
  } else {
    throw DataError(path + ": unsupported format (need 16-bit PCM or 32-bit float, got format " +
                    std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }
  out.validate();
  return out;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
  audio.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);

  const auto n = static_cast<std::uint32_t>(audio.size());
  const std::uint32_t data_bytes = n * 2;

  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, kFormatPcm);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (Index i = 0; i < audio.size(); ++i) {
    const double clipped = std::clamp(audio.samples(i), -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lrint(clipped * 32768.0));
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
  }
}

}  // namespace sofi
