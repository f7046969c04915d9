// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vaealign/errors.hpp"
#include "vaealign/featureio.hpp"

namespace vaealign {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& o, std::uint16_t v) {
  o.push_back(static_cast<std::uint8_t>(v));
  o.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& o, const char* tag) { o.insert(o.end(), tag, tag + 4); }

}  // namespace

Waveform load_waveform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open waveform");
  const std::vector<std::uint8_t> b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw UnsupportedFormat(path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint8_t* chunk = b.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size() && std::memcmp(chunk, "data", 4) != 0)
      throw UnsupportedFormat(path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw UnsupportedFormat(path.string() + ": short fmt chunk");
      format = le16(b.data() + body);
      channels = le16(b.data() + body + 2);
      rate = le32(b.data() + body + 4);
      bits = le16(b.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw UnsupportedFormat(path.string() + ": data before fmt");
      if (format != 1 || bits != 16) throw UnsupportedFormat(path.string() + ": only PCM16 is supported");
      if (channels != 1) throw UnsupportedFormat(path.string() + ": only mono is supported");
      if (rate != kSampleRate) throw UnsupportedFormat(path.string() + ": only 16 kHz is supported");
      const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(avail / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(le16(b.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw UnsupportedFormat(path.string() + ": no data chunk");
}

void write_waveform(const std::filesystem::path& path, std::span<const double> samples,
                    std::uint32_t sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> o;
  o.reserve(44 + data_bytes);
  put_tag(o, "RIFF");
  put32(o, 36 + data_bytes);
  put_tag(o, "WAVE");
  put_tag(o, "fmt ");
  put32(o, 16);
  put16(o, 1);
  put16(o, 1);
  put32(o, sample_rate);
  put32(o, sample_rate * 2);
  put16(o, 2);
  put16(o, 16);
  put_tag(o, "data");
  put32(o, data_bytes);
  for (double x : samples) {
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    const auto s = static_cast<std::int16_t>(q);
    put16(o, static_cast<std::uint16_t>(s));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(o.data()), static_cast<std::streamsize>(o.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace vaealign
