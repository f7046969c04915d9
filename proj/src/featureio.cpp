// SPDX-License-Identifier: Apache-2.0
#include "vaealign/featureio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "vaealign/errors.hpp"

namespace vaealign {

const char* to_string(ParseErrorKind kind) noexcept {
  switch (kind) {
    case ParseErrorKind::bad_magic: return "bad magic";
    case ParseErrorKind::bad_version: return "bad version";
    case ParseErrorKind::unsupported_dtype: return "unsupported dtype";
    case ParseErrorKind::bad_header: return "bad header";
    case ParseErrorKind::truncated_payload: return "truncated payload";
    case ParseErrorKind::shape_mismatch: return "shape/payload mismatch";
  }
  return "parse error";
}

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'T', 'F', '1'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kFixedHeader = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

std::uint64_t TensorFile::element_count() const noexcept {
  if (shape.empty()) return 0;
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorFile::validate() const {
  if (shape.empty()) throw ShapeError("tensor shape is empty");
  if (std::any_of(shape.begin(), shape.end(), [](std::uint64_t d) { return d == 0; }))
    throw ShapeError("tensor has a zero dimension");
  if (element_count() != data.size())
    throw ShapeError("tensor shape product " + std::to_string(element_count()) +
                     " != payload size " + std::to_string(data.size()));
}

std::vector<std::uint8_t> encode_tensor(const TensorFile& tensor) {
  if (tensor.dtype != DType::float32)
    throw FormatError(ParseErrorKind::unsupported_dtype,
                      "dtype code " + std::to_string(static_cast<int>(tensor.dtype)));
  tensor.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * tensor.shape.size() + 4 * tensor.data.size());
  for (std::uint8_t b : kMagic) out.push_back(b);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(DType::float32));
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
  for (auto d : tensor.shape) put_u64(out, d);
  for (float v : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

TensorFile decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError(ParseErrorKind::bad_magic, "expected FTF1");
  if (bytes.size() < kFixedHeader) throw FormatError(ParseErrorKind::bad_header, "header too short");
  if (bytes[4] != kVersion)
    throw FormatError(ParseErrorKind::bad_version, "version " + std::to_string(bytes[4]));
  if (bytes[5] != static_cast<std::uint8_t>(DType::float32))
    throw FormatError(ParseErrorKind::unsupported_dtype, "dtype code " + std::to_string(bytes[5]));
  if (bytes[6] != 0 || bytes[7] != 0)
    throw FormatError(ParseErrorKind::bad_header, "reserved bytes not zero");
  const std::uint32_t ndim = get_u32(bytes.data() + 8);
  if (ndim == 0) throw FormatError(ParseErrorKind::bad_header, "ndim is zero");
  const std::size_t dims_end = kFixedHeader + 8 * static_cast<std::size_t>(ndim);
  if (bytes.size() < dims_end) throw FormatError(ParseErrorKind::bad_header, "dims truncated");

  TensorFile t;
  t.shape.resize(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape[i] = get_u64(bytes.data() + kFixedHeader + 8 * i);
    if (t.shape[i] == 0) throw FormatError(ParseErrorKind::bad_header, "zero dimension");
    if (count > (std::uint64_t{1} << 62) / t.shape[i])
      throw FormatError(ParseErrorKind::bad_header, "element count overflows");
    count *= t.shape[i];
  }
  const std::size_t payload = bytes.size() - dims_end;
  if (payload < count * 4)
    throw FormatError(ParseErrorKind::truncated_payload,
                      "need " + std::to_string(count * 4) + " bytes, have " + std::to_string(payload));
  if (payload != count * 4)
    throw FormatError(ParseErrorKind::shape_mismatch,
                      std::to_string(payload - count * 4) + " trailing bytes");
  t.data.resize(count);
  const std::uint8_t* p = bytes.data() + dims_end;
  for (std::uint64_t i = 0; i < count; ++i) t.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return t;
}

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor) {
  const auto bytes = encode_tensor(tensor);
  write_all(path, bytes);
}

TensorFile read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return decode_tensor(bytes);
}

// ---------------------------------------------------------------------------

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open manifest");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.clip_id = j.at("clip_id").get<std::string>();
      e.waveform_path = j.at("waveform_path").get<std::string>();
      if (j.contains("teacher_path") && !j["teacher_path"].is_null())
        e.teacher_path = j["teacher_path"].get<std::string>();
      e.num_samples = j.at("num_samples").get<std::uint64_t>();
      e.sample_rate = j.at("sample_rate").get<std::uint32_t>();
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ostringstream os;
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["waveform_path"] = e.waveform_path.generic_string();
    if (e.teacher_path) j["teacher_path"] = e.teacher_path->generic_string();
    j["num_samples"] = e.num_samples;
    j["sample_rate"] = e.sample_rate;
    os << j.dump() << '\n';
  }
  const std::string s = os.str();
  write_all(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void validate_manifest(const DatasetManifest& manifest, bool check_files) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.clip_id).second) throw ValidationError("duplicate clip_id " + e.clip_id);
    if (e.sample_rate != kSampleRate)
      throw ValidationError("clip " + e.clip_id + ": sample_rate must be 16000");
    if (e.num_samples == 0) throw ValidationError("clip " + e.clip_id + ": num_samples is zero");
    if (check_files) {
      const auto wav = load_waveform(manifest.resolve(e.waveform_path));
      if (wav.samples.size() != e.num_samples)
        throw ValidationError("clip " + e.clip_id + ": waveform has " +
                              std::to_string(wav.samples.size()) + " samples, manifest says " +
                              std::to_string(e.num_samples));
      if (e.teacher_path && !std::filesystem::exists(manifest.resolve(*e.teacher_path)))
        throw IoError(manifest.resolve(*e.teacher_path).string(), "missing teacher features");
    }
  }
}

// ---------------------------------------------------------------------------

std::uint64_t SyntheticSpec::samples_per_clip() const {
  return static_cast<std::uint64_t>(std::llround(clip_seconds * kSampleRate));
}

void SyntheticSpec::validate() const {
  if (num_clips == 0) throw ValidationError("num_clips must be >= 1");
  if (!(clip_seconds > 0.0)) throw ValidationError("clip_seconds must be > 0");
  const double samples = clip_seconds * kSampleRate;
  if (std::fabs(samples - std::round(samples)) > 1e-6 || samples_per_clip() % 400 != 0)
    throw ValidationError("clip_seconds * 16000 must be a multiple of 400");
  if (min_harmonics < 1 || max_harmonics < min_harmonics)
    throw ValidationError("harmonic range must satisfy 1 <= min <= max");
  if (noise_floor < 0.0 || noise_floor > 0.5) throw ValidationError("noise_floor must be in [0, 0.5]");
}

std::vector<double> synthesize_clip(const SyntheticSpec& spec, std::uint32_t index) {
  // Each clip gets its own stream so clips are independent of generation order.
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    index, 0x5eedu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t n = spec.samples_per_clip();
  const double fs = kSampleRate;
  const std::uint32_t harmonics =
      spec.min_harmonics + static_cast<std::uint32_t>(uni(rng) * (spec.max_harmonics - spec.min_harmonics + 1));
  const std::uint32_t h_count = std::min(harmonics, spec.max_harmonics);
  const double f0 = 80.0 + 320.0 * uni(rng);
  const double vibrato_hz = 2.0 + 4.0 * uni(rng);
  const double vibrato_depth = 0.02 * uni(rng);

  std::vector<double> amp(h_count), phase(h_count);
  for (std::uint32_t k = 0; k < h_count; ++k) {
    amp[k] = (0.5 + 0.5 * uni(rng)) / (k + 1);
    phase[k] = 2.0 * std::numbers::pi * uni(rng);
  }

  EnvelopeFamily env = spec.envelope;
  if (env == EnvelopeFamily::mixed)
    env = uni(rng) < 0.5 ? EnvelopeFamily::raised_cosine : EnvelopeFamily::attack_decay;
  const double attack = 0.02 + 0.1 * uni(rng);
  const double decay = 1.0 + 3.0 * uni(rng);

  std::vector<double> x(n);
  double inst_phase = 0.0;
  const double duration = static_cast<double>(n) / fs;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + vibrato_depth * std::sin(2.0 * std::numbers::pi * vibrato_hz * t));
    inst_phase += 2.0 * std::numbers::pi * f / fs;
    double v = 0.0;
    for (std::uint32_t k = 0; k < h_count; ++k) {
      if (f0 * (k + 1) < fs / 2) v += amp[k] * std::sin((k + 1) * inst_phase + phase[k]);
    }
    double e = 1.0;
    if (env == EnvelopeFamily::raised_cosine) {
      e = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / n);
    } else {
      e = (1.0 - std::exp(-t / attack)) * std::exp(-decay * t / duration);
    }
    x[i] = e * v + spec.noise_floor * gauss(rng);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  const double target = 0.5 + 0.4 * uni(rng);
  if (peak > 0.0) {
    // Leave headroom for PCM16 rounding so the stored peak stays <= 0.9.
    const double scale = std::min(target, 0.9 - 1.0 / 32768.0) / peak;
    for (double& v : x) v *= scale;
  }
  return x;
}

DatasetManifest generate_synthetic_corpus(const SyntheticSpec& spec,
                                          const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "wav");
  DatasetManifest m;
  m.base_dir = out_dir;
  for (std::uint32_t i = 0; i < spec.num_clips; ++i) {
    std::ostringstream id;
    id << "clip_" << std::setw(5) << std::setfill('0') << i;
    const std::filesystem::path rel = std::filesystem::path("wav") / (id.str() + ".wav");
    const auto samples = synthesize_clip(spec, i);
    write_waveform(out_dir / rel, samples);
    m.entries.push_back({id.str(), rel, std::nullopt, samples.size(), kSampleRate});
  }
  write_manifest(out_dir / "manifest.jsonl", m);
  return m;
}

}  // namespace vaealign
