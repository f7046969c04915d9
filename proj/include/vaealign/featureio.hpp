// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vaealign {

inline constexpr std::uint32_t kSampleRate = 16000;

// ---------------------------------------------------------------------------
// Tensor files (.ftf)
//
//   0..3   magic "FTF1"
//   4      version 0x01
//   5      dtype code (0x01 = float32)
//   6..7   reserved, zero
//   8..11  ndim, u32 LE
//   then   ndim x u64 LE dims
//   then   row-major float32 LE payload
// ---------------------------------------------------------------------------

enum class DType : std::uint8_t { float32 = 0x01 };

struct TensorFile {
  DType dtype = DType::float32;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const noexcept;
  // Throws ShapeError when shape is empty, has a zero dim, or disagrees with data.
  void validate() const;
  bool operator==(const TensorFile&) const = default;
};

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor(const std::filesystem::path& path);

// Serialized bytes of a tensor, exactly as write_tensor lays them out.
std::vector<std::uint8_t> encode_tensor(const TensorFile& tensor);
TensorFile decode_tensor(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Dataset manifests: JSON lines, one entry per clip. Relative paths resolve
// against the manifest's own directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string clip_id;
  std::filesystem::path waveform_path;
  std::optional<std::filesystem::path> teacher_path;
  std::uint64_t num_samples = 0;
  std::uint32_t sample_rate = kSampleRate;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Checks unique ids and the 16 kHz rate; with check_files, also that every
// waveform exists with num_samples samples. Teacher frame counts are checked
// by the teacher adapter, which knows the teacher rate.
void validate_manifest(const DatasetManifest& manifest, bool check_files);

// ---------------------------------------------------------------------------
// Waveforms: PCM16 mono 16 kHz WAV.
// ---------------------------------------------------------------------------

struct Waveform {
  std::vector<double> samples;
  std::uint32_t sample_rate = kSampleRate;
};

Waveform load_waveform(const std::filesystem::path& path);
// Samples are clipped to [-1, 1) and quantized as round(x * 32768).
void write_waveform(const std::filesystem::path& path, std::span<const double> samples,
                    std::uint32_t sample_rate = kSampleRate);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

enum class EnvelopeFamily { raised_cosine, attack_decay, mixed };

struct SyntheticSpec {
  std::uint32_t num_clips = 200;
  double clip_seconds = 1.0;
  std::uint64_t seed = 0;
  std::uint32_t min_harmonics = 1;
  std::uint32_t max_harmonics = 4;
  double noise_floor = 0.01;
  EnvelopeFamily envelope = EnvelopeFamily::mixed;

  std::uint64_t samples_per_clip() const;
  void validate() const;
};

// Writes <out_dir>/wav/clip_NNNNN.wav and <out_dir>/manifest.jsonl.
DatasetManifest generate_synthetic_corpus(const SyntheticSpec& spec,
                                          const std::filesystem::path& out_dir);

// One synthetic clip, without touching the filesystem.
std::vector<double> synthesize_clip(const SyntheticSpec& spec, std::uint32_t index);

}  // namespace vaealign
