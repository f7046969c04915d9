// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vaealign/alignment_losses.hpp"
#include "vaealign/featureio.hpp"
#include "vaealign/layers.hpp"

namespace vaealign {

enum class TeacherKind { frozen_random, from_files };
enum class Resample { linear_interp, mean_pool };

TeacherKind parse_teacher_kind(std::string_view s);
Resample parse_resample(std::string_view s);
std::string_view to_string(TeacherKind k) noexcept;
std::string_view to_string(Resample r) noexcept;

struct TeacherConfig {
  TeacherKind kind = TeacherKind::frozen_random;
  std::size_t teacher_dim = 1024;
  double teacher_rate = 40.0;  // Hz; frozen_random always runs at the latent rate
  Resample resample = Resample::linear_interp;
  std::uint64_t seed = 20240601;
  std::size_t base_channels = 16;

  void validate() const;
};

// Resamples (t_in, dim) frames to t_out frames along time.
// linear_interp maps endpoints onto endpoints; mean_pool averages the
// fractional input span covered by each output frame.
std::vector<double> resample_frames(std::span<const double> frames, std::size_t t_in, std::size_t dim,
                                    std::size_t t_out, Resample mode);

// Teacher frame count implied by a clip length at the configured rate.
std::size_t teacher_frames_for(std::uint64_t num_samples, double teacher_rate);

// Source of the alignment target f. frozen_random is a seeded, never-trained
// strided stack with the same hop as the encoder; from_files reads per-clip
// (frames, dim) tensors named by the manifest.
class Teacher {
 public:
  Teacher(const TeacherConfig& config, std::span<const std::size_t> downsample_factors,
          const DatasetManifest* manifest = nullptr);

  const TeacherConfig& config() const noexcept { return config_; }
  std::size_t hop() const noexcept { return hop_; }

  // Features for a (B, S) waveform batch at the latent rate, carrying the
  // latent mask implied by valid_lengths. frozen_random only.
  FeatureBatch features_for_waveform(std::span<const double> waveform, std::size_t batch,
                                     std::span<const std::size_t> valid_lengths = {}) const;

  // Full-clip features resampled to t_lat frames, (t_lat, dim) row-major.
  // clip_index addresses the manifest; waveform is used by frozen_random.
  std::vector<double> clip_features(std::size_t clip_index, std::span<const double> waveform,
                                    std::size_t t_lat) const;

  // Pre-flight check of manifest teacher files against dims and frame counts.
  void check_manifest(const DatasetManifest& manifest) const;

 private:
  TeacherConfig config_;
  std::vector<std::size_t> factors_;
  std::size_t hop_ = 1;
  const DatasetManifest* manifest_ = nullptr;
  ParamStore params_;
  std::vector<Linear> layers_;
  Linear out_;
};

}  // namespace vaealign
