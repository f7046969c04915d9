// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "vaealign/featureio.hpp"
#include "vaealign/trainer.hpp"

namespace fixture {

// Small synthetic corpus on disk plus its loaded waveforms.
inline vaealign::Corpus small_corpus(const std::filesystem::path& dir, std::uint32_t clips = 6,
                                     double seconds = 0.5, std::uint64_t seed = 3) {
  vaealign::SyntheticSpec spec;
  spec.num_clips = clips;
  spec.clip_seconds = seconds;
  spec.seed = seed;
  return vaealign::Corpus::load(vaealign::generate_synthetic_corpus(spec, dir));
}

// Tiny model that trains in milliseconds per step.
inline vaealign::TrainConfig tiny_config(vaealign::Scheme scheme) {
  vaealign::TrainConfig c;
  c.scheme = scheme;
  c.encoder.latent_dim = 8;
  c.encoder.base_channels = 4;
  c.projection.out_dim = 16;
  c.teacher.teacher_dim = 16;
  c.teacher.base_channels = 4;
  c.batch_size = 2;
  c.crop_samples = 4000;
  c.steps = 5;
  c.lr = 1e-3;
  c.seed = 17;
  if (scheme == vaealign::Scheme::jmas) c.margins = vaealign::Margins{0.1, 0.05};
  return c;
}

}  // namespace fixture
