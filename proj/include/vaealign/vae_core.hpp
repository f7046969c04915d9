// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vaealign/alignment_losses.hpp"
#include "vaealign/layers.hpp"

namespace vaealign {

struct EncoderConfig {
  std::vector<std::size_t> downsample_factors{4, 4, 5, 5};
  std::size_t latent_dim = 64;
  std::size_t base_channels = 16;
  Activation activation = Activation::leaky_relu;

  std::size_t hop() const;
  // Output channels of each strided layer: base * 2^i.
  std::vector<std::size_t> channels() const;
  void validate() const;
};

struct ProjectionConfig {
  std::size_t out_dim = 1024;
  std::size_t hidden_layers = 0;  // 0 = single affine map
  std::size_t hidden_dim = 256;
  Activation hidden_activation = Activation::leaky_relu;
  bool identity_init = false;  // square projections only; test fixtures

  void validate(std::size_t latent_dim) const;
};

inline constexpr double kLogvarMin = -30.0;
inline constexpr double kLogvarMax = 20.0;

struct LatentPosterior {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> mu;      // (B, T, dim)
  std::vector<double> logvar;  // (B, T, dim), clamped to [kLogvarMin, kLogvarMax]
  std::vector<std::uint8_t> mask;  // (B, T)

  std::size_t valid_frames() const noexcept;
  void validate() const;
};

// Number of latent frames for S input samples: ceil(S / hop).
std::size_t latent_frames(std::size_t samples, std::size_t hop);

struct EncoderCache {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::vector<std::vector<double>> inputs;  // input to each strided layer (inputs[0] = padded waveform)
  std::vector<std::vector<double>> pre;     // pre-activation output of each strided layer
  std::vector<double> head_in;
  std::vector<double> logvar_raw;
};

struct DecoderCache {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::vector<double> z;
  std::vector<std::vector<double>> inputs;  // input to in_proj and each transposed layer
  std::vector<std::vector<double>> pre;
};

struct ProjectionCache {
  std::size_t rows = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
};

// Toy convolutional VAE. Strided layers use kernel == stride, so each latent
// frame depends only on its own hop of samples; the decoder mirrors this with
// transposed layers.
class VaeModel {
 public:
  VaeModel(const EncoderConfig& encoder, const ProjectionConfig& projection, std::uint64_t seed);

  const EncoderConfig& encoder_config() const noexcept { return encoder_; }
  const ProjectionConfig& projection_config() const noexcept { return projection_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // waveform is (B, S) row-major. Inputs are right-zero-padded to a multiple
  // of hop; a latent frame is valid only if all of its hop samples are real.
  // valid_lengths defaults to S for every sample.
  LatentPosterior encode(std::span<const double> waveform, std::size_t batch,
                         std::span<const std::size_t> valid_lengths = {}, EncoderCache* cache = nullptr) const;
  void encode_backward(const EncoderCache& cache, std::span<const double> dmu, std::span<const double> dlogvar,
                       Gradients& grads) const;
  // Gradient of the mu/logvar heads only; the strided stack is not visited.
  void head_backward(const EncoderCache& cache, std::span<const double> dmu, std::span<const double> dlogvar,
                     Gradients& grads) const;

  // z is (B, T, latent_dim); returns (B, T * hop).
  std::vector<double> decode(std::span<const double> z, std::size_t batch, std::size_t frames,
                             DecoderCache* cache = nullptr) const;
  void decode_backward(const DecoderCache& cache, std::span<const double> dx_hat, Gradients& grads,
                       std::span<double> dz) const;

  // Per-frame projection to the teacher dimension; the output keeps z's mask.
  FeatureBatch project(const FeatureBatch& z, ProjectionCache* cache = nullptr) const;
  void project_backward(const ProjectionCache& cache, std::span<const double> dzp, Gradients& grads,
                        std::span<double> dz) const;

  std::vector<std::size_t> projection_param_ids() const;
  std::vector<std::size_t> head_param_ids() const;

 private:
  EncoderConfig encoder_;
  ProjectionConfig projection_;
  ParamStore params_;
  std::vector<Linear> enc_layers_;
  Linear mu_head_;
  Linear logvar_head_;
  Linear dec_in_;
  std::vector<Linear> dec_layers_;
  std::vector<Linear> proj_layers_;
};

// z = mu + exp(logvar / 2) * eps, eps ~ N(0, 1) drawn from noise_seed.
std::vector<double> reparameterize(const LatentPosterior& post, std::uint64_t noise_seed,
                                   std::vector<double>* eps_out = nullptr);

// Mean over valid frames and dims of 0.5 (mu^2 + exp(logvar) - 1 - logvar).
double kl_loss(const LatentPosterior& post, std::span<double> dmu = {}, std::span<double> dlogvar = {});

}  // namespace vaealign
