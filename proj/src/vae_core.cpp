// SPDX-License-Identifier: Apache-2.0
#include "vaealign/vae_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vaealign/errors.hpp"

namespace vaealign {

std::size_t EncoderConfig::hop() const {
  std::size_t h = 1;
  for (auto f : downsample_factors) h *= f;
  return h;
}

std::vector<std::size_t> EncoderConfig::channels() const {
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < downsample_factors.size(); ++i) c.push_back(base_channels << i);
  return c;
}

void EncoderConfig::validate() const {
  if (downsample_factors.empty()) throw ValidationError("downsample_factors must be non-empty");
  for (auto f : downsample_factors)
    if (f == 0) throw ValidationError("downsample factors must be positive");
  if (latent_dim == 0) throw ValidationError("latent_dim must be >= 1");
  if (base_channels == 0) throw ValidationError("base_channels must be >= 1");
}

void ProjectionConfig::validate(std::size_t latent_dim) const {
  if (out_dim == 0) throw ValidationError("projection out_dim must be >= 1");
  if (hidden_layers > 0 && hidden_dim == 0) throw ValidationError("projection hidden_dim must be >= 1");
  if (identity_init && (hidden_layers != 0 || out_dim != latent_dim))
    throw ValidationError("identity_init needs a single square projection");
}

std::size_t LatentPosterior::valid_frames() const noexcept {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

void LatentPosterior::validate() const {
  const std::size_t n = batch * frames * dim;
  if (n == 0 || mu.size() != n || logvar.size() != n || mask.size() != batch * frames)
    throw ShapeError("posterior buffers do not match (B, T, D)");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(logvar[i])) throw ValidationError("posterior has non-finite entries");
  }
}

std::size_t latent_frames(std::size_t samples, std::size_t hop) { return (samples + hop - 1) / hop; }

VaeModel::VaeModel(const EncoderConfig& encoder, const ProjectionConfig& projection, std::uint64_t seed)
    : encoder_(encoder), projection_(projection) {
  encoder_.validate();
  projection_.validate(encoder_.latent_dim);
  const auto ch = encoder_.channels();
  const auto& f = encoder_.downsample_factors;
  const std::size_t L = encoder_.latent_dim;

  std::size_t c_in = 1;
  for (std::size_t i = 0; i < f.size(); ++i) {
    enc_layers_.push_back(Linear::create(params_, "encoder.conv" + std::to_string(i), f[i] * c_in, ch[i]));
    c_in = ch[i];
  }
  mu_head_ = Linear::create(params_, "encoder.mu_head", c_in, L);
  logvar_head_ = Linear::create(params_, "encoder.logvar_head", c_in, L);

  dec_in_ = Linear::create(params_, "decoder.in_proj", L, ch.back());
  for (std::size_t j = 0; j < f.size(); ++j) {
    const std::size_t layer = f.size() - 1 - j;
    const std::size_t cin = ch[layer];
    const std::size_t cout = layer == 0 ? 1 : ch[layer - 1];
    dec_layers_.push_back(
        Linear::create(params_, "decoder.deconv" + std::to_string(j), cin, f[layer] * cout));
  }

  std::size_t p_in = L;
  for (std::size_t h = 0; h < projection_.hidden_layers; ++h) {
    proj_layers_.push_back(
        Linear::create(params_, "projection.hidden" + std::to_string(h), p_in, projection_.hidden_dim));
    p_in = projection_.hidden_dim;
  }
  proj_layers_.push_back(Linear::create(params_, "projection.out", p_in, projection_.out_dim));

  std::mt19937_64 rng(seed);
  const double gain = encoder_.activation == Activation::leaky_relu ? std::sqrt(2.0 / (1.0 + 0.04)) : 1.0;
  for (const auto& l : enc_layers_) l.init_normal(params_, rng, gain);
  mu_head_.init_normal(params_, rng, 1.0);
  logvar_head_.init_normal(params_, rng, 0.1);
  dec_in_.init_normal(params_, rng, gain);
  for (std::size_t j = 0; j < dec_layers_.size(); ++j)
    dec_layers_[j].init_normal(params_, rng, j + 1 == dec_layers_.size() ? 1.0 : gain);
  for (const auto& l : proj_layers_) l.init_normal(params_, rng, 1.0);

  if (projection_.identity_init) {
    auto& w = params_.at(proj_layers_[0].weight).value;
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < L; ++i) w[i * L + i] = 1.0;
  }
}

LatentPosterior VaeModel::encode(std::span<const double> waveform, std::size_t batch,
                                 std::span<const std::size_t> valid_lengths, EncoderCache* cache) const {
  if (batch == 0 || waveform.size() % batch != 0) throw ShapeError("encode: waveform size not divisible by batch");
  const std::size_t S = waveform.size() / batch;
  const std::size_t hop = encoder_.hop();
  if (S < hop)
    throw InputTooShort("encode: " + std::to_string(S) + " samples is shorter than one hop (" +
                        std::to_string(hop) + ")");
  if (!valid_lengths.empty() && valid_lengths.size() != batch)
    throw ShapeError("encode: one valid length per sample required");
  const std::size_t T = latent_frames(S, hop);
  const std::size_t S_pad = T * hop;
  const std::size_t L = encoder_.latent_dim;

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.batch = batch;
  c.frames = T;
  c.inputs.assign(enc_layers_.size(), {});
  c.pre.assign(enc_layers_.size(), {});

  std::vector<double> x(batch * S_pad, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(b * S), S, x.begin() + static_cast<std::ptrdiff_t>(b * S_pad));

  std::size_t rows = batch * S_pad;
  for (std::size_t i = 0; i < enc_layers_.size(); ++i) {
    const auto& layer = enc_layers_[i];
    rows /= encoder_.downsample_factors[i];
    c.inputs[i] = std::move(x);
    c.pre[i].assign(rows * layer.out, 0.0);
    layer.forward(params_, c.inputs[i], rows, c.pre[i]);
    x.assign(rows * layer.out, 0.0);
    activate(encoder_.activation, c.pre[i], x);
  }
  c.head_in = std::move(x);

  LatentPosterior post;
  post.batch = batch;
  post.frames = T;
  post.dim = L;
  post.mu.assign(rows * L, 0.0);
  c.logvar_raw.assign(rows * L, 0.0);
  mu_head_.forward(params_, c.head_in, rows, post.mu);
  logvar_head_.forward(params_, c.head_in, rows, c.logvar_raw);
  post.logvar.resize(rows * L);
  for (std::size_t i = 0; i < post.logvar.size(); ++i)
    post.logvar[i] = std::clamp(c.logvar_raw[i], kLogvarMin, kLogvarMax);
  post.mask.assign(batch * T, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = valid_lengths.empty() ? S : valid_lengths[b];
    if (len < hop || len > S) throw InputTooShort("encode: valid length outside [hop, S]");
    for (std::size_t t = 0; t < T; ++t) post.mask[b * T + t] = (t + 1) * hop <= len;
  }
  return post;
}

void VaeModel::head_backward(const EncoderCache& c, std::span<const double> dmu,
                             std::span<const double> dlogvar, Gradients& grads) const {
  const std::size_t rows = c.batch * c.frames;
  std::vector<double> dlv(dlogvar.begin(), dlogvar.end());
  for (std::size_t i = 0; i < dlv.size(); ++i)
    if (c.logvar_raw[i] < kLogvarMin || c.logvar_raw[i] > kLogvarMax) dlv[i] = 0.0;
  mu_head_.backward(params_, c.head_in, dmu, rows, grads, {});
  logvar_head_.backward(params_, c.head_in, dlv, rows, grads, {});
}

void VaeModel::encode_backward(const EncoderCache& c, std::span<const double> dmu,
                               std::span<const double> dlogvar, Gradients& grads) const {
  const std::size_t rows = c.batch * c.frames;
  std::vector<double> dlv(dlogvar.begin(), dlogvar.end());
  for (std::size_t i = 0; i < dlv.size(); ++i)
    if (c.logvar_raw[i] < kLogvarMin || c.logvar_raw[i] > kLogvarMax) dlv[i] = 0.0;

  std::vector<double> dh(c.head_in.size(), 0.0), tmp(c.head_in.size(), 0.0);
  mu_head_.backward(params_, c.head_in, dmu, rows, grads, dh);
  logvar_head_.backward(params_, c.head_in, dlv, rows, grads, tmp);
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += tmp[i];

  std::size_t layer_rows = rows;
  for (std::size_t i = enc_layers_.size(); i-- > 0;) {
    const auto& layer = enc_layers_[i];
    activate_backward(encoder_.activation, c.pre[i], dh);
    std::vector<double> dx;
    if (i > 0) dx.assign(layer_rows * layer.in, 0.0);
    layer.backward(params_, c.inputs[i], dh, layer_rows, grads, dx);
    dh = std::move(dx);
    layer_rows *= encoder_.downsample_factors[i];
  }
}

std::vector<double> VaeModel::decode(std::span<const double> z, std::size_t batch, std::size_t frames,
                                     DecoderCache* cache) const {
  const std::size_t L = encoder_.latent_dim;
  if (z.size() != batch * frames * L) throw ShapeError("decode: z does not match (B, T, latent_dim)");
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  c.batch = batch;
  c.frames = frames;
  c.z.assign(z.begin(), z.end());
  c.inputs.assign(dec_layers_.size() + 1, {});
  c.pre.assign(dec_layers_.size() + 1, {});

  std::size_t rows = batch * frames;
  c.inputs[0] = c.z;
  c.pre[0].assign(rows * dec_in_.out, 0.0);
  dec_in_.forward(params_, c.inputs[0], rows, c.pre[0]);
  std::vector<double> x(c.pre[0].size());
  activate(encoder_.activation, c.pre[0], x);

  const std::size_t n = encoder_.downsample_factors.size();
  for (std::size_t j = 0; j < dec_layers_.size(); ++j) {
    const auto& layer = dec_layers_[j];
    c.inputs[j + 1] = std::move(x);
    c.pre[j + 1].assign(rows * layer.out, 0.0);
    layer.forward(params_, c.inputs[j + 1], rows, c.pre[j + 1]);
    rows *= encoder_.downsample_factors[n - 1 - j];
    x.assign(c.pre[j + 1].size(), 0.0);
    activate(j + 1 == dec_layers_.size() ? Activation::identity : encoder_.activation, c.pre[j + 1], x);
  }
  return x;
}

void VaeModel::decode_backward(const DecoderCache& c, std::span<const double> dx_hat, Gradients& grads,
                               std::span<double> dz) const {
  const std::size_t n = encoder_.downsample_factors.size();
  std::vector<double> dy(dx_hat.begin(), dx_hat.end());
  std::size_t rows = c.batch * c.frames * encoder_.hop();
  for (std::size_t j = dec_layers_.size(); j-- > 0;) {
    const auto& layer = dec_layers_[j];
    if (j + 1 != dec_layers_.size()) activate_backward(encoder_.activation, c.pre[j + 1], dy);
    rows /= encoder_.downsample_factors[n - 1 - j];
    std::vector<double> dx(rows * layer.in, 0.0);
    layer.backward(params_, c.inputs[j + 1], dy, rows, grads, dx);
    dy = std::move(dx);
  }
  activate_backward(encoder_.activation, c.pre[0], dy);
  dec_in_.backward(params_, c.inputs[0], dy, rows, grads, dz);
}

FeatureBatch VaeModel::project(const FeatureBatch& z, ProjectionCache* cache) const {
  if (z.dim() != encoder_.latent_dim)
    throw ShapeError("project: input dim " + std::to_string(z.dim()) + " != latent_dim " +
                     std::to_string(encoder_.latent_dim));
  ProjectionCache local;
  ProjectionCache& c = cache ? *cache : local;
  const std::size_t rows = z.batch() * z.frames();
  c.rows = rows;
  c.inputs.assign(proj_layers_.size(), {});
  c.pre.assign(proj_layers_.size(), {});
  std::vector<double> x(z.values().begin(), z.values().end());
  for (std::size_t i = 0; i < proj_layers_.size(); ++i) {
    const auto& layer = proj_layers_[i];
    c.inputs[i] = std::move(x);
    c.pre[i].assign(rows * layer.out, 0.0);
    layer.forward(params_, c.inputs[i], rows, c.pre[i]);
    x.assign(c.pre[i].size(), 0.0);
    const bool last = i + 1 == proj_layers_.size();
    activate(last ? Activation::identity : projection_.hidden_activation, c.pre[i], x);
  }
  std::vector<std::uint8_t> mask(z.mask().begin(), z.mask().end());
  return FeatureBatch(z.batch(), z.frames(), projection_.out_dim, std::move(x), std::move(mask));
}

void VaeModel::project_backward(const ProjectionCache& c, std::span<const double> dzp, Gradients& grads,
                                std::span<double> dz) const {
  std::vector<double> dy(dzp.begin(), dzp.end());
  for (std::size_t i = proj_layers_.size(); i-- > 0;) {
    const auto& layer = proj_layers_[i];
    if (i + 1 != proj_layers_.size()) activate_backward(projection_.hidden_activation, c.pre[i], dy);
    std::vector<double> dx;
    if (i > 0 || !dz.empty()) dx.assign(c.rows * layer.in, 0.0);
    layer.backward(params_, c.inputs[i], dy, c.rows, grads, dx);
    dy = std::move(dx);
  }
  if (!dz.empty()) std::copy(dy.begin(), dy.end(), dz.begin());
}

std::vector<std::size_t> VaeModel::projection_param_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& l : proj_layers_) {
    ids.push_back(l.weight);
    ids.push_back(l.bias);
  }
  return ids;
}

std::vector<std::size_t> VaeModel::head_param_ids() const {
  return {mu_head_.weight, mu_head_.bias, logvar_head_.weight, logvar_head_.bias};
}

std::vector<double> reparameterize(const LatentPosterior& post, std::uint64_t noise_seed,
                                   std::vector<double>* eps_out) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> z(post.mu.size());
  if (eps_out) eps_out->resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double e = g(rng);
    if (eps_out) (*eps_out)[i] = e;
    z[i] = post.mu[i] + std::exp(0.5 * post.logvar[i]) * e;
  }
  return z;
}

double kl_loss(const LatentPosterior& post, std::span<double> dmu, std::span<double> dlogvar) {
  const std::size_t D = post.dim;
  const std::size_t valid = post.valid_frames();
  if (valid == 0) throw ShapeError("kl_loss: no valid frame");
  if (!dmu.empty()) std::fill(dmu.begin(), dmu.end(), 0.0);
  if (!dlogvar.empty()) std::fill(dlogvar.begin(), dlogvar.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(valid * D);
  double sum = 0.0;
  for (std::size_t r = 0; r < post.batch * post.frames; ++r) {
    if (!post.mask[r]) continue;
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t i = r * D + d;
      const double m = post.mu[i];
      const double lv = post.logvar[i];
      const double ev = std::exp(lv);
      sum += 0.5 * (m * m + ev - 1.0 - lv);
      if (!dmu.empty()) dmu[i] = m * inv;
      if (!dlogvar.empty()) dlogvar[i] = 0.5 * (ev - 1.0) * inv;
    }
  }
  return sum * inv;
}

}  // namespace vaealign
