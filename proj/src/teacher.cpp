// SPDX-License-Identifier: Apache-2.0
#include "vaealign/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vaealign/errors.hpp"

namespace vaealign {

TeacherKind parse_teacher_kind(std::string_view s) {
  if (s == "frozen_random") return TeacherKind::frozen_random;
  if (s == "from_files") return TeacherKind::from_files;
  throw ValidationError("unknown teacher kind '" + std::string(s) + "'");
}

Resample parse_resample(std::string_view s) {
  if (s == "linear_interp") return Resample::linear_interp;
  if (s == "mean_pool") return Resample::mean_pool;
  throw ValidationError("unknown resample mode '" + std::string(s) + "'");
}

std::string_view to_string(TeacherKind k) noexcept {
  return k == TeacherKind::frozen_random ? "frozen_random" : "from_files";
}

std::string_view to_string(Resample r) noexcept {
  return r == Resample::linear_interp ? "linear_interp" : "mean_pool";
}

void TeacherConfig::validate() const {
  if (teacher_dim == 0) throw ValidationError("teacher_dim must be >= 1");
  if (!(teacher_rate > 0.0)) throw ValidationError("teacher_rate must be > 0");
  if (base_channels == 0) throw ValidationError("teacher base_channels must be >= 1");
}

std::vector<double> resample_frames(std::span<const double> frames, std::size_t t_in, std::size_t dim,
                                    std::size_t t_out, Resample mode) {
  if (t_in == 0 || t_out == 0 || frames.size() != t_in * dim) throw ShapeError("resample_frames: bad shape");
  if (t_in == t_out) return {frames.begin(), frames.end()};
  std::vector<double> out(t_out * dim, 0.0);
  if (mode == Resample::linear_interp) {
    for (std::size_t j = 0; j < t_out; ++j) {
      const double pos = t_out == 1 ? 0.0
                                    : static_cast<double>(j) * static_cast<double>(t_in - 1) /
                                          static_cast<double>(t_out - 1);
      const std::size_t lo = std::min(static_cast<std::size_t>(pos), t_in - 1);
      const std::size_t hi = std::min(lo + 1, t_in - 1);
      const double w = pos - static_cast<double>(lo);
      for (std::size_t d = 0; d < dim; ++d)
        out[j * dim + d] = (1.0 - w) * frames[lo * dim + d] + w * frames[hi * dim + d];
    }
    return out;
  }
  const double ratio = static_cast<double>(t_in) / static_cast<double>(t_out);
  for (std::size_t j = 0; j < t_out; ++j) {
    const double a = static_cast<double>(j) * ratio;
    const double b = static_cast<double>(j + 1) * ratio;
    double total = 0.0;
    for (auto i = static_cast<std::size_t>(a); i < t_in && static_cast<double>(i) < b; ++i) {
      const double w = std::min(b, static_cast<double>(i + 1)) - std::max(a, static_cast<double>(i));
      if (w <= 0.0) continue;
      total += w;
      for (std::size_t d = 0; d < dim; ++d) out[j * dim + d] += w * frames[i * dim + d];
    }
    for (std::size_t d = 0; d < dim; ++d) out[j * dim + d] /= total;
  }
  return out;
}

std::size_t teacher_frames_for(std::uint64_t num_samples, double teacher_rate) {
  const double exact = static_cast<double>(num_samples) * teacher_rate / kSampleRate;
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

Teacher::Teacher(const TeacherConfig& config, std::span<const std::size_t> downsample_factors,
                 const DatasetManifest* manifest)
    : config_(config), factors_(downsample_factors.begin(), downsample_factors.end()), manifest_(manifest) {
  config_.validate();
  for (auto f : factors_) hop_ *= f;
  if (config_.kind == TeacherKind::from_files) {
    if (manifest_ == nullptr) throw ValidationError("from_files teacher needs a manifest");
    for (const auto& e : manifest_->entries)
      if (!e.teacher_path) throw ValidationError("clip " + e.clip_id + " has no teacher_path");
    return;
  }
  std::size_t c_in = 1;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const std::size_t c_out = config_.base_channels << i;
    layers_.push_back(Linear::create(params_, "teacher.conv" + std::to_string(i), factors_[i] * c_in, c_out));
    c_in = c_out;
  }
  out_ = Linear::create(params_, "teacher.out", c_in, config_.teacher_dim);
  std::mt19937_64 rng(config_.seed);
  for (const auto& l : layers_) l.init_normal(params_, rng, 1.5);
  out_.init_normal(params_, rng, 1.0);
  // Random biases give the features a shared offset direction, like real SSL features.
  std::normal_distribution<double> g(0.0, 0.5);
  for (double& b : params_.at(out_.bias).value) b = g(rng);
}

FeatureBatch Teacher::features_for_waveform(std::span<const double> waveform, std::size_t batch,
                                            std::span<const std::size_t> valid_lengths) const {
  if (config_.kind != TeacherKind::frozen_random)
    throw ValidationError("features_for_waveform needs the frozen_random teacher");
  if (batch == 0 || waveform.size() % batch != 0) throw ShapeError("teacher: waveform size not divisible by batch");
  const std::size_t S = waveform.size() / batch;
  if (S < hop_) throw InputTooShort("teacher: input shorter than one hop");
  const std::size_t T = (S + hop_ - 1) / hop_;
  const std::size_t S_pad = T * hop_;
  std::vector<double> x(batch * S_pad, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(b * S), S, x.begin() + static_cast<std::ptrdiff_t>(b * S_pad));
  std::size_t rows = batch * S_pad;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    rows /= factors_[i];
    std::vector<double> y(rows * layers_[i].out, 0.0);
    layers_[i].forward(params_, x, rows, y);
    for (double& v : y) v = std::tanh(v);
    x = std::move(y);
  }
  std::vector<double> f(rows * config_.teacher_dim, 0.0);
  out_.forward(params_, x, rows, f);
  std::vector<std::uint8_t> mask(batch * T, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = valid_lengths.empty() ? S : valid_lengths[b];
    for (std::size_t t = 0; t < T; ++t) mask[b * T + t] = (t + 1) * hop_ <= len;
  }
  return FeatureBatch(batch, T, config_.teacher_dim, std::move(f), std::move(mask));
}

std::vector<double> Teacher::clip_features(std::size_t clip_index, std::span<const double> waveform,
                                           std::size_t t_lat) const {
  if (config_.kind == TeacherKind::frozen_random) {
    // The stack is frame-local, so padding the clip to t_lat hops is exact.
    std::vector<double> padded(t_lat * hop_, 0.0);
    std::copy_n(waveform.begin(), std::min(waveform.size(), padded.size()), padded.begin());
    auto fb = features_for_waveform(padded, 1);
    return {fb.values().begin(), fb.values().end()};
  }
  if (manifest_ == nullptr || clip_index >= manifest_->entries.size())
    throw ValidationError("teacher: clip index out of range");
  const auto& entry = manifest_->entries[clip_index];
  const auto path = manifest_->resolve(*entry.teacher_path);
  if (!std::filesystem::exists(path)) throw IoError(path.string(), "missing teacher features");
  const TensorFile tf = read_tensor(path);
  if (tf.shape.size() != 2) throw ShapeError(path.string() + ": teacher tensor must be (frames, dim)");
  if (tf.shape[1] != config_.teacher_dim)
    throw ShapeError(path.string() + ": teacher dim " + std::to_string(tf.shape[1]) + " != " +
                     std::to_string(config_.teacher_dim));
  std::vector<double> frames(tf.data.begin(), tf.data.end());
  return resample_frames(frames, tf.shape[0], tf.shape[1], t_lat, config_.resample);
}

void Teacher::check_manifest(const DatasetManifest& manifest) const {
  if (config_.kind != TeacherKind::from_files) return;
  for (const auto& e : manifest.entries) {
    if (!e.teacher_path) throw ValidationError("clip " + e.clip_id + " has no teacher_path");
    const auto path = manifest.resolve(*e.teacher_path);
    if (!std::filesystem::exists(path)) throw IoError(path.string(), "missing teacher features");
    const TensorFile tf = read_tensor(path);
    if (tf.shape.size() != 2 || tf.shape[1] != config_.teacher_dim)
      throw ShapeError(path.string() + ": teacher tensor must be (frames, " + std::to_string(config_.teacher_dim) + ")");
    const std::size_t expected = teacher_frames_for(e.num_samples, config_.teacher_rate);
    if (tf.shape[0] != expected)
      throw ShapeError(path.string() + ": " + std::to_string(tf.shape[0]) + " teacher frames, expected " +
                       std::to_string(expected) + " at " + std::to_string(config_.teacher_rate) + " Hz");
  }
}

}  // namespace vaealign
