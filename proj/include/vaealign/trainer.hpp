// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vaealign/adaptive_weighting.hpp"
#include "vaealign/alignment_losses.hpp"
#include "vaealign/featureio.hpp"
#include "vaealign/stft.hpp"
#include "vaealign/teacher.hpp"
#include "vaealign/vae_core.hpp"

namespace vaealign {

enum class Scheme { vanilla, tas, das, jmas };
enum class AlignSource { sampled, mean };

Scheme parse_scheme(std::string_view s);
std::string_view to_string(Scheme s) noexcept;

struct TrainConfig {
  Scheme scheme = Scheme::vanilla;
  bool adaptive = false;
  std::optional<Margins> margins;  // required for jmas
  double omega_rec = 1.0;
  double omega_kl = 0.001;
  WeightConfig weight_config;
  double lr = 1e-4;
  double lr_decay_gamma = 0.999996;
  std::size_t batch_size = 4;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  ProjectionConfig projection;
  TeacherConfig teacher;
  ReconConfig recon;
  std::size_t crop_samples = 16000;
  std::size_t checkpoint_interval = 0;  // 0 = only at the end
  std::size_t max_pairs_frames = kDefaultMaxPairsFrames;
  AlignSource align_source = AlignSource::sampled;

  // Throws ValidationError; also syncs weight_config.mode with adaptive.
  void validate();
};

nlohmann::ordered_json to_json(const TrainConfig& config);
// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON of the architecture-defining sections
// (encoder, projection, teacher).
std::string config_hash(const TrainConfig& config);

// Raw loss values of one step; unused components stay zero.
struct LossComponents {
  double rec = 0.0;
  double rec_waveform = 0.0;
  double rec_stft = 0.0;
  double kl = 0.0;
  double t = 0.0;
  double d = 0.0;
  double mcos = 0.0;
  double mdss = 0.0;
  bool mdss_approximate = false;

  bool all_finite() const noexcept;
};

// Weights multiplied onto each component in the total.
struct AppliedWeights {
  double rec = 0.0;
  double kl = 0.0;
  double t = 0.0;
  double d = 0.0;
  double mcos = 0.0;
  double mdss = 0.0;
};

double weighted_total(const LossComponents& c, const AppliedWeights& w) noexcept;

// Weights for a step given adaptive factors (ignored in static mode).
AppliedWeights applied_weights(const TrainConfig& config, double omega_adaptive, const JointWeights& joint);

struct TrainLogRow {
  std::uint64_t step = 0;
  double total_loss = 0.0;
  LossComponents losses;
  AppliedWeights weights;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  bool diverged = false;
  std::optional<std::uint64_t> diverged_step;

  void write_csv(const std::filesystem::path& path) const;
  static TrainLog read_csv(const std::filesystem::path& path);
};

// Adam moments, one buffer per parameter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct Checkpoint {
  TrainConfig config;
  std::shared_ptr<VaeModel> model;
  AdamState adam;
  std::uint64_t step = 0;  // optimization steps completed
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
// Refuses to load when the stored config hash does not match the stored
// config, or (when given) the expected config.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig* expected = nullptr);

// Waveforms of every manifest clip, in manifest order.
struct Corpus {
  DatasetManifest manifest;
  std::vector<std::vector<double>> waveforms;

  static Corpus load(const DatasetManifest& manifest);
};

// One assembled training batch.
struct Batch {
  std::size_t batch = 0;
  std::size_t samples = 0;  // padded per-sample length (multiple of hop)
  std::vector<double> waveform;            // (B, samples)
  std::vector<std::size_t> valid_lengths;  // whole hops only
  std::vector<std::size_t> clips;
  std::vector<std::size_t> starts;
  FeatureBatch teacher;  // empty for vanilla
};

struct StepOutput {
  double total = 0.0;
  LossComponents losses;
  AppliedWeights weights;
  WeightTraceRow trace;
  bool has_trace = false;
};

// Owns model, optimizer and data for one run.
class Trainer {
 public:
  Trainer(TrainConfig config, const Corpus& corpus);
  Trainer(const Checkpoint& resume, const Corpus& corpus);

  const TrainConfig& config() const noexcept { return config_; }
  const VaeModel& model() const noexcept { return *model_; }
  std::uint64_t step() const noexcept { return step_; }
  const Teacher* teacher() const noexcept { return teacher_.get(); }

  Batch make_batch(std::uint64_t step) const;

  // Composite objective on a batch. With grads, also fills the full
  // parameter gradient and the adaptive-weight diagnostics.
  StepOutput composite_loss(const Batch& batch, std::uint64_t step, Gradients* grads) const;

  // One optimization step; returns nullopt (and applies no update) on divergence.
  std::optional<TrainLogRow> train_step(WeightTrace* trace);

  Checkpoint checkpoint() const;
  double lr_at(std::uint64_t step) const;

 private:
  void init(const Corpus& corpus);
  const std::vector<double>& clip_teacher(std::size_t clip) const;

  TrainConfig config_;
  const Corpus* corpus_ = nullptr;
  std::shared_ptr<VaeModel> model_;
  std::unique_ptr<Teacher> teacher_;
  AdamState adam_;
  std::uint64_t step_ = 0;
  mutable std::map<std::size_t, std::vector<double>> teacher_cache_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoint/, train_log.csv, weight_trace.csv
  const Checkpoint* resume = nullptr;
  std::function<void(const TrainLogRow&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
  WeightTrace trace;
};

// Runs config.steps steps in total (fewer remain when resuming), halting on
// divergence. Data/teacher mismatches are reported before step 0.
TrainResult train(const TrainConfig& config, const Corpus& corpus, const TrainOptions& options = {});

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) noexcept;

}  // namespace vaealign
