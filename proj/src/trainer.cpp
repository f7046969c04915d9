// SPDX-License-Identifier: Apache-2.0
#include "vaealign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "vaealign/errors.hpp"
#include "vaealign/kernels.hpp"

namespace vaealign {

using nlohmann::json;
using nlohmann::ordered_json;

Scheme parse_scheme(std::string_view s) {
  if (s == "vanilla") return Scheme::vanilla;
  if (s == "tas") return Scheme::tas;
  if (s == "das") return Scheme::das;
  if (s == "jmas") return Scheme::jmas;
  throw ValidationError("unknown scheme '" + std::string(s) + "'");
}

std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::vanilla: return "vanilla";
    case Scheme::tas: return "tas";
    case Scheme::das: return "das";
    case Scheme::jmas: return "jmas";
  }
  return "vanilla";
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  // splitmix64 finalizer over a simple combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

void TrainConfig::validate() {
  encoder.validate();
  projection.validate(encoder.latent_dim);
  teacher.validate();
  weight_config.validate();
  weight_config.mode = adaptive ? WeightMode::adaptive : WeightMode::static_weights;
  if (scheme == Scheme::jmas) {
    if (!margins) throw ValidationError("scheme jmas requires margins");
    margins->validate();
  }
  if (scheme != Scheme::vanilla && projection.out_dim != teacher.teacher_dim)
    throw ValidationError("projection out_dim " + std::to_string(projection.out_dim) + " != teacher_dim " +
                          std::to_string(teacher.teacher_dim));
  if (!(omega_rec >= 0.0) || !(omega_kl >= 0.0)) throw ValidationError("loss weights must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(lr_decay_gamma > 0.0)) throw ValidationError("lr_decay_gamma must be > 0");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (crop_samples == 0 || crop_samples % encoder.hop() != 0)
    throw ValidationError("crop_samples must be a positive multiple of the hop");
  if (max_pairs_frames == 0) throw ValidationError("max_pairs_frames must be >= 1");
}

// ---------------------------------------------------------------------------
// JSON config

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

ordered_json encoder_json(const EncoderConfig& e) {
  return {{"downsample_factors", e.downsample_factors},
          {"latent_dim", e.latent_dim},
          {"base_channels", e.base_channels},
          {"activation", std::string(to_string(e.activation))}};
}

ordered_json projection_json(const ProjectionConfig& p) {
  return {{"out_dim", p.out_dim},
          {"hidden_layers", p.hidden_layers},
          {"hidden_dim", p.hidden_dim},
          {"hidden_activation", std::string(to_string(p.hidden_activation))},
          {"identity_init", p.identity_init}};
}

ordered_json teacher_json(const TeacherConfig& t) {
  return {{"kind", std::string(to_string(t.kind))},
          {"teacher_dim", t.teacher_dim},
          {"teacher_rate", t.teacher_rate},
          {"resample", std::string(to_string(t.resample))},
          {"seed", t.seed},
          {"base_channels", t.base_channels}};
}

}  // namespace

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["scheme"] = std::string(to_string(c.scheme));
  j["adaptive"] = c.adaptive;
  if (c.margins) j["margins"] = {{"m1", c.margins->m1}, {"m2", c.margins->m2}};
  j["omega_rec"] = c.omega_rec;
  j["omega_kl"] = c.omega_kl;
  j["weight_config"] = {{"omega_ssl", c.weight_config.omega_ssl},
                        {"eps", c.weight_config.eps},
                        {"omega_cap", c.weight_config.omega_cap},
                        {"rec_grad_fallback", c.weight_config.rec_grad_fallback}};
  j["lr"] = c.lr;
  j["lr_decay_gamma"] = c.lr_decay_gamma;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["encoder"] = encoder_json(c.encoder);
  j["projection"] = projection_json(c.projection);
  j["teacher"] = teacher_json(c.teacher);
  j["recon"] = {{"use_stft", c.recon.use_stft}, {"stft_windows", c.recon.stft_windows}};
  j["crop_samples"] = c.crop_samples;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["max_pairs_frames"] = c.max_pairs_frames;
  j["align_source"] = c.align_source == AlignSource::sampled ? "sampled" : "mean";
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    reject_unknown(j,
                   {"scheme", "adaptive", "margins", "omega_rec", "omega_kl", "weight_config", "lr",
                    "lr_decay_gamma", "batch_size", "steps", "seed", "encoder", "projection", "teacher", "recon",
                    "crop_samples", "checkpoint_interval", "max_pairs_frames", "align_source"},
                   "config");
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    take(j, "adaptive", c.adaptive);
    if (j.contains("margins") && !j.at("margins").is_null()) {
      const auto& m = j.at("margins");
      reject_unknown(m, {"m1", "m2"}, "margins");
      c.margins = Margins{m.at("m1").get<double>(), m.at("m2").get<double>()};
    }
    take(j, "omega_rec", c.omega_rec);
    take(j, "omega_kl", c.omega_kl);
    if (j.contains("weight_config")) {
      const auto& w = j.at("weight_config");
      reject_unknown(w, {"omega_ssl", "eps", "omega_cap", "rec_grad_fallback"}, "weight_config");
      take(w, "omega_ssl", c.weight_config.omega_ssl);
      take(w, "eps", c.weight_config.eps);
      take(w, "omega_cap", c.weight_config.omega_cap);
      take(w, "rec_grad_fallback", c.weight_config.rec_grad_fallback);
    }
    take(j, "lr", c.lr);
    take(j, "lr_decay_gamma", c.lr_decay_gamma);
    take(j, "batch_size", c.batch_size);
    take(j, "steps", c.steps);
    take(j, "seed", c.seed);
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      reject_unknown(e, {"downsample_factors", "latent_dim", "base_channels", "activation"}, "encoder");
      take(e, "downsample_factors", c.encoder.downsample_factors);
      take(e, "latent_dim", c.encoder.latent_dim);
      take(e, "base_channels", c.encoder.base_channels);
      if (e.contains("activation")) c.encoder.activation = parse_activation(e.at("activation").get<std::string>());
    }
    if (j.contains("projection")) {
      const auto& p = j.at("projection");
      reject_unknown(p, {"out_dim", "hidden_layers", "hidden_dim", "hidden_activation", "identity_init"},
                     "projection");
      take(p, "out_dim", c.projection.out_dim);
      take(p, "hidden_layers", c.projection.hidden_layers);
      take(p, "hidden_dim", c.projection.hidden_dim);
      if (p.contains("hidden_activation"))
        c.projection.hidden_activation = parse_activation(p.at("hidden_activation").get<std::string>());
      take(p, "identity_init", c.projection.identity_init);
    }
    if (j.contains("teacher")) {
      const auto& t = j.at("teacher");
      reject_unknown(t, {"kind", "teacher_dim", "teacher_rate", "resample", "seed", "base_channels"}, "teacher");
      if (t.contains("kind")) c.teacher.kind = parse_teacher_kind(t.at("kind").get<std::string>());
      take(t, "teacher_dim", c.teacher.teacher_dim);
      take(t, "teacher_rate", c.teacher.teacher_rate);
      if (t.contains("resample")) c.teacher.resample = parse_resample(t.at("resample").get<std::string>());
      take(t, "seed", c.teacher.seed);
      take(t, "base_channels", c.teacher.base_channels);
    }
    if (j.contains("recon")) {
      const auto& r = j.at("recon");
      reject_unknown(r, {"use_stft", "stft_windows"}, "recon");
      take(r, "use_stft", c.recon.use_stft);
      take(r, "stft_windows", c.recon.stft_windows);
    }
    take(j, "crop_samples", c.crop_samples);
    take(j, "checkpoint_interval", c.checkpoint_interval);
    take(j, "max_pairs_frames", c.max_pairs_frames);
    if (j.contains("align_source")) {
      const auto s = j.at("align_source").get<std::string>();
      if (s == "sampled") c.align_source = AlignSource::sampled;
      else if (s == "mean") c.align_source = AlignSource::mean;
      else throw ValidationError("align_source must be 'sampled' or 'mean'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

std::string config_hash(const TrainConfig& config) {
  ordered_json arch{{"encoder", encoder_json(config.encoder)},
                    {"projection", projection_json(config.projection)},
                    {"teacher", teacher_json(config.teacher)}};
  const std::string s = arch.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// ---------------------------------------------------------------------------

bool LossComponents::all_finite() const noexcept {
  for (double v : {rec, rec_waveform, rec_stft, kl, t, d, mcos, mdss})
    if (!std::isfinite(v)) return false;
  return true;
}

double weighted_total(const LossComponents& c, const AppliedWeights& w) noexcept {
  return w.rec * c.rec + w.kl * c.kl + w.t * c.t + w.d * c.d + w.mcos * c.mcos + w.mdss * c.mdss;
}

AppliedWeights applied_weights(const TrainConfig& config, double omega_adaptive, const JointWeights& joint) {
  AppliedWeights w;
  w.rec = config.omega_rec;
  w.kl = config.omega_kl;
  WeightConfig wc = config.weight_config;
  wc.mode = config.adaptive ? WeightMode::adaptive : WeightMode::static_weights;
  switch (config.scheme) {
    case Scheme::vanilla: break;
    case Scheme::tas: w.t = effective_distill_weight(wc, omega_adaptive); break;
    case Scheme::das: w.d = effective_distill_weight(wc, omega_adaptive); break;
    case Scheme::jmas:
      w.mcos = effective_distill_weight(wc, joint.omega_mcos);
      w.mdss = effective_distill_weight(wc, joint.omega_mdss);
      break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// TrainLog CSV

namespace {
constexpr const char* kLogHeader =
    "step,total_loss,loss_rec,loss_rec_waveform,loss_rec_stft,loss_kl,loss_T,loss_D,loss_mcos,loss_mdss,"
    "w_rec,w_kl,w_T,w_D,w_mcos,w_mdss,lr";
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(17);
  out << kLogHeader << '\n';
  for (const auto& r : rows) {
    const auto& c = r.losses;
    const auto& w = r.weights;
    out << r.step << ',' << r.total_loss << ',' << c.rec << ',' << c.rec_waveform << ',' << c.rec_stft << ','
        << c.kl << ',' << c.t << ',' << c.d << ',' << c.mcos << ',' << c.mdss << ',' << w.rec << ',' << w.kl
        << ',' << w.t << ',' << w.d << ',' << w.mcos << ',' << w.mdss << ',' << r.lr << '\n';
  }
  if (diverged) out << "# diverged at step " << diverged_step.value_or(0) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

TrainLog TrainLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open");
  TrainLog log;
  std::string line;
  std::getline(in, line);
  if (line != kLogHeader) throw ValidationError(path.string() + ": unexpected train log header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# diverged at step ", 0) == 0) {
      log.diverged = true;
      log.diverged_step = std::stoull(line.substr(19));
      continue;
    }
    std::istringstream ss(line);
    std::vector<double> v;
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 17) throw ValidationError(path.string() + ": malformed train log row");
    TrainLogRow r;
    r.step = static_cast<std::uint64_t>(v[0]);
    r.total_loss = v[1];
    r.losses = {v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], false};
    r.weights = {v[10], v[11], v[12], v[13], v[14], v[15]};
    r.lr = v[16];
    log.rows.push_back(r);
  }
  return log;
}

// ---------------------------------------------------------------------------

Corpus Corpus::load(const DatasetManifest& manifest) {
  Corpus c;
  c.manifest = manifest;
  c.waveforms.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto w = load_waveform(manifest.resolve(e.waveform_path));
    if (w.samples.size() != e.num_samples)
      throw ValidationError("clip " + e.clip_id + ": waveform length does not match manifest");
    c.waveforms.push_back(std::move(w.samples));
  }
  return c;
}

namespace {

float snap(double v) { return static_cast<float>(v); }

void snap_all(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(snap(x));
}

}  // namespace

Trainer::Trainer(TrainConfig config, const Corpus& corpus) : config_(std::move(config)) {
  config_.validate();
  model_ = std::make_shared<VaeModel>(config_.encoder, config_.projection, mix_seed(config_.seed, 0x1417));
  for (auto& p : model_->params()) snap_all(p.value);
  for (const auto& p : model_->params()) {
    adam_.m.emplace_back(p.value.size(), 0.0);
    adam_.v.emplace_back(p.value.size(), 0.0);
  }
  init(corpus);
}

Trainer::Trainer(const Checkpoint& resume, const Corpus& corpus) : config_(resume.config) {
  config_.validate();
  model_ = std::make_shared<VaeModel>(*resume.model);
  adam_ = resume.adam;
  step_ = resume.step;
  init(corpus);
}

void Trainer::init(const Corpus& corpus) {
  corpus_ = &corpus;
  if (corpus.manifest.entries.empty()) throw ValidationError("manifest is empty");
  validate_manifest(corpus.manifest, false);
  const std::size_t hop = config_.encoder.hop();
  for (std::size_t i = 0; i < corpus.waveforms.size(); ++i) {
    if (corpus.waveforms[i].size() < hop)
      throw ValidationError("clip " + corpus.manifest.entries[i].clip_id + " is shorter than one hop");
  }
  if (config_.scheme != Scheme::vanilla) {
    teacher_ = std::make_unique<Teacher>(config_.teacher, config_.encoder.downsample_factors, &corpus.manifest);
    teacher_->check_manifest(corpus.manifest);
  }
}

double Trainer::lr_at(std::uint64_t step) const {
  return config_.lr * std::pow(config_.lr_decay_gamma, static_cast<double>(step));
}

const std::vector<double>& Trainer::clip_teacher(std::size_t clip) const {
  auto it = teacher_cache_.find(clip);
  if (it != teacher_cache_.end()) return it->second;
  const auto& wave = corpus_->waveforms[clip];
  const std::size_t t_clip = latent_frames(wave.size(), config_.encoder.hop());
  return teacher_cache_.emplace(clip, teacher_->clip_features(clip, wave, t_clip)).first->second;
}

Batch Trainer::make_batch(std::uint64_t step) const {
  const std::size_t hop = config_.encoder.hop();
  const std::size_t B = config_.batch_size;
  const std::size_t S = config_.crop_samples;
  const std::size_t T = S / hop;
  std::mt19937_64 rng(mix_seed(config_.seed, step, 0xba7c));
  Batch batch;
  batch.batch = B;
  batch.samples = S;
  batch.waveform.assign(B * S, 0.0);
  const std::size_t n_clips = corpus_->waveforms.size();
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t clip = std::uniform_int_distribution<std::size_t>(0, n_clips - 1)(rng);
    const auto& wave = corpus_->waveforms[clip];
    std::size_t start = 0;
    if (wave.size() > S) {
      const std::size_t max_hop = (wave.size() - S) / hop;
      start = std::uniform_int_distribution<std::size_t>(0, max_hop)(rng) * hop;
    }
    const std::size_t len = std::min(S, wave.size() - start);
    std::copy_n(wave.begin() + static_cast<std::ptrdiff_t>(start), len,
                batch.waveform.begin() + static_cast<std::ptrdiff_t>(b * S));
    batch.clips.push_back(clip);
    batch.starts.push_back(start);
    batch.valid_lengths.push_back(len / hop * hop);
  }
  if (teacher_) {
    const std::size_t D = config_.teacher.teacher_dim;
    std::vector<double> f(B * T * D, 0.0);
    std::vector<std::uint8_t> mask(B * T, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tf = clip_teacher(batch.clips[b]);
      const std::size_t t0 = batch.starts[b] / hop;
      const std::size_t valid_t = batch.valid_lengths[b] / hop;
      for (std::size_t t = 0; t < valid_t; ++t) {
        std::copy_n(tf.begin() + static_cast<std::ptrdiff_t>((t0 + t) * D), D,
                    f.begin() + static_cast<std::ptrdiff_t>((b * T + t) * D));
        mask[b * T + t] = 1;
      }
    }
    batch.teacher = FeatureBatch(B, T, D, std::move(f), std::move(mask));
  }
  return batch;
}

StepOutput Trainer::composite_loss(const Batch& batch, std::uint64_t step, Gradients* grads) const {
  const VaeModel& model = *model_;
  const std::size_t B = batch.batch;
  const std::size_t L = config_.encoder.latent_dim;

  EncoderCache enc;
  const LatentPosterior post = model.encode(batch.waveform, B, batch.valid_lengths, &enc);
  const std::size_t T = post.frames;
  std::vector<double> eps;
  const std::vector<double> z = reparameterize(post, mix_seed(config_.seed, step, 0x2e55), &eps);

  DecoderCache dec;
  const std::vector<double> x_hat = model.decode(z, B, T, &dec);

  StepOutput out;
  std::vector<double> dx_hat;
  if (grads) dx_hat.assign(x_hat.size(), 0.0);
  const ReconTerms rec = recon_loss(batch.waveform, x_hat, B, batch.valid_lengths, config_.recon, dx_hat);
  out.losses.rec = rec.total;
  out.losses.rec_waveform = rec.waveform_l1;
  out.losses.rec_stft = rec.stft_l1;

  std::vector<double> dmu_kl, dlv_kl;
  if (grads) {
    dmu_kl.assign(post.mu.size(), 0.0);
    dlv_kl.assign(post.mu.size(), 0.0);
  }
  out.losses.kl = kl_loss(post, dmu_kl, dlv_kl);

  // Distillation components: value, d/dzp.
  struct Component {
    double* value;
    double AppliedWeights::*weight;
    std::vector<double> dzp;
  };
  std::vector<Component> comps;
  ProjectionCache pcache;
  if (config_.scheme != Scheme::vanilla) {
    const auto& src = config_.align_source == AlignSource::sampled ? z : post.mu;
    FeatureBatch a(B, T, L, src, post.mask);
    const FeatureBatch zp = model.project(a, &pcache);
    const FeatureBatch& f = batch.teacher;
    const std::size_t n = zp.values().size();
    auto grad_buf = [&]() { return grads ? std::vector<double>(n, 0.0) : std::vector<double>{}; };
    switch (config_.scheme) {
      case Scheme::tas: {
        Component c{&out.losses.t, &AppliedWeights::t, grad_buf()};
        out.losses.t = loss_T(zp, f, c.dzp);
        comps.push_back(std::move(c));
        break;
      }
      case Scheme::das: {
        Component c{&out.losses.d, &AppliedWeights::d, grad_buf()};
        out.losses.d = loss_D(zp, f, c.dzp);
        comps.push_back(std::move(c));
        break;
      }
      case Scheme::jmas: {
        Component c1{&out.losses.mcos, &AppliedWeights::mcos, grad_buf()};
        out.losses.mcos = loss_mcos(zp, f, config_.margins->m1, c1.dzp);
        Component c2{&out.losses.mdss, &AppliedWeights::mdss, grad_buf()};
        const auto r = loss_mdss(zp, f, config_.margins->m2, config_.max_pairs_frames, c2.dzp,
                                 mix_seed(config_.seed, step, 0xd55));
        out.losses.mdss = r.value;
        out.losses.mdss_approximate = r.approximate;
        comps.push_back(std::move(c1));
        comps.push_back(std::move(c2));
        break;
      }
      case Scheme::vanilla: break;
    }
  }

  if (!grads) {
    out.weights = applied_weights(config_, 1.0, {});
    out.total = weighted_total(out.losses, out.weights);
    return out;
  }

  // Backward pieces, one per raw loss, so gradient norms can be measured per loss.
  const auto proj_ids = model.projection_param_ids();
  Gradients g_rec(model.params());
  std::vector<double> dz_rec(z.size(), 0.0);
  model.decode_backward(dec, dx_hat, g_rec, dz_rec);

  std::vector<Gradients> g_comp;
  std::vector<std::vector<double>> da_comp;
  std::vector<double> comp_norms;
  for (auto& c : comps) {
    g_comp.emplace_back(model.params());
    da_comp.emplace_back(z.size(), 0.0);
    model.project_backward(pcache, c.dzp, g_comp.back(), da_comp.back());
    comp_norms.push_back(grad_norm(g_comp.back(), proj_ids));
  }

  double omega_adaptive = 1.0;
  JointWeights joint;
  if (config_.scheme != Scheme::vanilla && config_.adaptive) {
    double rec_norm = grad_norm(g_rec, proj_ids);
    if (rec_norm == 0.0 && config_.weight_config.rec_grad_fallback) {
      // Reconstruction never reaches the projection head; measure it on the
      // latent heads that feed the projection input instead.
      std::vector<double> dlv_rec(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) dlv_rec[i] = dz_rec[i] * eps[i] * 0.5 * std::exp(0.5 * post.logvar[i]);
      Gradients g_head(model.params());
      model.head_backward(enc, dz_rec, dlv_rec, g_head);
      rec_norm = grad_norm(g_head, model.head_param_ids());
    }
    out.has_trace = true;
    out.trace.step = step;
    out.trace.grad_norm_rec = rec_norm;
    if (config_.scheme == Scheme::jmas) {
      joint = joint_adaptive_weights(rec_norm, comp_norms[0], comp_norms[1], config_.weight_config);
      out.trace.omega_mcos = joint.omega_mcos;
      out.trace.omega_mdss = joint.omega_mdss;
      out.trace.grad_norm_mcos = comp_norms[0];
      out.trace.grad_norm_mdss = comp_norms[1];
    } else {
      omega_adaptive = adaptive_weight(rec_norm, comp_norms[0], config_.weight_config);
      out.trace.omega_adaptive = omega_adaptive;
      out.trace.grad_norm_distill = comp_norms[0];
    }
  }
  out.weights = applied_weights(config_, omega_adaptive, joint);
  out.total = weighted_total(out.losses, out.weights);

  // Combine with the weights held constant.
  Gradients& g = *grads;
  g.zero();
  g.add_scaled(g_rec, out.weights.rec);
  std::vector<double> da(z.size(), 0.0);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const double w = out.weights.*(comps[i].weight);
    g.add_scaled(g_comp[i], w);
    k.axpy(w, da_comp[i].data(), da.data(), da.size());
  }
  std::vector<double> dz(z.size(), 0.0);
  k.axpy(out.weights.rec, dz_rec.data(), dz.data(), dz.size());
  if (config_.align_source == AlignSource::sampled) k.axpy(1.0, da.data(), dz.data(), dz.size());
  std::vector<double> dmu(dz);
  k.axpy(out.weights.kl, dmu_kl.data(), dmu.data(), dmu.size());
  if (config_.align_source == AlignSource::mean) k.axpy(1.0, da.data(), dmu.data(), dmu.size());
  std::vector<double> dlv(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    dlv[i] = dz[i] * eps[i] * 0.5 * std::exp(0.5 * post.logvar[i]) + out.weights.kl * dlv_kl[i];
  model.encode_backward(enc, dmu, dlv, g);
  return out;
}

std::optional<TrainLogRow> Trainer::train_step(WeightTrace* trace) {
  const Batch batch = make_batch(step_);
  Gradients g(model_->params());
  const StepOutput out = composite_loss(batch, step_, &g);
  if (!std::isfinite(out.total) || !out.losses.all_finite() || !g.all_finite()) return std::nullopt;

  TrainLogRow row;
  row.step = step_;
  row.total_loss = out.total;
  row.losses = out.losses;
  row.weights = out.weights;
  row.lr = lr_at(step_);

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  const double t = static_cast<double>(step_ + 1);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  auto& params = model_->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i).value;
    auto& m = adam_.m[i];
    auto& v = adam_.v[i];
    const auto gi = g[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = snap(beta1 * m[j] + (1.0 - beta1) * gi[j]);
      v[j] = snap(beta2 * v[j] + (1.0 - beta2) * gi[j] * gi[j]);
      p[j] = snap(p[j] - row.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam_eps));
    }
  }
  if (trace && out.has_trace) trace->append(out.trace);
  ++step_;
  return row;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.model = std::make_shared<VaeModel>(*model_);
  c.adam = adam_;
  c.step = step_;
  return c;
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const TrainOptions& options) {
  std::unique_ptr<Trainer> trainer;
  if (options.resume) {
    Checkpoint resume = *options.resume;
    if (config_hash(resume.config) != config_hash(config))
      throw ValidationError("resume checkpoint was trained with a different architecture");
    resume.config = config;
    trainer = std::make_unique<Trainer>(resume, corpus);
  } else {
    trainer = std::make_unique<Trainer>(config, corpus);
  }
  const bool joint = trainer->config().scheme == Scheme::jmas;
  TrainResult result{trainer->checkpoint(), {}, WeightTrace(joint)};
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  while (trainer->step() < trainer->config().steps) {
    const std::uint64_t step = trainer->step();
    auto row = trainer->train_step(&result.trace);
    if (!row) {
      result.log.diverged = true;
      result.log.diverged_step = step;
      break;
    }
    result.log.rows.push_back(*row);
    if (options.on_step) options.on_step(*row);
    const std::size_t every = trainer->config().checkpoint_interval;
    if (options.out_dir && every > 0 && trainer->step() % every == 0 && trainer->step() < trainer->config().steps)
      save_checkpoint(trainer->checkpoint(),
                      *options.out_dir / "checkpoints" / ("step_" + std::to_string(trainer->step())));
  }
  result.checkpoint = trainer->checkpoint();
  if (options.out_dir) {
    save_checkpoint(result.checkpoint, *options.out_dir / "checkpoint");
    result.log.write_csv(*options.out_dir / "train_log.csv");
    if (trainer->config().adaptive && trainer->config().scheme != Scheme::vanilla)
      result.trace.write_csv(*options.out_dir / "weight_trace.csv");
  }
  return result;
}

}  // namespace vaealign
