// SPDX-License-Identifier: Apache-2.0
#include "vaealign/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vaealign/errors.hpp"

namespace vaealign {

using nlohmann::json;

namespace {

void check_range(const char* field, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << field << " = " << v << " outside [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
}

void check_percent(const char* field, double v) { check_range(field, v, 0.0, 100.0); }

}  // namespace

void MetricRecord::validate() const {
  check_range("pesq", pesq, 1.0, 5.0);
  check_range("stoi", stoi, 0.0, 1.0);
  check_percent("er_acc", er_acc);
  check_percent("pr_per", pr_per);
  check_percent("asr_wer", asr_wer);
  check_percent("ks_acc", ks_acc);
  check_percent("sid_acc", sid_acc);
  check_percent("asv_eer", asv_eer);
  check_percent("sd_der", sd_der);
  check_percent("ic_acc", ic_acc);
  check_percent("tts_wer", tts_wer);
  check_range("tts_sim", tts_sim, 0.0, 1.0);
}

MeanKind parse_mean_kind(std::string_view s) {
  if (s == "geometric") return MeanKind::geometric;
  if (s == "arithmetic") return MeanKind::arithmetic;
  if (s == "harmonic") return MeanKind::harmonic;
  throw ValidationError("unknown mean kind '" + std::string(s) + "'");
}

std::string_view to_string(MeanKind k) noexcept {
  switch (k) {
    case MeanKind::geometric: return "geometric";
    case MeanKind::arithmetic: return "arithmetic";
    case MeanKind::harmonic: return "harmonic";
  }
  return "geometric";
}

double score_reconstruction(double pesq, double stoi) {
  check_range("pesq", pesq, 1.0, 5.0);
  check_range("stoi", stoi, 0.0, 1.0);
  return (pesq / 5.0 + stoi) / 2.0;
}

double score_understanding(const MetricRecord& r) {
  check_percent("er_acc", r.er_acc);
  check_percent("pr_per", r.pr_per);
  check_percent("asr_wer", r.asr_wer);
  check_percent("ks_acc", r.ks_acc);
  check_percent("sid_acc", r.sid_acc);
  check_percent("asv_eer", r.asv_eer);
  check_percent("sd_der", r.sd_der);
  check_percent("ic_acc", r.ic_acc);
  const double acc = r.er_acc + r.ks_acc + r.sid_acc + r.ic_acc;
  const double err = (100.0 - r.pr_per) + (100.0 - r.asr_wer) + (100.0 - r.asv_eer) + (100.0 - r.sd_der);
  return (acc + err) / 800.0;
}

double score_generation(double tts_wer_percent, double sim) {
  check_percent("tts_wer", tts_wer_percent);
  check_range("tts_sim", sim, 0.0, 1.0);
  return (1.0 - tts_wer_percent / 100.0 + sim) / 2.0;
}

double overall_score(double x_r, double x_u, double x_g, MeanKind kind) {
  check_range("x_r", x_r, 0.0, 1.0);
  check_range("x_u", x_u, 0.0, 1.0);
  check_range("x_g", x_g, 0.0, 1.0);
  switch (kind) {
    case MeanKind::geometric: return std::cbrt(x_r * x_u * x_g);
    case MeanKind::arithmetic: return (x_r + x_u + x_g) / 3.0;
    case MeanKind::harmonic:
      if (x_r == 0.0 || x_u == 0.0 || x_g == 0.0)
        throw ValidationError("harmonic mean undefined with a zero component");
      return 3.0 / (1.0 / x_r + 1.0 / x_u + 1.0 / x_g);
  }
  return 0.0;
}

TaskScores score_record(const MetricRecord& r, MeanKind kind) {
  r.validate();
  TaskScores s;
  s.x_r = score_reconstruction(r.pesq, r.stoi);
  s.x_u = score_understanding(r);
  s.x_g = score_generation(r.tts_wer, r.tts_sim);
  s.overall = overall_score(s.x_r, s.x_u, s.x_g, kind);
  s.mean_kind = kind;
  return s;
}

double round3(double v) {
  // The nudge keeps values like 0.1235 (stored as 0.12349999...) rounding up.
  return std::floor(v * 1000.0 + 0.5 + 1e-9) / 1000.0;
}

MetricRecord metric_record_from_json(const json& j) {
  MetricRecord r;
  try {
    r.method = j.value("method", std::string{});
    r.pesq = j.at("pesq").get<double>();
    r.stoi = j.at("stoi").get<double>();
    r.er_acc = j.at("er_acc").get<double>();
    r.pr_per = j.at("pr_per").get<double>();
    r.asr_wer = j.at("asr_wer").get<double>();
    r.ks_acc = j.at("ks_acc").get<double>();
    r.sid_acc = j.at("sid_acc").get<double>();
    r.asv_eer = j.at("asv_eer").get<double>();
    r.sd_der = j.at("sd_der").get<double>();
    r.ic_acc = j.at("ic_acc").get<double>();
    r.tts_wer = j.at("tts_wer").get<double>();
    r.tts_sim = j.at("tts_sim").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metric record: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<MetricRecord> read_metric_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open metrics file");
  std::vector<MetricRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(metric_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw ValidationError(path.string() + ": no metric records");
  return out;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records,
                      const std::vector<TaskScores>& scores) {
  if (records.size() != scores.size()) throw ValidationError("records and scores differ in length");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "method,x_r,x_u,x_g,overall\n" << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = scores[i];
    out << records[i].method << ',' << round3(s.x_r) << ',' << round3(s.x_u) << ',' << round3(s.x_g) << ','
        << round3(s.overall) << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("pearson: series differ in length");
  const std::size_t n = xs.size();
  if (n < 2) throw ValidationError("pearson: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson: correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

AlignDistances distance_report(const StudentFeatures& student, const Teacher& teacher, const Corpus& corpus,
                               std::size_t hop) {
  const std::size_t D = teacher.config().teacher_dim;
  double sum_mcos = 0.0, sum_mdss = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < corpus.waveforms.size(); ++c) {
    const auto& wave = corpus.waveforms[c];
    const std::size_t valid_t = wave.size() / hop;
    if (valid_t == 0) continue;
    const std::size_t T = latent_frames(wave.size(), hop);
    std::vector<std::uint8_t> mask(T, 0);
    std::fill_n(mask.begin(), valid_t, std::uint8_t{1});
    const FeatureBatch f(1, T, D, teacher.clip_features(c, wave, T), mask);
    const FeatureBatch zp = student(c, f);
    const AlignDistances d = align_distances(zp, f);
    sum_mcos += d.d_mcos;
    sum_mdss += d.d_mdss;
    ++used;
  }
  if (used == 0) throw ValidationError("distance_report: no clip spans a full latent frame");
  return {sum_mcos / static_cast<double>(used), sum_mdss / static_cast<double>(used)};
}

AlignDistances distance_report(const VaeModel& model, const Teacher& teacher, const Corpus& corpus) {
  if (model.projection_config().out_dim != teacher.config().teacher_dim)
    throw ValidationError("projection dim " + std::to_string(model.projection_config().out_dim) +
                          " does not match teacher dim " + std::to_string(teacher.config().teacher_dim));
  const std::size_t hop = model.encoder_config().hop();
  const std::size_t L = model.encoder_config().latent_dim;
  auto student = [&](std::size_t c, const FeatureBatch&) {
    const auto& wave = corpus.waveforms[c];
    const std::size_t len[1] = {wave.size()};
    const LatentPosterior post = model.encode(wave, 1, len);
    return model.project(FeatureBatch(1, post.frames, L, post.mu, post.mask));
  };
  return distance_report(student, teacher, corpus, hop);
}

AlignDistances distance_report(const Checkpoint& checkpoint, const Corpus& corpus) {
  if (!checkpoint.model) throw ValidationError("checkpoint has no model");
  const TrainConfig& cfg = checkpoint.config;
  Teacher teacher(cfg.teacher, cfg.encoder.downsample_factors, &corpus.manifest);
  teacher.check_manifest(corpus.manifest);
  return distance_report(*checkpoint.model, teacher, corpus);
}

double eval_recon(const VaeModel& model, const Corpus& corpus, const ReconConfig& recon) {
  const std::size_t hop = model.encoder_config().hop();
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& wave : corpus.waveforms) {
    const std::size_t valid = wave.size() / hop * hop;
    if (valid == 0) continue;
    const std::size_t len[1] = {valid};
    const std::span<const double> x(wave.data(), valid);
    const LatentPosterior post = model.encode(x, 1, len);
    const std::vector<double> x_hat = model.decode(post.mu, 1, post.frames);
    sum += recon_loss(x, x_hat, 1, len, recon).total;
    ++used;
  }
  if (used == 0) throw ValidationError("eval_recon: no clip spans a full latent frame");
  return sum / static_cast<double>(used);
}

}  // namespace vaealign
