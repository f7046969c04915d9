// SPDX-License-Identifier: Apache-2.0
// Acceptance harness. Usage: vaealign_acceptance [id...]; no ids runs all.
// Prints one "criterion N: PASS|FAIL ..." line per criterion and exits
// non-zero if any requested criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vaealign/adaptive_weighting.hpp"
#include "vaealign/alignment_losses.hpp"
#include "vaealign/evaluation.hpp"
#include "vaealign/featureio.hpp"
#include "vaealign/kernels.hpp"
#include "vaealign/stft.hpp"
#include "vaealign/trainer.hpp"
#include "vaealign/vae_core.hpp"

using namespace vaealign;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

FeatureBatch random_feats(std::size_t B, std::size_t T, std::size_t D, std::mt19937_64& rng,
                          const std::vector<std::uint8_t>& mask) {
  return FeatureBatch(B, T, D, testutil::randn(B * T * D, rng), mask);
}

std::vector<std::uint8_t> ragged_mask(std::size_t B, std::size_t T, std::mt19937_64& rng) {
  std::vector<std::uint8_t> m(B * T, 0);
  std::uniform_int_distribution<std::size_t> len(1, T);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t l = len(rng);
    for (std::size_t t = 0; t < l; ++t) m[b * T + t] = 1;
  }
  return m;
}

oracle::Feats to_oracle(const FeatureBatch& x) {
  return {x.batch(), x.frames(), x.dim(), {x.values().begin(), x.values().end()}, {x.mask().begin(), x.mask().end()}};
}

FeatureBatch with_values(const FeatureBatch& src, std::vector<double> v) {
  return FeatureBatch(src.batch(), src.frames(), src.dim(), std::move(v),
                      std::vector<std::uint8_t>(src.mask().begin(), src.mask().end()));
}

// Worst elementwise violation of |a - fd| <= 1e-4 max(|a|, |fd|) + 1e-9.
// The absolute floor only matters where both sides are numerically zero.
double worst_ratio(const std::vector<double>& an, const std::vector<double>& fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < an.size(); ++i) {
    const double tol = 1e-4 * std::max(std::fabs(an[i]), std::fabs(fd[i])) + 1e-9;
    worst = std::max(worst, std::fabs(an[i] - fd[i]) / tol);
  }
  return worst;
}

// ---------------------------------------------------------------------------

Outcome table_closure() {
  const auto t0 = Clock::now();
  const auto records = read_metric_records(std::filesystem::path(VAEALIGN_TEST_DATA) / "reference_metrics.jsonl");
  std::ifstream in(std::filesystem::path(VAEALIGN_TEST_DATA) / "reference_scores.csv");
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0, bad = 0;
  double worst = 0.0;
  for (const auto& r : records) {
    if (!std::getline(in, line)) return {false, "expected table shorter than metrics"};
    std::istringstream ls(line);
    std::string name, cell;
    std::getline(ls, name, ',');
    std::vector<double> want;
    while (std::getline(ls, cell, ',')) want.push_back(std::stod(cell));
    const auto s = score_record(r, MeanKind::geometric);
    const double got[4] = {s.x_r, s.x_u, s.x_g, s.overall};
    if (name != r.method || want.size() != 4) return {false, "row mismatch at " + r.method};
    for (int k = 0; k < 4; ++k) {
      const double diff = std::fabs(round3(got[k]) - want[k]);
      worst = std::max(worst, diff);
      if (diff > 1e-3 + 1e-9) ++bad;
    }
    ++rows;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = rows == 10 && bad == 0 && secs < 1.0;
  return {ok, std::to_string(rows) + " rows, worst |diff| " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> bd(1, 4), td(1, 8), dd(1, 8);
  std::uniform_real_distribution<double> margin(0.0, 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = bd(rng), T = td(rng), D = dd(rng);
    const auto mask = ragged_mask(B, T, rng);
    const FeatureBatch z = random_feats(B, T, D, rng, mask), f = random_feats(B, T, D, rng, mask);
    const auto oz = to_oracle(z), of = to_oracle(f);
    const double m1 = margin(rng), m2 = margin(rng);
    worst = std::max(worst, std::fabs(loss_T(z, f) - oracle::loss_T(oz, of)));
    worst = std::max(worst, std::fabs(loss_D(z, f) - oracle::loss_D(oz, of)));
    worst = std::max(worst, std::fabs(loss_mcos(z, f, m1) - oracle::loss_mcos(oz, of, m1)));
    worst = std::max(worst, std::fabs(loss_mdss(z, f, m2).value - oracle::loss_mdss(oz, of, m2)));
    LatentPosterior post;
    post.batch = B;
    post.frames = T;
    post.dim = D;
    post.mu = testutil::randn(B * T * D, rng);
    post.logvar = testutil::randn(B * T * D, rng, 0.5);
    post.mask = mask;
    worst = std::max(worst, std::fabs(kl_loss(post) - oracle::kl(post.mu, post.logvar, post.mask, D)));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst <= 1e-12 && secs < 30.0, "max |diff| " + fmt(worst) + " over 500 evaluations, " + fmt(secs) + " s"};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  const std::size_t B = 3, T = 5, D = 4;
  const auto mask = ragged_mask(B, T, rng);
  const FeatureBatch z = random_feats(B, T, D, rng, mask), f = random_feats(B, T, D, rng, mask);
  const std::vector<double> zv(z.values().begin(), z.values().end());

  std::vector<std::string> failed;
  double worst = 0.0;
  auto check = [&](const std::string& name, const std::function<double(const FeatureBatch&, std::span<double>)>& loss) {
    std::vector<double> g(zv.size());
    loss(z, g);
    const auto fd = oracle::central_diff([&](const std::vector<double>& x) { return loss(with_values(z, x), {}); }, zv, 1e-5);
    const double w = worst_ratio(g, fd);
    worst = std::max(worst, w);
    if (w > 1.0) failed.push_back(name);
  };
  check("loss_T", [&](const FeatureBatch& x, std::span<double> g) { return loss_T(x, f, g); });
  check("loss_D", [&](const FeatureBatch& x, std::span<double> g) { return loss_D(x, f, g); });
  check("loss_mcos", [&](const FeatureBatch& x, std::span<double> g) { return loss_mcos(x, f, 0.15, g); });
  check("loss_mdss", [&](const FeatureBatch& x, std::span<double> g) {
    return loss_mdss(x, f, 0.05, kDefaultMaxPairsFrames, g).value;
  });

  {
    LatentPosterior post;
    post.batch = B;
    post.frames = T;
    post.dim = D;
    post.mu = testutil::randn(B * T * D, rng);
    post.logvar = testutil::randn(B * T * D, rng, 0.5);
    post.mask = mask;
    std::vector<double> dmu(post.mu.size()), dlv(post.mu.size());
    kl_loss(post, dmu, dlv);
    auto fmu = [&](const std::vector<double>& v) { auto p = post; p.mu = v; return kl_loss(p); };
    auto flv = [&](const std::vector<double>& v) { auto p = post; p.logvar = v; return kl_loss(p); };
    const double w = std::max(worst_ratio(dmu, oracle::central_diff(fmu, post.mu, 1e-5)),
                              worst_ratio(dlv, oracle::central_diff(flv, post.logvar, 1e-5)));
    worst = std::max(worst, w);
    if (w > 1.0) failed.push_back("kl_loss");
  }
  {
    const std::size_t S = 2100;
    const auto x = testutil::randn(2 * S, rng, 0.3);
    auto y = testutil::randn(2 * S, rng, 0.3);
    const std::size_t len[2] = {S, 1700};
    const ReconConfig rc;
    std::vector<double> g(2 * S);
    recon_loss(x, y, 2, len, rc, g);
    std::vector<double> an, fd;
    for (std::size_t i = 0; i < 2 * S; i += 13) {
      const double y0 = y[i];
      y[i] = y0 + 1e-5;
      const double fp = recon_loss(x, y, 2, len, rc).total;
      y[i] = y0 - 1e-5;
      const double fm = recon_loss(x, y, 2, len, rc).total;
      y[i] = y0;
      an.push_back(g[i]);
      fd.push_back((fp - fm) / 2e-5);
    }
    const double w = worst_ratio(an, fd);
    worst = std::max(worst, w);
    if (w > 1.0) failed.push_back("recon_loss");
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::string detail = "worst error/tolerance " + fmt(worst) + ", " + fmt(secs) + " s";
  for (const auto& n : failed) detail += ", failed " + n;
  return {failed.empty() && secs < 120.0, detail};
}

// Objectives over the flattened projection parameters of a small model.
struct ProjectionProblem {
  VaeModel model;
  std::vector<std::size_t> ids;
  FeatureBatch z, f, target;

  ProjectionProblem()
      : model(
            [] {
              EncoderConfig e;
              e.latent_dim = 6;
              e.base_channels = 2;
              return e;
            }(),
            [] {
              ProjectionConfig p;
              p.out_dim = 5;
              p.hidden_layers = 1;
              p.hidden_dim = 7;
              p.hidden_activation = Activation::tanh;
              return p;
            }(),
            31),
        ids(model.projection_param_ids()) {
    std::mt19937_64 rng(32);
    const auto mask = ragged_mask(2, 6, rng);
    z = random_feats(2, 6, 6, rng, mask);
    f = random_feats(2, 6, 5, rng, mask);
    target = random_feats(2, 6, 5, rng, mask);
  }

  std::vector<double> flat() const {
    std::vector<double> out;
    for (auto id : ids) {
      const auto& v = model.params().at(id).value;
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  // loss(project(z)) and its gradient w.r.t. the projection parameters.
  ScalarObjective objective(std::function<double(const FeatureBatch&, std::span<double>)> loss) {
    return [this, loss](std::span<const double> p, std::span<double> grad) {
      std::size_t off = 0;
      for (auto id : ids) {
        auto& v = model.params().at(id).value;
        std::copy(p.begin() + static_cast<std::ptrdiff_t>(off), p.begin() + static_cast<std::ptrdiff_t>(off + v.size()),
                  v.begin());
        off += v.size();
      }
      ProjectionCache cache;
      const FeatureBatch zp = model.project(z, &cache);
      if (grad.empty()) return loss(zp, {});
      std::vector<double> dzp(zp.values().size(), 0.0), dz(z.values().size(), 0.0);
      const double value = loss(zp, dzp);
      Gradients g(model.params());
      model.project_backward(cache, dzp, g, dz);
      off = 0;
      for (auto id : ids) {
        std::copy(g[id].begin(), g[id].end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
        off += g[id].size();
      }
      return value;
    };
  }
};

ScalarObjective scaled(const ScalarObjective& f, double c) {
  return [f, c](std::span<const double> x, std::span<double> g) {
    const double v = f(x, g);
    for (auto& gi : g) gi *= c;
    return c * v;
  };
}

Outcome adaptive_contract() {
  const auto t0 = Clock::now();
  ProjectionProblem pp;
  const auto p0 = pp.flat();
  const auto distill = pp.objective([&](const FeatureBatch& zp, std::span<double> g) { return loss_T(zp, pp.f, g); });
  const auto rec = pp.objective([&](const FeatureBatch& zp, std::span<double> g) {
    // masked squared error against a fixed target
    double v = 0.0;
    for (std::size_t i = 0; i < zp.values().size(); ++i) {
      const double m = zp.mask()[i / zp.dim()];
      const double d = m * (zp.values()[i] - pp.target.values()[i]);
      v += 0.5 * d * d;
      if (!g.empty()) g[i] = m * d;
    }
    return v;
  });
  WeightConfig cfg;
  cfg.mode = WeightMode::adaptive;

  // (a)
  const double w_same = adaptive_weight(rec, rec, p0, cfg);
  const bool a_ok = w_same == 1.0;

  // (b) weighted gradient omega(c L) * grad(c L) is invariant in c
  std::vector<double> gd(p0.size());
  distill(p0, gd);
  const double w1 = adaptive_weight(rec, distill, p0, cfg);
  double b_worst = 0.0;
  for (double c : {0.1, 10.0, 1000.0}) {
    const auto dc = scaled(distill, c);
    std::vector<double> gc(p0.size());
    dc(p0, gc);
    const double wc = adaptive_weight(rec, dc, p0, cfg);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < gc.size(); ++i) {
      const double ref = w1 * gd[i];
      num += (wc * gc[i] - ref) * (wc * gc[i] - ref);
      den += ref * ref;
    }
    b_worst = std::max(b_worst, std::sqrt(num / den));
  }
  const bool b_ok = b_worst <= 1e-8;

  // (c) grad_norm against per-parameter central differences
  double c_worst = 0.0;
  for (const auto* obj : {&rec, &distill}) {
    const double an = grad_norm(*obj, p0);
    const auto fd = oracle::central_diff([&](const std::vector<double>& x) { return (*obj)(x, {}); }, p0, 1e-5);
    double fdn = 0.0;
    for (double v : fd) fdn += v * v;
    fdn = std::sqrt(fdn);
    c_worst = std::max(c_worst, std::fabs(an - fdn) / fdn);
  }
  const bool c_ok = c_worst <= 1e-4;
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {a_ok && b_ok && c_ok && secs < 60.0,
          "(a) omega " + fmt(w_same) + ", (b) max rel " + fmt(b_worst) + ", (c) max rel " + fmt(c_worst) + ", " +
              fmt(secs) + " s"};
}

// Shared toy setup for the training criteria.
constexpr std::uint64_t kToyCorpusSeed = 11;

Corpus toy_corpus(const std::filesystem::path& dir) {
  SyntheticSpec spec;
  spec.num_clips = 200;
  spec.clip_seconds = 1.0;
  spec.seed = kToyCorpusSeed;
  return Corpus::load(generate_synthetic_corpus(spec, dir));
}

TrainConfig toy_config(Scheme scheme, std::uint64_t seed) {
  TrainConfig c;
  c.scheme = scheme;
  c.adaptive = true;
  c.steps = 2000;
  c.lr = 1e-3;
  c.seed = seed;
  c.encoder.base_channels = 16;
  c.projection.out_dim = 64;
  c.teacher.teacher_dim = 64;
  c.align_source = AlignSource::mean;
  return c;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome toy_convergence() {
  const auto t0 = Clock::now();
  testutil::TempDir dir("accept_toy");
  const Corpus corpus = toy_corpus(dir.path());
  const TrainConfig cfg = toy_config(Scheme::tas, 5);
  const double d0 = distance_report(Trainer(cfg, corpus).checkpoint(), corpus).d_mcos;
  const auto result = train(cfg, corpus);
  if (result.log.diverged) return {false, "run diverged"};
  const double d1 = distance_report(result.checkpoint, corpus).d_mcos;
  const double rec0 = result.log.rows.front().losses.rec, rec1 = result.log.rows.back().losses.rec;
  const std::size_t tail = result.trace.rows().size() / 10;
  std::vector<double> omegas;
  for (std::size_t i = result.trace.rows().size() - tail; i < result.trace.rows().size(); ++i)
    omegas.push_back(result.trace.rows()[i].omega_adaptive);
  const double med = median(omegas);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = d1 <= 0.5 * d0 && rec1 < rec0 && med > 10.0 && secs <= 900.0;
  return {ok, "d_mcos " + fmt(d0) + " -> " + fmt(d1) + ", loss_rec " + fmt(rec0) + " -> " + fmt(rec1) +
                  ", median omega (last 10%) " + fmt(med) + ", " + fmt(secs) + " s"};
}

Outcome margin_monotonicity() {
  const auto t0 = Clock::now();
  testutil::TempDir dir("accept_margin");
  const Corpus corpus = toy_corpus(dir.path());
  const Margins settings[3] = {{0.0, 0.0}, {0.5, 0.25}, {1.0, 1.0}};
  std::string detail;
  bool ok = false;
  for (std::uint64_t seed : {5u, 6u}) {
    double d[3];
    for (int k = 0; k < 3; ++k) {
      TrainConfig cfg = toy_config(Scheme::jmas, seed);
      cfg.margins = settings[k];
      const auto result = train(cfg, corpus);
      d[k] = result.log.diverged ? NAN : distance_report(result.checkpoint, corpus).d_mcos;
    }
    detail += "seed " + std::to_string(seed) + ": " + fmt(d[0]) + " < " + fmt(d[1]) + " < " + fmt(d[2]) + "; ";
    if (d[0] < d[1] && d[1] < d[2]) {
      ok = true;
      break;
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {ok && secs <= 2700.0, detail + fmt(secs) + " s"};
}

Outcome shape_contract() {
  const auto t0 = Clock::now();
  const VaeModel model(EncoderConfig{}, ProjectionConfig{}, 1);
  std::mt19937_64 rng(5);
  std::string bad;
  for (std::size_t k = 1; k <= 10; ++k) {
    const auto x = testutil::randn(400 * k, rng, 0.1);
    const auto post = model.encode(x, 1);
    const bool frames_ok = post.frames == k && post.dim == 64 && post.valid_frames() == k;
    const auto y = model.decode(post.mu, 1, post.frames);
    if (!frames_ok || y.size() != 400 * k) bad += " k=" + std::to_string(k);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {bad.empty() && secs < 10.0, (bad.empty() ? "k = 1..10 ok" : "mismatch at" + bad) + ", " + fmt(secs) + " s"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VAEALIGN_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism() {
  const auto t0 = Clock::now();
  testutil::TempDir dir("accept_det");
  const std::string root = dir.path().string();
  if (run_cli("synth-data --clips 20 --seconds 1 --seed 4 --out " + root + "/data") != 0)
    return {false, "synth-data failed"};
  testutil::write_text(dir / "cfg.json",
                       R"({"scheme":"jmas","adaptive":true,"margins":{"m1":0.1,"m2":0.05},"steps":100,)"
                       R"("lr":1e-3,"seed":9,"projection":{"out_dim":64},"teacher":{"teacher_dim":64}})");
  for (const char* run : {"a", "b"}) {
    const int rc = run_cli("train --strict-determinism --config " + root + "/cfg.json --manifest " + root +
                           "/data/manifest.jsonl --out " + root + "/" + run);
    if (rc != 0) return {false, std::string("train exited ") + std::to_string(rc)};
  }
  const auto la = TrainLog::read_csv(dir / "a" / "train_log.csv");
  const auto lb = TrainLog::read_csv(dir / "b" / "train_log.csv");
  if (la.rows.size() != 100 || lb.rows.size() != 100) return {false, "expected 100 log rows"};
  double worst = 0.0;
  for (std::size_t i = 0; i < la.rows.size(); ++i) {
    const auto& a = la.rows[i];
    const auto& b = lb.rows[i];
    const double fa[] = {a.total_loss, a.losses.rec, a.losses.kl, a.losses.mcos, a.losses.mdss, a.weights.mcos,
                         a.weights.mdss, a.lr};
    const double fb[] = {b.total_loss, b.losses.rec, b.losses.kl, b.losses.mcos, b.losses.mdss, b.weights.mcos,
                         b.weights.mdss, b.lr};
    for (std::size_t k = 0; k < std::size(fa); ++k) worst = std::max(worst, std::fabs(fa[k] - fb[k]));
  }
  const bool identical =
      testutil::read_text(dir / "a" / "train_log.csv") == testutil::read_text(dir / "b" / "train_log.csv");
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst <= 1e-7 && secs < 120.0,
          std::string(identical ? "bit-identical logs" : "logs differ in bytes") + ", max field diff " + fmt(worst) +
              ", " + fmt(secs) + " s"};
}

Outcome vanilla_equivalence() {
  const auto t0 = Clock::now();
  testutil::TempDir dir("accept_vanilla");
  SyntheticSpec spec;
  spec.num_clips = 12;
  spec.clip_seconds = 0.5;
  spec.seed = 8;
  const Corpus corpus = Corpus::load(generate_synthetic_corpus(spec, dir.path()));
  auto base = [] {
    TrainConfig c;
    c.steps = 30;
    c.lr = 1e-3;
    c.seed = 21;
    c.batch_size = 2;
    c.crop_samples = 8000;
    c.encoder.base_channels = 8;
    c.encoder.latent_dim = 16;
    c.projection.out_dim = 32;
    c.teacher.teacher_dim = 32;
    c.teacher.base_channels = 8;
    return c;
  };
  const auto vanilla = train(base(), corpus);
  double worst = 0.0;
  for (Scheme s : {Scheme::tas, Scheme::das, Scheme::jmas}) {
    TrainConfig c = base();
    c.scheme = s;
    c.adaptive = false;
    c.weight_config.omega_ssl = 0.0;
    if (s == Scheme::jmas) c.margins = Margins{0.2, 0.1};
    const auto r = train(c, corpus);
    if (r.log.rows.size() != vanilla.log.rows.size()) return {false, std::string(to_string(s)) + ": step count differs"};
    for (std::size_t i = 0; i < r.log.rows.size(); ++i)
      worst = std::max(worst, std::fabs(r.log.rows[i].total_loss - vanilla.log.rows[i].total_loss));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst <= 1e-9 && secs < 120.0,
          "max total-loss diff " + fmt(worst) + " over " + std::to_string(vanilla.log.rows.size()) + " steps, " +
              fmt(secs) + " s"};
}

const std::vector<std::pair<const char*, std::function<Outcome()>>> kCriteria = {
    {"score closure on the reference table", table_closure},
    {"loss oracle equivalence", oracle_equivalence},
    {"gradient validation", gradient_checks},
    {"adaptive weight contract", adaptive_contract},
    {"toy convergence", toy_convergence},
    {"margin monotonicity", margin_monotonicity},
    {"shape contract", shape_contract},
    {"cli determinism", determinism},
    {"equivalence to vanilla", vanilla_equivalence},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> ids;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(kCriteria.size())) {
      std::cerr << "unknown criterion " << argv[i] << "\n";
      return 2;
    }
    ids.push_back(static_cast<std::size_t>(id));
  }
  if (ids.empty())
    for (std::size_t i = 1; i <= kCriteria.size(); ++i) ids.push_back(i);

  int failures = 0;
  for (auto id : ids) {
    Outcome o;
    try {
      o = kCriteria[id - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << " (" << kCriteria[id - 1].first << "): " << (o.pass ? "PASS" : "FAIL") << " "
              << o.detail << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
