// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "test_util.hpp"
#include "vaealign/errors.hpp"
#include "vaealign/trainer.hpp"

using namespace vaealign;
using testutil::TempDir;

namespace {

double total_from_row(const TrainLogRow& r) { return weighted_total(r.losses, r.weights); }

// Full-parameter gradient of composite_loss at a given step.
std::vector<std::vector<double>> flat_grad(const Trainer& t, const Batch& b, std::uint64_t step) {
  Gradients g(t.model().params());
  t.composite_loss(b, step, &g);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.emplace_back(g[i].begin(), g[i].end());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config json round trip and validation") {
    TrainConfig c = fixture::tiny_config(Scheme::jmas);
    c.adaptive = true;
    c.align_source = AlignSource::mean;
    const auto j = to_json(c);
    TrainConfig back = train_config_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back).dump() == j.dump());
    CHECK(config_hash(back) == config_hash(c));

    auto bad = nlohmann::json::parse(j.dump());
    bad["mystery"] = 1;
    CHECK_THROWS_AS(train_config_from_json(bad), ValidationError);

    TrainConfig nomargin = fixture::tiny_config(Scheme::jmas);
    nomargin.margins.reset();
    CHECK_THROWS_AS(nomargin.validate(), ValidationError);
    TrainConfig dims = fixture::tiny_config(Scheme::tas);
    dims.teacher.teacher_dim = 8;
    CHECK_THROWS_AS(dims.validate(), ValidationError);

    TrainConfig other = c;
    other.lr = 0.5;
    CHECK(config_hash(other) == config_hash(c));
    other.encoder.latent_dim = 4;
    CHECK(config_hash(other) != config_hash(c));
  }

  TEST_CASE("weighted totals and applied weights") {
    LossComponents l;
    l.rec = 2.0;
    l.kl = 3.0;
    TrainConfig v = fixture::tiny_config(Scheme::vanilla);
    CHECK(weighted_total(l, applied_weights(v, 1.0, {})) == doctest::Approx(2.003).epsilon(1e-15));
    TrainConfig t = fixture::tiny_config(Scheme::tas);
    const auto w = applied_weights(t, 99.0, {});
    CHECK(w.t == 2.5);
    l.t = 0.4;
    CHECK(w.t * l.t == doctest::Approx(1.0));
    t.adaptive = true;
    CHECK(applied_weights(t, 4.0, {}).t == 10.0);
    TrainConfig j = fixture::tiny_config(Scheme::jmas);
    j.adaptive = true;
    const auto wj = applied_weights(j, 0.0, {2.0, 3.0});
    CHECK(wj.mcos == 5.0);
    CHECK(wj.mdss == 7.5);
    LossComponents zero_distill;
    CHECK(weighted_total(zero_distill, wj) == 0.0);
  }

  TEST_CASE("batches are deterministic whole-hop crops") {
    TempDir dir("batch");
    const Corpus corpus = fixture::small_corpus(dir.path());
    const Trainer t(fixture::tiny_config(Scheme::tas), corpus);
    const Batch a = t.make_batch(3), b = t.make_batch(3);
    CHECK(a.waveform == b.waveform);
    CHECK(a.clips == b.clips);
    for (auto s : a.starts) CHECK(s % 400 == 0);
    CHECK(a.teacher.frames() == 10);
    CHECK(a.teacher.dim() == 16);
  }

  TEST_CASE("zero steps leaves the initialization untouched") {
    TempDir dir("zero");
    const Corpus corpus = fixture::small_corpus(dir.path());
    TrainConfig c = fixture::tiny_config(Scheme::vanilla);
    c.steps = 0;
    const TrainResult r = train(c, corpus);
    CHECK(r.log.rows.empty());
    const Trainer fresh(c, corpus);
    for (std::size_t i = 0; i < fresh.model().params().size(); ++i)
      CHECK(r.checkpoint.model->params().at(i).value == fresh.model().params().at(i).value);
  }

  TEST_CASE("reruns are bit-identical and logs are self-consistent") {
    TempDir dir("rerun");
    const Corpus corpus = fixture::small_corpus(dir.path());
    for (Scheme s : {Scheme::vanilla, Scheme::tas, Scheme::das, Scheme::jmas}) {
      TrainConfig c = fixture::tiny_config(s);
      c.adaptive = s != Scheme::vanilla;
      const TrainResult a = train(c, corpus), b = train(c, corpus);
      REQUIRE(a.log.rows.size() == c.steps);
      CHECK_FALSE(a.log.diverged);
      for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
        const auto& ra = a.log.rows[i];
        CHECK(ra.total_loss == b.log.rows[i].total_loss);
        CHECK(ra.losses.all_finite());
        CHECK(std::fabs(ra.total_loss - total_from_row(ra)) <= 1e-9 * std::max(1.0, std::fabs(ra.total_loss)));
        CHECK(ra.lr == doctest::Approx(c.lr * std::pow(c.lr_decay_gamma, double(i))).epsilon(1e-12));
      }
      if (c.adaptive) CHECK(a.trace.rows().size() == c.steps);
    }
  }

  TEST_CASE("log csv round trip") {
    TempDir dir("logcsv");
    const Corpus corpus = fixture::small_corpus(dir / "data");
    TrainConfig c = fixture::tiny_config(Scheme::das);
    TrainOptions opts;
    opts.out_dir = dir / "run";
    const TrainResult r = train(c, corpus, opts);
    const TrainLog back = TrainLog::read_csv(dir / "run" / "train_log.csv");
    REQUIRE(back.rows.size() == r.log.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
      CHECK(back.rows[i].total_loss == r.log.rows[i].total_loss);
      CHECK(back.rows[i].losses.d == r.log.rows[i].losses.d);
      CHECK(back.rows[i].weights.d == r.log.rows[i].weights.d);
    }
  }

  TEST_CASE("checkpoint round trip and hash guard") {
    TempDir dir("ckpt");
    const Corpus corpus = fixture::small_corpus(dir / "data");
    TrainConfig c = fixture::tiny_config(Scheme::tas);
    const TrainResult r = train(c, corpus);
    save_checkpoint(r.checkpoint, dir / "ck");
    const Checkpoint back = load_checkpoint(dir / "ck", &c);
    CHECK(back.step == r.checkpoint.step);
    for (std::size_t i = 0; i < back.model->params().size(); ++i) {
      CHECK(back.model->params().at(i).value == r.checkpoint.model->params().at(i).value);
      CHECK(back.adam.m[i] == r.checkpoint.adam.m[i]);
      CHECK(back.adam.v[i] == r.checkpoint.adam.v[i]);
    }
    const auto& w = corpus.waveforms[0];
    const auto pa = back.model->encode(w, 1), pb = r.checkpoint.model->encode(w, 1);
    CHECK(pa.mu == pb.mu);

    TrainConfig other = c;
    other.encoder.latent_dim = 4;
    other.projection.out_dim = 16;
    CHECK_THROWS_AS(load_checkpoint(dir / "ck", &other), ValidationError);

    auto meta = nlohmann::json::parse(testutil::read_text(dir / "ck" / "meta.json"));
    meta["config_hash"] = "0000000000000000";
    testutil::write_text(dir / "ck" / "meta.json", meta.dump());
    CHECK_THROWS_AS(load_checkpoint(dir / "ck"), ValidationError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IoError);
  }

  TEST_CASE("resumed run matches an uninterrupted run") {
    TempDir dir("resume");
    const Corpus corpus = fixture::small_corpus(dir / "data");
    TrainConfig c = fixture::tiny_config(Scheme::jmas);
    c.adaptive = true;
    c.steps = 6;
    const TrainResult full = train(c, corpus);

    TrainConfig half = c;
    half.steps = 3;
    const TrainResult first = train(half, corpus);
    save_checkpoint(first.checkpoint, dir / "ck");
    const Checkpoint loaded = load_checkpoint(dir / "ck", &c);
    TrainOptions opts;
    opts.resume = &loaded;
    const TrainResult second = train(c, corpus, opts);
    REQUIRE(second.log.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(second.log.rows[i].step == full.log.rows[3 + i].step);
      CHECK(std::fabs(second.log.rows[i].total_loss - full.log.rows[3 + i].total_loss) <= 1e-6);
    }
  }

  TEST_CASE("static composite gradient matches finite differences") {
    TempDir dir("fdgrad");
    const Corpus corpus = fixture::small_corpus(dir / "data", 3, 0.25);
    for (Scheme s : {Scheme::vanilla, Scheme::tas, Scheme::das, Scheme::jmas}) {
      TrainConfig c = fixture::tiny_config(s);
      c.crop_samples = 2000;
      c.recon.stft_windows = {512};
      Trainer t(c, corpus);
      const Batch b = t.make_batch(0);
      const auto g = flat_grad(t, b, 0);
      // Probe a spread of coordinates in every parameter tensor.
      auto model = std::make_shared<VaeModel>(t.model());
      for (std::size_t p = 0; p < model->params().size(); ++p) {
        auto& val = model->params().at(p).value;
        for (std::size_t i = 0; i < val.size(); i += std::max<std::size_t>(1, val.size() / 3)) {
          const double v0 = val[i], h = 1e-5;
          auto eval = [&](double v) {
            val[i] = v;
            Checkpoint ck{c, model, {}, 0};
            const Trainer probe(ck, corpus);
            return probe.composite_loss(b, 0, nullptr).total;
          };
          const double fd = (eval(v0 + h) - eval(v0 - h)) / (2 * h);
          val[i] = v0;
          INFO(to_string(s), " ", model->params().at(p).name, "[", i, "]");
          CHECK(std::fabs(g[p][i] - fd) <= 1e-4 * std::max(std::fabs(g[p][i]), std::fabs(fd)) + 1e-8);
        }
      }
    }
  }

  TEST_CASE("adaptive weights act as constants in the gradient") {
    TempDir dir("stopgrad");
    const Corpus corpus = fixture::small_corpus(dir / "data", 3, 0.25);
    for (Scheme s : {Scheme::tas, Scheme::das}) {
      TrainConfig c = fixture::tiny_config(s);
      c.crop_samples = 2000;
      c.adaptive = true;
      const Trainer t(c, corpus);
      const Batch b = t.make_batch(0);
      Gradients g(t.model().params());
      const StepOutput out = t.composite_loss(b, 0, &g);
      REQUIRE(out.has_trace);
      // Same step with the adaptive factor frozen into a static weight.
      TrainConfig fixed = c;
      fixed.adaptive = false;
      fixed.weight_config.omega_ssl = c.weight_config.omega_ssl * out.trace.omega_adaptive;
      const Trainer ts(fixed, corpus);
      Gradients gs(ts.model().params());
      ts.composite_loss(b, 0, &gs);
      for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t i = 0; i < g[p].size(); ++i)
          CHECK(std::fabs(g[p][i] - gs[p][i]) <= 1e-12 * (1.0 + std::fabs(gs[p][i])));
    }
  }

  TEST_CASE("non-finite parameters mark the run diverged") {
    TempDir dir("diverge");
    const Corpus corpus = fixture::small_corpus(dir / "data");
    TrainConfig c = fixture::tiny_config(Scheme::tas);
    Trainer t(c, corpus);
    Checkpoint ck = t.checkpoint();
    ck.model->params().at(0).value[0] = std::nan("");
    TrainOptions opts;
    opts.resume = &ck;
    const TrainResult r = train(c, corpus, opts);
    CHECK(r.log.diverged);
    CHECK(r.log.diverged_step == 0u);
    CHECK(r.log.rows.empty());
  }

  TEST_CASE("teacher mismatches fail before step 0") {
    TempDir dir("preflight");
    const Corpus corpus = fixture::small_corpus(dir / "data");
    TrainConfig c = fixture::tiny_config(Scheme::tas);
    c.teacher.kind = TeacherKind::from_files;
    CHECK_THROWS_AS(Trainer(c, corpus), ValidationError);
  }
}
