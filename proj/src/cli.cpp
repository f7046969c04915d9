// SPDX-License-Identifier: Apache-2.0
#include "vaealign/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "vaealign/errors.hpp"
#include "vaealign/evaluation.hpp"
#include "vaealign/featureio.hpp"
#include "vaealign/kernels.hpp"
#include "vaealign/trainer.hpp"

namespace vaealign::cli {

namespace fs = std::filesystem;

namespace {

struct Diverged : Error {
  using Error::Error;
};

struct Globals {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

fs::path out_or(const Globals& g, const char* fallback) { return g.out ? fs::path(*g.out) : fs::path(fallback); }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

Corpus load_corpus(const std::string& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  validate_manifest(manifest, true);
  return Corpus::load(manifest);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint32_t clips = 200;
  double seconds = 1.0;
  std::uint32_t min_harmonics = 1;
  std::uint32_t max_harmonics = 4;
  double noise_floor = 0.01;
  std::string envelope = "mixed";
};

CommandResult cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  spec.num_clips = a.clips;
  spec.clip_seconds = a.seconds;
  spec.seed = g.seed.value_or(0);
  spec.min_harmonics = a.min_harmonics;
  spec.max_harmonics = a.max_harmonics;
  spec.noise_floor = a.noise_floor;
  if (a.envelope == "raised_cosine") spec.envelope = EnvelopeFamily::raised_cosine;
  else if (a.envelope == "attack_decay") spec.envelope = EnvelopeFamily::attack_decay;
  else spec.envelope = EnvelopeFamily::mixed;
  const fs::path dir = out_or(g, "synth");
  const DatasetManifest m = generate_synthetic_corpus(spec, dir);
  out << "wrote " << m.entries.size() << " clips to " << dir.string() << '\n';
  return {kExitOk, {dir / "manifest.jsonl"}, {}};
}

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> scheme;
  std::optional<double> m1;
  std::optional<double> m2;
  std::optional<std::string> resume;
};

CommandResult cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = load_train_config(a.config);
  if (a.scheme) cfg.scheme = parse_scheme(*a.scheme);
  if (a.steps) cfg.steps = *a.steps;
  if (a.lr) cfg.lr = *a.lr;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.m1 || a.m2) {
    Margins m = cfg.margins.value_or(Margins{});
    if (a.m1) m.m1 = *a.m1;
    if (a.m2) m.m2 = *a.m2;
    cfg.margins = m;
  }
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  const Corpus corpus = load_corpus(a.manifest);

  std::optional<Checkpoint> resume;
  if (a.resume) resume = load_checkpoint(*a.resume, &cfg);
  TrainOptions opts;
  opts.out_dir = out_or(g, "run");
  opts.resume = resume ? &*resume : nullptr;
  const TrainResult r = train(cfg, corpus, opts);

  CommandResult res{kExitOk, {*opts.out_dir / "checkpoint", *opts.out_dir / "train_log.csv"}, {}};
  if (cfg.adaptive && cfg.scheme != Scheme::vanilla) res.artifacts.push_back(*opts.out_dir / "weight_trace.csv");
  if (r.log.diverged) throw Diverged("training diverged at step " + std::to_string(*r.log.diverged_step));
  out << "trained " << r.log.rows.size() << " steps";
  if (!r.log.rows.empty()) out << ", final total loss " << r.log.rows.back().total_loss;
  out << '\n';
  return res;
}

struct ScoreArgs {
  std::string metrics;
  std::string mean = "geometric";
};

CommandResult cmd_score(const Globals& g, const ScoreArgs& a, std::ostream& out) {
  const MeanKind kind = parse_mean_kind(a.mean);
  const auto records = read_metric_records(a.metrics);
  std::vector<TaskScores> scores;
  for (const auto& r : records) scores.push_back(score_record(r, kind));
  const fs::path dir = out_or(g, ".");
  fs::create_directories(dir);
  const fs::path path = dir / "scores.csv";
  write_scores_csv(path, records, scores);
  std::ifstream in(path);
  out << in.rdbuf();
  return {kExitOk, {path}, {}};
}

struct DistanceArgs {
  std::string checkpoint;
  std::string manifest;
};

CommandResult cmd_distances(const Globals& g, const DistanceArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Corpus corpus = load_corpus(a.manifest);
  const AlignDistances d = distance_report(ckpt, corpus);
  CommandResult res;
  out.precision(17);
  out << "d_mcos,d_mdss\n" << d.d_mcos << ',' << d.d_mdss << '\n';
  if (g.out) {
    fs::create_directories(*g.out);
    const fs::path path = fs::path(*g.out) / "distances.csv";
    std::ofstream f(path, std::ios::trunc);
    f.precision(17);
    f << "d_mcos,d_mdss\n" << d.d_mcos << ',' << d.d_mdss << '\n';
    if (!f) throw IoError(path.string(), "write failed");
    res.artifacts.push_back(path);
  }
  return res;
}

struct GridArgs {
  std::vector<double> m1;
  std::vector<double> m2;
  std::string config;
  std::string manifest;
  std::optional<std::string> metrics;
};

CommandResult cmd_grid(const Globals& g, const GridArgs& a, std::ostream& out) {
  TrainConfig cfg = load_train_config(a.config);
  if (g.seed) cfg.seed = *g.seed;
  if (cfg.scheme != Scheme::jmas) throw ValidationError("grid requires a jmas config");
  if (!cfg.margins) cfg.margins = Margins{a.m1.front(), a.m2.front()};
  cfg.validate();
  const Corpus corpus = load_corpus(a.manifest);
  const fs::path dir = out_or(g, "grid");
  GridOptions opts;
  opts.out_dir = dir / "runs";
  if (a.metrics) opts.external_metrics = fs::path(*a.metrics);
  opts.on_cell = [&](const GridCell& c) {
    out << "cell m1=" << c.m1 << " m2=" << c.m2 << (c.diverged ? " diverged" : " done") << '\n';
  };
  const GridResult r = grid_search(a.m1, a.m2, cfg, corpus, opts);
  CommandResult res;
  res.artifacts.push_back(dir / "grid.csv");
  r.write_csv(dir / "grid.csv");
  for (auto& p : r.write_heatmaps(dir)) res.artifacts.push_back(p);
  const bool all_diverged =
      std::all_of(r.cells.begin(), r.cells.end(), [](const GridCell& c) { return c.diverged; });
  if (all_diverged) throw Diverged("every grid cell diverged");
  return res;
}

struct PccArgs {
  std::string grid_csv;
};

CommandResult cmd_pcc(const Globals& g, const PccArgs& a, std::ostream& out) {
  const PccReport report = pcc_report(GridTable::read_csv(a.grid_csv));
  const fs::path dir = out_or(g, ".");
  fs::create_directories(dir);
  const fs::path path = dir / "pcc.csv";
  report.write_csv(path);
  std::ifstream in(path);
  out << in.rdbuf();
  return {kExitOk, {path}, {}};
}

CommandResult fail(int code, const char* kind, const std::string& msg, std::ostream& err) {
  CommandResult r{code, {}, one_line(msg)};
  err << "error=" << kind << ' ' << r.reason << '\n';
  return r;
}

}  // namespace

CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic alignment workbench for toy speech VAEs", "vaealign"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Seed (overrides config seed)");
  app.add_flag("--strict-determinism", g.strict, "Pin scalar kernels and a single thread");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Generate a synthetic harmonic-plus-noise corpus");
  s->add_option("--clips", synth.clips, "Number of clips")->check(CLI::Range(1u, 1000000u))->capture_default_str();
  s->add_option("--seconds", synth.seconds, "Clip length in seconds")->capture_default_str();
  s->add_option("--min-harmonics", synth.min_harmonics, "Fewest harmonics per clip")->capture_default_str();
  s->add_option("--max-harmonics", synth.max_harmonics, "Most harmonics per clip")->capture_default_str();
  s->add_option("--noise-floor", synth.noise_floor, "Noise amplitude")->capture_default_str();
  s->add_option("--envelope", synth.envelope, "Envelope family")
      ->check(CLI::IsMember({"raised_cosine", "attack_decay", "mixed"}))
      ->capture_default_str();

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train one model");
  t->add_option("--config", train_args.config, "Training config JSON")->required();
  t->add_option("--manifest", train_args.manifest, "Dataset manifest (JSONL)")->required();
  t->add_option("--steps", train_args.steps, "Override total steps");
  t->add_option("--lr", train_args.lr, "Override learning rate");
  t->add_option("--batch-size", train_args.batch_size, "Override batch size");
  t->add_option("--scheme", train_args.scheme, "Override scheme (vanilla, tas, das, jmas)");
  t->add_option("--m1", train_args.m1, "Override margin m1");
  t->add_option("--m2", train_args.m2, "Override margin m2");
  t->add_option("--resume", train_args.resume, "Resume from a checkpoint directory");

  ScoreArgs score_args;
  auto* sc = app.add_subcommand("score", "Aggregate raw metrics into task scores");
  sc->add_option("--metrics", score_args.metrics, "Metric records (JSONL)")->required();
  sc->add_option("--mean", score_args.mean, "Mean for the overall score")
      ->check(CLI::IsMember({"geometric", "arithmetic", "harmonic"}))
      ->capture_default_str();

  DistanceArgs dist_args;
  auto* d = app.add_subcommand("distances", "Corpus alignment distances of a checkpoint");
  d->add_option("--checkpoint", dist_args.checkpoint, "Checkpoint directory")->required();
  d->add_option("--manifest", dist_args.manifest, "Dataset manifest (JSONL)")->required();

  GridArgs grid_args;
  auto* gr = app.add_subcommand("grid", "Margin grid search over jmas runs");
  gr->add_option("--m1", grid_args.m1, "Comma-separated m1 values")->required()->delimiter(',');
  gr->add_option("--m2", grid_args.m2, "Comma-separated m2 values")->required()->delimiter(',');
  gr->add_option("--config", grid_args.config, "Base jmas config JSON")->required();
  gr->add_option("--manifest", grid_args.manifest, "Dataset manifest (JSONL)")->required();
  gr->add_option("--metrics", grid_args.metrics, "External per-cell metrics (JSONL with m1, m2)");

  PccArgs pcc_args;
  auto* p = app.add_subcommand("pcc", "Pearson correlations over a grid CSV");
  p->add_option("--grid-csv", pcc_args.grid_csv, "grid.csv from the grid command")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return {kExitOk, {}, {}};
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return {kExitOk, {}, {}};
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, "usage", e.what(), err);
  }

  if (g.strict) kernels::select_isa(kernels::Isa::scalar);

  try {
    if (s->parsed()) return cmd_synth(g, synth, out);
    if (t->parsed()) return cmd_train(g, train_args, out);
    if (sc->parsed()) return cmd_score(g, score_args, out);
    if (d->parsed()) return cmd_distances(g, dist_args, out);
    if (gr->parsed()) return cmd_grid(g, grid_args, out);
    if (p->parsed()) return cmd_pcc(g, pcc_args, out);
  } catch (const Diverged& e) {
    return fail(kExitDiverged, "divergence", e.what(), err);
  } catch (const IoError& e) {
    return fail(kExitValidation, "io", e.what(), err);
  } catch (const Error& e) {
    return fail(kExitValidation, "validation", e.what(), err);
  } catch (const fs::filesystem_error& e) {
    return fail(kExitValidation, "io", e.what(), err);
  }
  return fail(kExitUsage, "usage", "no command given", err);
}

}  // namespace vaealign::cli
