// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vaealign/alignment_losses.hpp"
#include "vaealign/trainer.hpp"

namespace vaealign {

// Raw downstream metrics of one method. Percent fields are on [0, 100].
struct MetricRecord {
  std::string method;
  double pesq = 0.0;
  double stoi = 0.0;
  double er_acc = 0.0;
  double pr_per = 0.0;
  double asr_wer = 0.0;
  double ks_acc = 0.0;
  double sid_acc = 0.0;
  double asv_eer = 0.0;
  double sd_der = 0.0;
  double ic_acc = 0.0;
  double tts_wer = 0.0;
  double tts_sim = 0.0;

  void validate() const;
};

enum class MeanKind { geometric, arithmetic, harmonic };
MeanKind parse_mean_kind(std::string_view s);
std::string_view to_string(MeanKind k) noexcept;

struct TaskScores {
  double x_r = 0.0;
  double x_u = 0.0;
  double x_g = 0.0;
  double overall = 0.0;
  MeanKind mean_kind = MeanKind::geometric;
};

double score_reconstruction(double pesq, double stoi);
double score_understanding(const MetricRecord& r);
// tts_wer is a percentage.
double score_generation(double tts_wer_percent, double sim);
double overall_score(double x_r, double x_u, double x_g, MeanKind kind = MeanKind::geometric);
TaskScores score_record(const MetricRecord& r, MeanKind kind = MeanKind::geometric);

// Half-up rounding to 3 decimals for reporting.
double round3(double v);

MetricRecord metric_record_from_json(const nlohmann::json& j);
// JSON lines; blank lines are skipped. Throws ValidationError on an empty file.
std::vector<MetricRecord> read_metric_records(const std::filesystem::path& path);
// method,x_r,x_u,x_g,overall (3 decimals)
void write_scores_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records,
                      const std::vector<TaskScores>& scores);

// Sample Pearson correlation. Throws ValidationError on length mismatch,
// fewer than 2 points or a constant series.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Student features for one clip given that clip's teacher features; both are
// (1, T, D) with the same mask.
using StudentFeatures = std::function<FeatureBatch(std::size_t clip, const FeatureBatch& teacher)>;

// Corpus average of align_distances. Each clip is evaluated whole, with the
// encoder mean as the latent.
AlignDistances distance_report(const VaeModel& model, const Teacher& teacher, const Corpus& corpus);
AlignDistances distance_report(const Checkpoint& checkpoint, const Corpus& corpus);
AlignDistances distance_report(const StudentFeatures& student, const Teacher& teacher, const Corpus& corpus,
                               std::size_t hop);

// Corpus-mean reconstruction loss decoding the encoder mean.
double eval_recon(const VaeModel& model, const Corpus& corpus, const ReconConfig& recon);

struct GridCell {
  double m1 = 0.0;
  double m2 = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::optional<std::uint64_t> diverged_step;
  double d_mcos = 0.0;
  double d_mdss = 0.0;
  double recon_initial = 0.0;
  double recon_final = 0.0;
  double recon_proxy = 0.0;
  // Present only when external metrics were supplied for this cell.
  std::optional<MetricRecord> metrics;
  std::optional<TaskScores> scores;
};

struct GridResult {
  std::vector<GridCell> cells;  // m1-major, in request order

  // m1,m2,seed,diverged,d_mcos,d_mdss,recon_proxy,recon,under,1-wer,sim,gene,overall
  void write_csv(const std::filesystem::path& path) const;
  // heatmap_<quantity>.csv with m1,m2,value,diverged; returns the written paths.
  std::vector<std::filesystem::path> write_heatmaps(const std::filesystem::path& dir) const;
};

struct GridOptions {
  std::optional<std::filesystem::path> out_dir;  // per-cell run dirs when set
  std::optional<std::filesystem::path> external_metrics;  // JSONL with m1, m2 + MetricRecord fields
  std::function<void(const GridCell&)> on_cell;
};

std::uint64_t grid_cell_seed(std::uint64_t base_seed, double m1, double m2) noexcept;

GridResult grid_search(std::span<const double> m1_list, std::span<const double> m2_list,
                       const TrainConfig& base_config, const Corpus& corpus, const GridOptions& options = {});

// Grid CSV as read back for correlation analysis. Missing cells are nullopt.
struct GridTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  static GridTable read_csv(const std::filesystem::path& path);
  std::optional<std::size_t> column(std::string_view name) const;
};

// One row per distance (d_mcos, d_mdss) against recon, under, 1-wer, sim,
// gene, overall. recon falls back to recon_proxy. Diverged rows are skipped.
// Targets with no values are reported as absent; constant inputs throw.
struct PccReport {
  static constexpr const char* kTargets[6] = {"recon", "under", "1-wer", "sim", "gene", "overall"};
  std::vector<std::string> distances;
  std::vector<std::vector<std::optional<double>>> values;

  void write_csv(const std::filesystem::path& path) const;
};

PccReport pcc_report(const GridTable& grid);

}  // namespace vaealign
