// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "vaealign/layers.hpp"

namespace vaealign {

enum class WeightMode { static_weights, adaptive };

struct WeightConfig {
  WeightMode mode = WeightMode::static_weights;
  double omega_ssl = 2.5;
  double eps = 1e-12;
  double omega_cap = 1e6;
  // Measure the reconstruction gradient on the latent heads when it is
  // identically zero on the projection parameters.
  bool rec_grad_fallback = true;

  void validate() const;
};

// A scalar loss of a flat parameter vector; writes d(loss)/d(params) into grad.
using ScalarObjective = std::function<double(std::span<const double> params, std::span<double> grad)>;

// Euclidean norm of the concatenation of gradient blocks.
double grad_norm(std::span<const std::span<const double>> blocks);
double grad_norm(const Gradients& grads, std::span<const std::size_t> param_ids);
double grad_norm(const ScalarObjective& loss, std::span<const double> params);

// ||grad rec|| / max(||grad distill||, eps), clamped to [eps, omega_cap]. The
// result is a constant for the optimizer: callers scale the distillation
// gradient by it and never differentiate through it.
double adaptive_weight(double grad_norm_rec, double grad_norm_distill, const WeightConfig& config);
double adaptive_weight(const ScalarObjective& rec, const ScalarObjective& distill,
                       std::span<const double> params, const WeightConfig& config);

struct JointWeights {
  double omega_mcos = 1.0;
  double omega_mdss = 1.0;
};

JointWeights joint_adaptive_weights(double grad_norm_rec, double grad_norm_mcos, double grad_norm_mdss,
                                    const WeightConfig& config);
JointWeights joint_adaptive_weights(const ScalarObjective& rec, const ScalarObjective& mcos,
                                    const ScalarObjective& mdss, std::span<const double> params,
                                    const WeightConfig& config);

// static -> omega_ssl; adaptive -> omega_ssl * omega_adaptive.
double effective_distill_weight(const WeightConfig& config, double omega_adaptive);

struct WeightTraceRow {
  std::uint64_t step = 0;
  double omega_adaptive = 0.0;
  double omega_mcos = 0.0;
  double omega_mdss = 0.0;
  double grad_norm_rec = 0.0;
  double grad_norm_distill = 0.0;
  double grad_norm_mcos = 0.0;
  double grad_norm_mdss = 0.0;
};

// Append-only per-step log of adaptive weights. Joint traces carry the
// mcos/mdss pair; single traces carry one omega.
class WeightTrace {
 public:
  explicit WeightTrace(bool joint = false) : joint_(joint) {}
  bool joint() const noexcept { return joint_; }
  void append(const WeightTraceRow& row);  // steps must strictly increase
  const std::vector<WeightTraceRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }
  void write_csv(const std::filesystem::path& path) const;
  static WeightTrace read_csv(const std::filesystem::path& path);

 private:
  bool joint_;
  std::vector<WeightTraceRow> rows_;
};

}  // namespace vaealign
