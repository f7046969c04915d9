// SPDX-License-Identifier: Apache-2.0
#include "vaealign/adaptive_weighting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "vaealign/errors.hpp"
#include "vaealign/kernels.hpp"

namespace vaealign {

void WeightConfig::validate() const {
  if (!(omega_ssl >= 0.0)) throw ValidationError("omega_ssl must be >= 0");
  if (!(eps > 0.0)) throw ValidationError("weight eps must be > 0");
  if (!(omega_cap >= 1.0)) throw ValidationError("omega_cap must be >= 1");
}

double grad_norm(std::span<const std::span<const double>> blocks) {
  const auto& k = kernels::active();
  double s = 0.0;
  for (const auto& b : blocks) s += k.sum_sq(b.data(), b.size());
  return std::sqrt(s);
}

double grad_norm(const Gradients& grads, std::span<const std::size_t> param_ids) {
  const auto& k = kernels::active();
  double s = 0.0;
  for (auto id : param_ids) s += k.sum_sq(grads[id].data(), grads[id].size());
  return std::sqrt(s);
}

double grad_norm(const ScalarObjective& loss, std::span<const double> params) {
  std::vector<double> g(params.size(), 0.0);
  loss(params, g);
  const std::span<const double> block(g);
  return grad_norm(std::span<const std::span<const double>>(&block, 1));
}

double adaptive_weight(double grad_norm_rec, double grad_norm_distill, const WeightConfig& config) {
  if (grad_norm_distill <= config.eps) return config.omega_cap;
  const double w = grad_norm_rec / grad_norm_distill;
  if (!std::isfinite(w)) return config.omega_cap;
  return std::clamp(w, config.eps, config.omega_cap);
}

double adaptive_weight(const ScalarObjective& rec, const ScalarObjective& distill, std::span<const double> params,
                       const WeightConfig& config) {
  return adaptive_weight(grad_norm(rec, params), grad_norm(distill, params), config);
}

JointWeights joint_adaptive_weights(double grad_norm_rec, double grad_norm_mcos, double grad_norm_mdss,
                                    const WeightConfig& config) {
  return {adaptive_weight(grad_norm_rec, grad_norm_mcos, config),
          adaptive_weight(grad_norm_rec, grad_norm_mdss, config)};
}

JointWeights joint_adaptive_weights(const ScalarObjective& rec, const ScalarObjective& mcos,
                                    const ScalarObjective& mdss, std::span<const double> params,
                                    const WeightConfig& config) {
  const double r = grad_norm(rec, params);
  return joint_adaptive_weights(r, grad_norm(mcos, params), grad_norm(mdss, params), config);
}

double effective_distill_weight(const WeightConfig& config, double omega_adaptive) {
  return config.mode == WeightMode::static_weights ? config.omega_ssl : config.omega_ssl * omega_adaptive;
}

void WeightTrace::append(const WeightTraceRow& row) {
  if (!rows_.empty() && row.step <= rows_.back().step)
    throw ValidationError("weight trace steps must strictly increase");
  rows_.push_back(row);
}

void WeightTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(17);
  if (joint_) {
    out << "step,omega_mcos,omega_mdss,grad_norm_rec,grad_norm_mcos,grad_norm_mdss\n";
    for (const auto& r : rows_)
      out << r.step << ',' << r.omega_mcos << ',' << r.omega_mdss << ',' << r.grad_norm_rec << ','
          << r.grad_norm_mcos << ',' << r.grad_norm_mdss << '\n';
  } else {
    out << "step,omega_adaptive,grad_norm_rec,grad_norm_distill\n";
    for (const auto& r : rows_)
      out << r.step << ',' << r.omega_adaptive << ',' << r.grad_norm_rec << ',' << r.grad_norm_distill << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

WeightTrace WeightTrace::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open");
  std::string header;
  std::getline(in, header);
  WeightTrace trace(header.rfind("step,omega_mcos", 0) == 0);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> v;
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    WeightTraceRow r;
    r.step = static_cast<std::uint64_t>(v.at(0));
    if (trace.joint()) {
      r.omega_mcos = v.at(1);
      r.omega_mdss = v.at(2);
      r.grad_norm_rec = v.at(3);
      r.grad_norm_mcos = v.at(4);
      r.grad_norm_mdss = v.at(5);
    } else {
      r.omega_adaptive = v.at(1);
      r.grad_norm_rec = v.at(2);
      r.grad_norm_distill = v.at(3);
    }
    trace.append(r);
  }
  return trace;
}

}  // namespace vaealign
