// SPDX-License-Identifier: Apache-2.0
#include "vaealign/layers.hpp"

#include <algorithm>
#include <cmath>

#include "vaealign/errors.hpp"
#include "vaealign/kernels.hpp"

namespace vaealign {

namespace {
constexpr double kLeakySlope = 0.2;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "leaky_relu") return Activation::leaky_relu;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "identity";
}

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  params_.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
  return params_.size() - 1;
}

std::size_t ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

std::size_t ParamStore::total_elements() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Gradients::Gradients(const ParamStore& store) {
  buffers_.reserve(store.size());
  for (const auto& p : store) buffers_.emplace_back(p.value.size(), 0.0);
}

void Gradients::zero() {
  for (auto& b : buffers_) std::fill(b.begin(), b.end(), 0.0);
}

void Gradients::add_scaled(const Gradients& other, double alpha) {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < buffers_.size(); ++i)
    k.axpy(alpha, other.buffers_[i].data(), buffers_[i].data(), buffers_[i].size());
}

bool Gradients::all_finite() const {
  for (const auto& b : buffers_)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", {in, out});
  l.bias = store.add(name + ".bias", {out});
  return l;
}

void Linear::init_normal(ParamStore& store, std::mt19937_64& rng, double std_scale) const {
  std::normal_distribution<double> g(0.0, std_scale / std::sqrt(static_cast<double>(in)));
  for (double& w : store.at(weight).value) w = g(rng);
  std::fill(store.at(bias).value.begin(), store.at(bias).value.end(), 0.0);
}

void Linear::forward(const ParamStore& store, std::span<const double> x, std::size_t rows,
                     std::span<double> y) const {
  const auto& b = store.at(bias).value;
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.begin(), b.end(), y.begin() + static_cast<std::ptrdiff_t>(r * out));
  kernels::gemm_nn(x.data(), store.at(weight).value.data(), y.data(), rows, in, out);
}

void Linear::backward(const ParamStore& store, std::span<const double> x, std::span<const double> dy,
                      std::size_t rows, Gradients& grads, std::span<double> dx) const {
  kernels::gemm_tn(x.data(), dy.data(), grads[weight].data(), rows, in, out);
  auto db = grads[bias];
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < rows; ++r) k.axpy(1.0, dy.data() + r * out, db.data(), out);
  if (!dx.empty()) backward_input(store, dy, rows, dx);
}

void Linear::backward_input(const ParamStore& store, std::span<const double> dy, std::size_t rows,
                            std::span<double> dx) const {
  std::fill(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(rows * in), 0.0);
  // dx = dy W^T; W is (in, out) so rows of W pair with rows of dy.
  kernels::gemm_nt(dy.data(), store.at(weight).value.data(), dx.data(), rows, out, in);
}

void activate(Activation a, std::span<const double> pre, std::span<double> out) {
  switch (a) {
    case Activation::identity:
      std::copy(pre.begin(), pre.end(), out.begin());
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < pre.size(); ++i) out[i] = std::tanh(pre[i]);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : kLeakySlope * pre[i];
      break;
  }
}

void activate_backward(Activation a, std::span<const double> pre, std::span<double> dy) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < pre.size(); ++i) {
        const double t = std::tanh(pre[i]);
        dy[i] *= 1.0 - t * t;
      }
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < pre.size(); ++i)
        if (pre[i] <= 0.0) dy[i] *= kLeakySlope;
      break;
  }
}

}  // namespace vaealign
