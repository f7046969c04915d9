// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vaealign {

enum class Activation { identity, tanh, leaky_relu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a) noexcept;

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
};

// Owns every learnable tensor of a model; layers refer to entries by index.
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);
  Param& at(std::size_t i) { return params_.at(i); }
  const Param& at(std::size_t i) const { return params_.at(i); }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t find(std::string_view name) const;  // throws when absent
  std::size_t total_elements() const noexcept;
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }

 private:
  std::vector<Param> params_;
};

// Gradient buffers parallel to a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);
  std::span<double> operator[](std::size_t i) { return buffers_[i]; }
  std::span<const double> operator[](std::size_t i) const { return buffers_[i]; }
  std::size_t size() const noexcept { return buffers_.size(); }
  void zero();
  // this += alpha * other
  void add_scaled(const Gradients& other, double alpha);
  bool all_finite() const;

 private:
  std::vector<std::vector<double>> buffers_;
};

// y = x W + b over row vectors; W is (in, out).
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out);
  void init_normal(ParamStore& store, std::mt19937_64& rng, double std_scale) const;

  void forward(const ParamStore& store, std::span<const double> x, std::size_t rows, std::span<double> y) const;
  // Accumulates dW, db into grads; dx (if non-empty) is overwritten.
  void backward(const ParamStore& store, std::span<const double> x, std::span<const double> dy,
                std::size_t rows, Gradients& grads, std::span<double> dx) const;
  // dx only.
  void backward_input(const ParamStore& store, std::span<const double> dy, std::size_t rows,
                      std::span<double> dx) const;
};

void activate(Activation a, std::span<const double> pre, std::span<double> out);
// d(out)/d(pre) applied to upstream dy in place.
void activate_backward(Activation a, std::span<const double> pre, std::span<double> dy);

}  // namespace vaealign
