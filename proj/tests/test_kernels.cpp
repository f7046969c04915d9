// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vaealign/kernels.hpp"

using namespace vaealign;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

bool close(double a, double b, double tol = 1e-12) { return std::fabs(a - b) <= tol * (1.0 + std::fabs(b)); }

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar kernels match naive loops") {
    std::mt19937_64 rng(1);
    const auto& k = kernels::scalar_table();
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
      auto a = randn(n, rng), b = randn(n, rng);
      double dot = 0, ss = 0, ad = 0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        ss += a[i] * a[i];
        ad += std::fabs(a[i] - b[i]);
      }
      CHECK(close(k.dot(a.data(), b.data(), n), dot));
      CHECK(close(k.sum_sq(a.data(), n), ss));
      CHECK(close(k.abs_diff_sum(a.data(), b.data(), n), ad));
    }
  }

#if defined(VAEALIGN_WITH_AVX2)
  TEST_CASE("avx2 kernels match scalar kernels") {
    if (!kernels::cpu_has_avx2()) return;
    std::mt19937_64 rng(2);
    const auto& s = kernels::scalar_table();
    const auto& v = kernels::avx2_table();
    for (std::size_t n = 0; n < 70; ++n) {
      auto a = randn(n, rng), b = randn(n, rng);
      CHECK(close(v.dot(a.data(), b.data(), n), s.dot(a.data(), b.data(), n)));
      CHECK(close(v.sum_sq(a.data(), n), s.sum_sq(a.data(), n)));
      CHECK(close(v.abs_diff_sum(a.data(), b.data(), n), s.abs_diff_sum(a.data(), b.data(), n)));
      auto y1 = randn(n, rng), y2 = y1;
      s.axpy(0.37, a.data(), y1.data(), n);
      v.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i]));
      auto z1 = randn(n, rng), z2 = z1;
      s.mul_acc(a.data(), b.data(), z1.data(), n);
      v.mul_acc(a.data(), b.data(), z2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(z1[i], z2[i]));
    }
  }
#endif

  TEST_CASE("gemm helpers agree with naive products under each isa") {
    std::mt19937_64 rng(3);
    const std::size_t m = 5, kk = 7, n = 6;
    auto a = randn(m * kk, rng), b = randn(kk * n, rng);
    std::vector<double> ref(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < kk; ++p) ref[i * n + j] += a[i * kk + p] * b[p * n + j];
    const auto saved = kernels::active_isa();
    for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
      kernels::select_isa(isa);
      std::vector<double> c(m * n, 0.0);
      kernels::gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(close(c[i], ref[i]));
      // A^T stored as (k, m)
      std::vector<double> at(kk * m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
      std::vector<double> c2(m * n, 0.0);
      kernels::gemm_tn(at.data(), b.data(), c2.data(), kk, m, n);
      for (std::size_t i = 0; i < c2.size(); ++i) CHECK(close(c2[i], ref[i]));
      // B^T stored as (n, k)
      std::vector<double> bt(n * kk);
      for (std::size_t p = 0; p < kk; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];
      std::vector<double> c3(m * n, 0.0);
      kernels::gemm_nt(a.data(), bt.data(), c3.data(), m, kk, n);
      for (std::size_t i = 0; i < c3.size(); ++i) CHECK(close(c3[i], ref[i]));
    }
    kernels::select_isa(saved);
  }

  TEST_CASE("select_isa reports the chosen isa") {
    const auto saved = kernels::active_isa();
    CHECK(kernels::select_isa(kernels::Isa::scalar) == kernels::Isa::scalar);
    CHECK(kernels::active_isa() == kernels::Isa::scalar);
    CHECK(kernels::isa_name(kernels::Isa::scalar) == "scalar");
    kernels::select_isa(saved);
  }
}
