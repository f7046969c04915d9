// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <cstring>

#include "vaealign/kernels.hpp"

namespace vaealign::kernels {
namespace {

const KernelTable* table_for(Isa isa) noexcept {
#if defined(VAEALIGN_WITH_AVX2)
  if (isa == Isa::avx2 && cpu_has_avx2()) return &avx2_table();
#else
  (void)isa;
#endif
  return &scalar_table();
}

Isa default_isa() noexcept {
  const char* env = std::getenv("VAEALIGN_ISA");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::scalar;
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{table_for(default_isa())};
  return table;
}

}  // namespace

bool cpu_has_avx2() noexcept {
#if defined(VAEALIGN_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool has = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return has;
#else
  return false;
#endif
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

Isa active_isa() noexcept {
  return std::strcmp(active().name, "avx2") == 0 ? Isa::avx2 : Isa::scalar;
}

Isa select_isa(Isa isa) noexcept {
  current().store(table_for(isa), std::memory_order_relaxed);
  return active_isa();
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != 0.0) t.axpy(arow[p], b + p * n, crow, n);
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != 0.0) t.axpy(arow[p], brow, c + p * n, n);
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  const auto& t = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) crow[p] += t.dot(arow, b + p * n, n);
  }
}

}  // namespace vaealign::kernels
