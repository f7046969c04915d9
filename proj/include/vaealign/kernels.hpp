// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace vaealign::kernels {

// Dense double-precision primitives used by every inner loop in the library.
// Each ISA provides the same table; callers go through active().
struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_sq)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // acc += a * b (elementwise)
  void (*mul_acc)(const double* a, const double* b, double* acc, std::size_t n);
  // sum |a - b|
  double (*abs_diff_sum)(const double* a, const double* b, std::size_t n);
};

enum class Isa { scalar, avx2 };

const KernelTable& scalar_table() noexcept;
#if defined(VAEALIGN_WITH_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

bool cpu_has_avx2() noexcept;

// Currently selected table. Defaults to the best ISA the CPU supports unless
// VAEALIGN_ISA=scalar is set in the environment.
const KernelTable& active() noexcept;
Isa active_isa() noexcept;

// Pin the dispatch to an ISA. Requesting avx2 on a machine without it
// falls back to scalar; returns the ISA actually selected.
Isa select_isa(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

// Row-major matrix helpers built on the active table.
// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k);

}  // namespace vaealign::kernels
