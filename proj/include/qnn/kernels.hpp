#pragma once

// Data-parallel inner loops, with a scalar reference and an AVX2 variant that
// is picked at runtime.
//
// Every variant must produce bit-identical results to the scalar reference:
//  * products and sums are separate roundings (no FMA; the project builds
//    with -ffp-contract=off),
//  * gemm accumulates over the inner dimension in sequential order for every
//    output element, vectorizing across output columns only,
//  * reductions accumulate in double using four interleaved lanes
//    (element i goes to lane i % 4) combined as (l0 + l1) + (l2 + l3).
// tests/test_kernels.cpp checks each variant against the reference.

#include <cstddef>
#include <string_view>

namespace qnn::simd {

enum class Isa { scalar, avx2 };

struct Sums {
  double abs = 0.0;
  double sq = 0.0;
};

// Nearest-level lookup for a symmetric weight quantizer. `thresholds` are the
// midpoints between consecutive non-negative levels (exact in double);
// |w| >= thresholds[j] selects level j + 1, so ties go to the larger magnitude.
struct LevelTable {
  const float* levels = nullptr;       // non-negative levels, ascending
  const double* thresholds = nullptr;  // size n_levels - 1
  std::size_t n_levels = 0;
};

struct KernelTable {
  Isa isa;
  std::string_view name;

  // c[m×n] += a[m×k] · b[k×n], all row-major.
  void (*gemm_acc)(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
  // y += x
  void (*add_inplace)(const float* x, float* y, std::size_t n);
  // y = min(max(x, 0), alpha); NaN passes through
  void (*clip)(const float* x, float* y, std::size_t n, float alpha);
  // out = round(y·L/alpha)·alpha/L, evaluated in double, round half away from zero.
  void (*uniform_quantize)(const float* y, float* out, std::size_t n, float alpha, double levels);
  // gx = g·[0 <= x < alpha]; returns Σ g·[x >= alpha].
  double (*clip_backward)(const float* x, const float* g, float* gx, std::size_t n, float alpha);
  // Nearest symmetric level, sign copied from w.
  void (*quantize_levels)(const float* w, float* out, std::size_t n, const LevelTable& table);
  Sums (*abs_sq_sums)(const float* x, std::size_t n);
  double (*sq_diff_sum)(const float* a, const float* b, std::size_t n);
  double (*sum)(const float* x, std::size_t n);
};

const KernelTable& scalar_kernels();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_kernels();

bool cpu_has_avx2();

// Active table. Chosen once at startup: AVX2 when both compiled in and
// supported by the CPU, unless QNN_ISA=scalar is set in the environment.
const KernelTable& kernels();
// Overrides the active table; returns false if the ISA is unavailable.
bool set_isa(Isa isa);

}  // namespace qnn::simd
