#pragma once

// Dense double-precision kernels used by the embedding head and the distance
// computations. Every kernel has a scalar reference implementation; on x86-64
// an AVX2+FMA variant is compiled separately and selected at startup when the
// CPU supports it. Setting TRACKBRANCH_SIMD=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace tb::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();

// True when the variant was compiled in and the running CPU supports it.
bool is_available(Isa isa);

// Throws ConfigError if the variant is unavailable.
const KernelTable& kernels_for(Isa isa);

// The table chosen for this process.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

namespace detail {
// Defined in kernels_avx2.cpp when the build enables it, nullptr otherwise.
const KernelTable* avx2_kernels();
}  // namespace detail

}  // namespace tb::simd
