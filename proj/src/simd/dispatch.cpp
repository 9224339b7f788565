#include <cstdlib>
#include <string>

#include "trackbranch/core.hpp"
#include "trackbranch/simd.hpp"

namespace tb::simd {

#ifndef TRACKBRANCH_HAVE_AVX2
namespace detail {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select_kernels() {
  if (const char* env = std::getenv("TRACKBRANCH_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return scalar_kernels();
  }
  if (is_available(Isa::kAvx2)) return *detail::avx2_kernels();
  return scalar_kernels();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool is_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return detail::avx2_kernels() != nullptr && cpu_has_avx2_fma();
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!is_available(isa)) {
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) + "' is not available on this machine");
  }
  return isa == Isa::kAvx2 ? *detail::avx2_kernels() : scalar_kernels();
}

const KernelTable& active() {
  static const KernelTable& table = select_kernels();
  return table;
}

}  // namespace tb::simd
