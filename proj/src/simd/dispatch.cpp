#include <cstdlib>
#include <string_view>

#include "qnn/kernels.hpp"

namespace qnn::simd {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("QNN_ISA"); env != nullptr && std::string_view(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels(); t != nullptr && cpu_has_avx2()) return t;
  return &scalar_kernels();
}

const KernelTable*& active() {
  static const KernelTable* table = select_default();
  return table;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& kernels() { return *active(); }

bool set_isa(Isa isa) {
  if (isa == Isa::scalar) {
    active() = &scalar_kernels();
    return true;
  }
  const KernelTable* t = avx2_kernels();
  if (t == nullptr || !cpu_has_avx2()) return false;
  active() = t;
  return true;
}

}  // namespace qnn::simd
