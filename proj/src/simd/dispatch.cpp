#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "avt/simd/kernels.hpp"

namespace avt::simd {

#ifndef AVT_HAVE_AVX2_TU
namespace avx2 {
template <typename T>
const KernelTable<T>* table() {
  return nullptr;
}
template const KernelTable<float>* table<float>();
template const KernelTable<double>* table<double>();
}  // namespace avx2
#endif

bool cpu_has_avx2() {
#if defined(AVT_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Isa detect() {
  if (const char* env = std::getenv("AVT_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !cpu_has_avx2())
    throw std::runtime_error("AVX2 kernels requested but not supported here");
  current().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table_for(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const KernelTable<T>* t = avx2::table<T>()) return *t;
  }
  return scalar::table<T>();
}

template <typename T>
const KernelTable<T>& active() {
  return table_for<T>(active_isa());
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  thread_local std::vector<T> scratch_a, scratch_b;
  if (trans_a) {
    scratch_a.resize(m * k);
    transpose(k, m, a, scratch_a.data());
    a = scratch_a.data();
  }
  if (trans_b) {
    scratch_b.resize(k * n);
    transpose(n, k, b, scratch_b.data());
    b = scratch_b.data();
  }
  active<T>().gemm_nn(m, n, k, a, b, c, accumulate);
}

template const KernelTable<float>& table_for<float>(Isa);
template const KernelTable<double>& table_for<double>(Isa);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();
template void transpose<float>(std::size_t, std::size_t, const float*, float*);
template void transpose<double>(std::size_t, std::size_t, const double*, double*);
template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t,
                          const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t,
                           const double*, const double*, double*, bool);

}  // namespace avt::simd
