#pragma once
// Dense arithmetic kernels used by the autodiff engine.
//
// Every kernel has a portable scalar reference in `avt::simd::scalar` and,
// on x86-64, an AVX2+FMA variant in `avt::simd::avx2`. The free functions in
// `avt::simd` forward to whichever table `active()` selected at startup.
// Results of the two variants agree to rounding (FMA contraction and
// summation order differ) and are bit-stable within one variant.

#include <cstddef>
#include <string_view>

namespace avt::simd {

enum class Isa { kScalar, kAvx2 };

template <typename T>
struct KernelTable {
  // C[M x N] (+)= A[M x K] * B[K x N], all row-major and contiguous.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  const T* b, T* c, bool accumulate);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  T (*dot)(std::size_t n, const T* x, const T* y);
  void (*relu_forward)(std::size_t n, const T* x, T* y);
  // dx += (x > 0) * dy
  void (*relu_backward)(std::size_t n, const T* x, const T* dy, T* dx);
  // g' = g + wd * w; v = momentum * v + g'; w -= lr * v
  void (*sgd_momentum)(std::size_t n, T lr, T momentum, T weight_decay,
                       const T* g, T* v, T* w);
};

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

namespace avx2 {
// Null when the binary was built without an AVX2 translation unit.
template <typename T>
const KernelTable<T>* table();
}  // namespace avx2

bool cpu_has_avx2();

// ISA chosen at first use: AVX2 when the CPU supports it, unless the
// environment variable AVT_SIMD=scalar forces the reference kernels.
Isa active_isa();
std::string_view isa_name(Isa isa);

// Overrides the dispatch (tests and benchmarks). Throws if unsupported.
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& active();

template <typename T>
const KernelTable<T>& table_for(Isa isa);

// C[M x N] (+)= op(A) * op(B); transposed operands are staged through a
// scratch buffer so every product runs through gemm_nn.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst);

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active<T>().axpy(n, alpha, x, y);
}

template <typename T>
inline T dot(std::size_t n, const T* x, const T* y) {
  return active<T>().dot(n, x, y);
}

}  // namespace avt::simd
