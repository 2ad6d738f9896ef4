// AVX2 + FMA kernels. This translation unit alone is compiled with
// -mavx2 -mfma; nothing here may run before cpu_has_avx2() says so.

#include "avt/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace avt::simd::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t kWidth = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type set1(double x) { return _mm256_set1_pd(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type mul(type a, type b) { return _mm256_mul_pd(a, b); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static type sub(type a, type b) { return _mm256_sub_pd(a, b); }
  static type max(type a, type b) { return _mm256_max_pd(a, b); }
  static type gt_mask_and(type x, type y) {
    return _mm256_and_pd(_mm256_cmp_pd(x, zero(), _CMP_GT_OQ), y);
  }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
  }
};

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t kWidth = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type set1(float x) { return _mm256_set1_ps(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type mul(type a, type b) { return _mm256_mul_ps(a, b); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static type sub(type a, type b) { return _mm256_sub_ps(a, b); }
  static type max(type a, type b) { return _mm256_max_ps(a, b); }
  static type gt_mask_and(type x, type y) {
    return _mm256_and_ps(_mm256_cmp_ps(x, zero(), _CMP_GT_OQ), y);
  }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    return _mm_cvtss_f32(_mm_add_ss(s, sh));
  }
};

// Register tile: kRows rows of C by two vectors of columns.
template <typename T, std::size_t kRows>
inline void tile(std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                 std::size_t j) {
  using V = Vec<T>;
  constexpr std::size_t w = V::kWidth;
  typename V::type acc0[kRows], acc1[kRows];
  for (std::size_t r = 0; r < kRows; ++r) {
    acc0[r] = V::load(c + r * n + j);
    acc1[r] = V::load(c + r * n + j + w);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const typename V::type b0 = V::load(b + p * n + j);
    const typename V::type b1 = V::load(b + p * n + j + w);
    for (std::size_t r = 0; r < kRows; ++r) {
      const typename V::type ar = V::set1(a[r * k + p]);
      acc0[r] = V::fmadd(ar, b0, acc0[r]);
      acc1[r] = V::fmadd(ar, b1, acc1[r]);
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    V::store(c + r * n + j, acc0[r]);
    V::store(c + r * n + j + w, acc1[r]);
  }
}

template <typename T, std::size_t kRows>
inline void tile_single(std::size_t n, std::size_t k, const T* a, const T* b,
                        T* c, std::size_t j) {
  using V = Vec<T>;
  typename V::type acc[kRows];
  for (std::size_t r = 0; r < kRows; ++r) acc[r] = V::load(c + r * n + j);
  for (std::size_t p = 0; p < k; ++p) {
    const typename V::type b0 = V::load(b + p * n + j);
    for (std::size_t r = 0; r < kRows; ++r)
      acc[r] = V::fmadd(V::set1(a[r * k + p]), b0, acc[r]);
  }
  for (std::size_t r = 0; r < kRows; ++r) V::store(c + r * n + j, acc[r]);
}

template <typename T, std::size_t kRows>
inline void row_panel(std::size_t n, std::size_t k, const T* a, const T* b,
                      T* c) {
  constexpr std::size_t w = Vec<T>::kWidth;
  std::size_t j = 0;
  for (; j + 2 * w <= n; j += 2 * w) tile<T, kRows>(n, k, a, b, c, j);
  for (; j + w <= n; j += w) tile_single<T, kRows>(n, k, a, b, c, j);
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < kRows; ++r) {
      T s = c[r * n + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * k + p] * b[p * n + j];
      c[r * n + j] = s;
    }
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_panel<T, 4>(n, k, a + i * k, b, c + i * n);
  for (; i < m; ++i) row_panel<T, 1>(n, k, a + i * k, b, c + i * n);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth)
    V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * V::kWidth <= n; i += 2 * V::kWidth) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + V::kWidth), V::load(y + i + V::kWidth), acc1);
  }
  T s = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void relu_forward(std::size_t n, const T* x, T* y) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth)
    V::store(y + i, V::max(V::load(x + i), V::zero()));
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* dy, T* dx) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth)
    V::store(dx + i, V::add(V::load(dx + i),
                            V::gt_mask_and(V::load(x + i), V::load(dy + i))));
  for (; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void sgd_momentum(std::size_t n, T lr, T momentum, T weight_decay, const T* g,
                  T* v, T* w) {
  using V = Vec<T>;
  const auto vlr = V::set1(lr);
  const auto vmom = V::set1(momentum);
  const auto vwd = V::set1(weight_decay);
  std::size_t i = 0;
  for (; i + V::kWidth <= n; i += V::kWidth) {
    const auto wi = V::load(w + i);
    const auto gi = V::fmadd(vwd, wi, V::load(g + i));
    const auto vi = V::fmadd(vmom, V::load(v + i), gi);
    V::store(v + i, vi);
    V::store(w + i, V::sub(wi, V::mul(vlr, vi)));
  }
  for (; i < n; ++i) {
    const T gi = g[i] + weight_decay * w[i];
    v[i] = momentum * v[i] + gi;
    w[i] -= lr * v[i];
  }
}

}  // namespace

template <typename T>
const KernelTable<T>* table() {
  static const KernelTable<T> t{&gemm_nn<T>,      &axpy<T>,
                                &dot<T>,          &relu_forward<T>,
                                &relu_backward<T>, &sgd_momentum<T>};
  return &t;
}

template const KernelTable<float>* table<float>();
template const KernelTable<double>* table<double>();

}  // namespace avt::simd::avx2
