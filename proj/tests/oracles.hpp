#pragma once
// Independent reference computations used as test oracles. None of these
// share code with the library paths they check.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace avt::testing {

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n,
                                          double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Direct nested-loop cross-correlation with zero padding.
inline std::vector<double> conv2d_direct(const std::vector<double>& x, std::size_t n,
                                         std::size_t c, std::size_t h, std::size_t w,
                                         const std::vector<double>& kernel, std::size_t o,
                                         std::size_t k, const std::vector<double>& bias,
                                         std::size_t stride, std::size_t pad) {
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(n * o * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double s = bias[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w))
                  continue;
                s += x[((b * c + ic) * h + r) * w + q] *
                     kernel[((oc * c + ic) * k + ki) * k + kj];
              }
          y[((b * o + oc) * ho + i) * wo + j] = s;
        }
  return y;
}

// Mean over rows of 0.5 * sum_j [logvar + (t - d)^2 exp(-logvar) + log 2 pi].
inline double gaussian_nll_loop(const std::vector<double>& target,
                                const std::vector<double>& mean,
                                const std::vector<double>& logvar, std::size_t rows,
                                std::size_t dims) {
  const double log_2pi = std::log(2.0 * M_PI);
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < dims; ++j) {
      const std::size_t q = i * dims + j;
      const double r = target[q] - mean[q];
      row += logvar[q] + r * r * std::exp(-logvar[q]) + log_2pi;
    }
    total += 0.5 * row;
  }
  return total / static_cast<double>(rows);
}

}  // namespace avt::testing
