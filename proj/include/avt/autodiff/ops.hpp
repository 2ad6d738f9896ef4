#pragma once
// Differentiable operators. Binary elementwise operators take operands of
// identical shape or a plain scalar; there is no implicit broadcasting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "avt/autodiff/tensor.hpp"

namespace avt::ad {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
// Throws DomainError when any value is <= 0.
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
// Zero gradient outside [lo, hi].
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// input N x C x H x W, kernel O x C x K x K, bias O. Cross-correlation with
// zero padding; output extent floor((H + 2 pad - K) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, std::size_t stride, std::size_t pad);

// input N x D, weight D x M, bias M.
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight,
                const Tensor<T>& bias);

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Per-channel normalization over (N, H, W). Train mode uses batch moments
// and updates `stats` with an exponential moving average (unbiased variance);
// eval mode uses the running moments.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Mode mode,
                       BatchNormStats<T>& stats);

// N x C x H x W -> N x C
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& input);

// N x D1, N x D2 -> N x (D1 + D2)
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
// Columns [begin, end) of an N x D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
// Rows [begin, end) along the leading axis, any rank.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);

// Stacks along the leading axis; trailing extents must match.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);

// Mean softmax cross-entropy of N x K logits against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        std::span<const std::int32_t> labels);

}  // namespace avt::ad
