#include "avt/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "avt/error.hpp"
#include "avt/simd/kernels.hpp"

namespace avt::ad {
namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op,
                  const char* what) {
  if (a.rank() != rank)
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + to_string(a.shape()));
}

// Scalar operands are treated as exact-shape broadcasts.
template <typename T>
bool is_scalar(const Tensor<T>& t) {
  return t.numel() == 1 && t.rank() <= 1;
}

template <typename T>
void accumulate(Node<T>& node, std::size_t input, std::span<const T> g) {
  auto& in = *node.inputs[input];
  if (!in.requires_grad) return;
  auto& dst = in.ensure_grad();
  simd::axpy<T>(g.size(), T(1), g.data(), dst.data());
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (is_scalar(b) && !is_scalar(a)) {
    const T s = b.item();
    std::vector<T> out(a.data().begin(), a.data().end());
    for (T& v : out) v += s;
    return make_result<T>(a.shape(), std::move(out), "add", {a, b},
                          [](Node<T>& self) {
                            accumulate<T>(self, 0, self.grad);
                            if (self.inputs[1]->requires_grad) {
                              T total = 0;
                              for (T g : self.grad) total += g;
                              self.inputs[1]->ensure_grad()[0] += total;
                            }
                          });
  }
  if (is_scalar(a) && !is_scalar(b)) return add(b, a);
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b},
                        [](Node<T>& self) {
                          accumulate<T>(self, 0, self.grad);
                          accumulate<T>(self, 1, self.grad);
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (is_scalar(b) && !is_scalar(a)) return add(a, mul_scalar(b, T(-1)));
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a, b},
                        [](Node<T>& self) {
                          accumulate<T>(self, 0, self.grad);
                          if (self.inputs[1]->requires_grad) {
                            auto& g = self.inputs[1]->ensure_grad();
                            simd::axpy<T>(g.size(), T(-1), self.grad.data(), g.data());
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (is_scalar(b) && !is_scalar(a)) {
    const T s = b.item();
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    return make_result<T>(a.shape(), std::move(out), "mul", {a, b},
                          [](Node<T>& self) {
                            const auto& av = self.inputs[0]->value;
                            const T s = self.inputs[1]->value[0];
                            if (self.inputs[0]->requires_grad) {
                              auto& g = self.inputs[0]->ensure_grad();
                              simd::axpy<T>(g.size(), s, self.grad.data(), g.data());
                            }
                            if (self.inputs[1]->requires_grad)
                              self.inputs[1]->ensure_grad()[0] +=
                                  simd::dot<T>(av.size(), av.data(), self.grad.data());
                          });
  }
  if (is_scalar(a) && !is_scalar(b)) return mul(b, a);
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(
      a.shape(), std::move(out), "mul", {a, b}, [](Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const T fault = debug::adjoint_fault() ? T(1.5) : T(1);
        if (self.inputs[0]->requires_grad) {
          auto& g = self.inputs[0]->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += fault * self.grad[i] * bv[i];
        }
        if (self.inputs[1]->requires_grad) {
          auto& g = self.inputs[1]->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        }
      });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v += s;
  return make_result<T>(a.shape(), std::move(out), "add_scalar", {a},
                        [](Node<T>& self) { accumulate<T>(self, 0, self.grad); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= s;
  return make_result<T>(a.shape(), std::move(out), "mul_scalar", {a},
                        [s](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          simd::axpy<T>(g.size(), s, self.grad.data(), g.data());
                        });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return make_result<T>(a.shape(), std::move(out), "exp", {a},
                        [](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += self.grad[i] * self.value[i];
                        });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = a.data()[i];
    if (!(v > T(0)))
      throw DomainError("log: non-positive value " + std::to_string(v) +
                        " at index " + std::to_string(i));
    out[i] = std::log(v);
  }
  return make_result<T>(a.shape(), std::move(out), "log", {a},
                        [](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          const auto& x = self.inputs[0]->value;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += self.grad[i] / x[i];
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  simd::active<T>().relu_forward(out.size(), a.data().data(), out.data());
  return make_result<T>(a.shape(), std::move(out), "relu", {a},
                        [](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          simd::active<T>().relu_backward(
                              g.size(), self.inputs[0]->value.data(),
                              self.grad.data(), g.data());
                        });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(a.data()[i], lo, hi);
  return make_result<T>(a.shape(), std::move(out), "clamp", {a},
                        [lo, hi](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          const auto& x = self.inputs[0]->value;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (x[i] >= lo && x[i] <= hi) g[i] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return make_result<T>({}, {total}, "sum", {a}, [](Node<T>& self) {
    if (!self.inputs[0]->requires_grad) return;
    const T g0 = self.grad[0];
    for (T& g : self.inputs[0]->ensure_grad()) g += g0;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " +
                     to_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {a},
                        [](Node<T>& self) { accumulate<T>(self, 0, self.grad); });
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t patch() const { return c * k * k; }
  std::size_t out_plane() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col + ((ci * g.k + ki) * g.k + kj) * g.out_plane();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (ci * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
                          ? T(0)
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((ci * g.k + ki) * g.k + kj) * g.out_plane();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (ci * g.h + static_cast<std::size_t>(ih)) * g.w;
          const T* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w))
              dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (is[1] != ks[1] || ks[2] != ks[3])
    throw ShapeError("conv2d: input " + to_string(is) +
                     " incompatible with kernel " + to_string(ks));
  if (bias.rank() != 1 || bias.dim(0) != ks[0])
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) +
                     " does not match kernel " + to_string(ks));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (is[2] + 2 * pad < ks[2] || is[3] + 2 * pad < ks[3])
    throw ShapeError("conv2d: kernel " + to_string(ks) + " larger than padded input " +
                     to_string(is));

  ConvGeometry g{is[0], is[1], is[2], is[3], ks[0], ks[2], stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  const std::size_t in_plane = g.c * g.h * g.w;
  const std::size_t out_img = g.o * g.out_plane();
  std::vector<T> out(g.n * out_img);
  std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
  const T* w = kernel.data().data();
  const T* b = bias.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* x = input.data().data() + n * in_plane;
    const T* cols = x;
    if (!g.pointwise()) {
      im2col(g, x, col.data());
      cols = col.data();
    }
    T* y = out.data() + n * out_img;
    for (std::size_t oc = 0; oc < g.o; ++oc)
      std::fill(y + oc * g.out_plane(), y + (oc + 1) * g.out_plane(), b[oc]);
    simd::gemm<T>(false, false, g.o, g.out_plane(), g.patch(), w, cols, y, true);
  }

  return make_result<T>(
      {g.n, g.o, g.ho, g.wo}, std::move(out), "conv2d", {input, kernel, bias},
      [g, in_plane, out_img](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& kin = *self.inputs[1];
        auto& bin = *self.inputs[2];
        std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
        std::vector<T> dcol(xin.requires_grad ? g.patch() * g.out_plane() : 0);
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* dy = self.grad.data() + n * out_img;
          if (bin.requires_grad) {
            auto& db = bin.ensure_grad();
            for (std::size_t oc = 0; oc < g.o; ++oc) {
              T s = 0;
              for (std::size_t p = 0; p < g.out_plane(); ++p) s += dy[oc * g.out_plane() + p];
              db[oc] += s;
            }
          }
          if (kin.requires_grad) {
            const T* x = xin.value.data() + n * in_plane;
            const T* cols = x;
            if (!g.pointwise()) {
              im2col(g, x, col.data());
              cols = col.data();
            }
            simd::gemm<T>(false, true, g.o, g.patch(), g.out_plane(), dy, cols,
                          kin.ensure_grad().data(), true);
          }
          if (xin.requires_grad) {
            T* dx = xin.ensure_grad().data() + n * in_plane;
            if (g.pointwise()) {
              simd::gemm<T>(true, false, g.patch(), g.out_plane(), g.o,
                            kin.value.data(), dy, dx, true);
            } else {
              simd::gemm<T>(true, false, g.patch(), g.out_plane(), g.o,
                            kin.value.data(), dy, dcol.data(), false);
              col2im_add(g, dcol.data(), dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight,
                const Tensor<T>& bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  if (input.dim(1) != weight.dim(0))
    throw ShapeError("dense: input " + to_string(input.shape()) +
                     " incompatible with weight " + to_string(weight.shape()));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1))
    throw ShapeError("dense: bias " + to_string(bias.shape()) +
                     " does not match weight " + to_string(weight.shape()));
  const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
  std::vector<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * m);
  simd::gemm<T>(false, false, n, m, d, input.data().data(), weight.data().data(),
                out.data(), true);
  return make_result<T>(
      {n, m}, std::move(out), "dense", {input, weight, bias},
      [n, d, m](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        auto& bin = *self.inputs[2];
        if (xin.requires_grad)
          simd::gemm<T>(false, true, n, d, m, self.grad.data(), win.value.data(),
                        xin.ensure_grad().data(), true);
        if (win.requires_grad)
          simd::gemm<T>(true, false, d, m, n, xin.value.data(), self.grad.data(),
                        win.ensure_grad().data(), true);
        if (bin.requires_grad) {
          auto& db = bin.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) db[j] += self.grad[i * m + j];
        }
      });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Mode mode,
                       BatchNormStats<T>& stats) {
  require_rank(input, 4, "batch_norm2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const std::size_t count = n * plane;
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw ShapeError("batch_norm2d: gamma " + to_string(gamma.shape()) + " / beta " +
                     to_string(beta.shape()) + " do not match input " +
                     to_string(input.shape()));
  if (stats.running_mean.size() != c || stats.running_var.size() != c)
    throw ShapeError("batch_norm2d: running statistics sized " +
                     std::to_string(stats.running_mean.size()) + " for input " +
                     to_string(input.shape()));
  if (mode == Mode::kTrain && count < 2)
    throw ShapeError("batch_norm2d: train mode needs at least 2 values per channel, input " +
                     to_string(input.shape()));

  const T* x = input.data().data();
  std::vector<T> mean_c(c), inv_std(c);
  if (mode == Mode::kTrain) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (std::size_t q = 0; q < plane; ++q) s += p[q];
      }
      const T mu = s / static_cast<T>(count);
      T v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (std::size_t q = 0; q < plane; ++q) v += (p[q] - mu) * (p[q] - mu);
      }
      v /= static_cast<T>(count);
      mean_c[ch] = mu;
      inv_std[ch] = T(1) / std::sqrt(v + stats.epsilon);
      const T unbiased = v * static_cast<T>(count) / static_cast<T>(count - 1);
      stats.running_mean[ch] =
          (T(1) - stats.momentum) * stats.running_mean[ch] + stats.momentum * mu;
      stats.running_var[ch] =
          (T(1) - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = stats.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(stats.running_var[ch] + stats.epsilon);
    }
  }

  std::vector<T> xhat(input.numel()), out(input.numel());
  const T* gm = gamma.data().data();
  const T* bt = beta.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * plane;
      for (std::size_t q = 0; q < plane; ++q) {
        const T h = (x[off + q] - mean_c[ch]) * inv_std[ch];
        xhat[off + q] = h;
        out[off + q] = gm[ch] * h + bt[ch];
      }
    }

  const bool train = mode == Mode::kTrain;
  return make_result<T>(
      input.shape(), std::move(out), "batch_norm2d", {input, gamma, beta},
      [n, c, plane, count, train, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& gin = *self.inputs[1];
        auto& bin = *self.inputs[2];
        const T* dy = self.grad.data();
        std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (i * c + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) {
              sum_dy[ch] += dy[off + q];
              sum_dy_xhat[ch] += dy[off + q] * xhat[off + q];
            }
          }
        if (gin.requires_grad) {
          auto& dg = gin.ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (bin.requires_grad) {
          auto& db = bin.ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (!xin.requires_grad) return;
        auto& dx = xin.ensure_grad();
        const auto& gm = gin.value;
        const T m = static_cast<T>(count);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (i * c + ch) * plane;
            const T scale = gm[ch] * inv_std[ch];
            if (train) {
              const T mean_dy = sum_dy[ch] / m;
              const T mean_dy_xhat = sum_dy_xhat[ch] / m;
              for (std::size_t q = 0; q < plane; ++q)
                dx[off + q] +=
                    scale * (dy[off + q] - mean_dy - xhat[off + q] * mean_dy_xhat);
            } else {
              for (std::size_t q = 0; q < plane; ++q) dx[off + q] += scale * dy[off + q];
            }
          }
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  std::vector<T> out(n * c);
  const T inv = T(1) / static_cast<T>(plane);
  for (std::size_t i = 0; i < n * c; ++i) {
    const T* p = input.data().data() + i * plane;
    T s = 0;
    for (std::size_t q = 0; q < plane; ++q) s += p[q];
    out[i] = s * inv;
  }
  return make_result<T>({n, c}, std::move(out), "global_avg_pool", {input},
                        [plane, inv](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& dx = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T g = self.grad[i] * inv;
                            for (std::size_t q = 0; q < plane; ++q) dx[i * plane + q] += g;
                          }
                        });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "concat_cols", "first operand");
  require_rank(b, 2, "concat_cols", "second operand");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: leading extents differ " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  std::vector<T> out(n * (da + db));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * da, da, out.begin() + i * (da + db));
    std::copy_n(b.data().begin() + i * db, db, out.begin() + i * (da + db) + da);
  }
  return make_result<T>({n, da + db}, std::move(out), "concat_cols", {a, b},
                        [n, da, db](Node<T>& self) {
                          for (std::size_t which = 0; which < 2; ++which) {
                            auto& in = *self.inputs[which];
                            if (!in.requires_grad) continue;
                            const std::size_t width = which == 0 ? da : db;
                            const std::size_t off = which == 0 ? 0 : da;
                            auto& g = in.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < width; ++j)
                                g[i * width + j] += self.grad[i * (da + db) + off + j];
                          }
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols", "input");
  if (begin > end || end > a.dim(1))
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(a.shape()));
  const std::size_t n = a.dim(0), d = a.dim(1), w = end - begin;
  std::vector<T> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.data().begin() + i * d + begin, w, out.begin() + i * w);
  return make_result<T>({n, w}, std::move(out), "slice_cols", {a},
                        [n, d, w, begin](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < w; ++j)
                              g[i * d + begin + j] += self.grad[i * w + j];
                        });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0))
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(a.shape()));
  const std::size_t row = a.dim(0) ? a.numel() / a.dim(0) : 0;
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<T> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  return make_result<T>(std::move(shape), std::move(out), "slice_rows", {a},
                        [row, begin](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          simd::axpy<T>(self.grad.size(), T(1), self.grad.data(),
                                        g.data() + begin * row);
                        });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw ShapeError("concat_rows: trailing extents differ: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<T> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t split = a.numel();
  return make_result<T>(std::move(shape), std::move(out), "concat_rows", {a, b},
                        [split](Node<T>& self) {
                          if (self.inputs[0]->requires_grad) {
                            auto& g = self.inputs[0]->ensure_grad();
                            simd::axpy<T>(split, T(1), self.grad.data(), g.data());
                          }
                          if (self.inputs[1]->requires_grad) {
                            auto& g = self.inputs[1]->ensure_grad();
                            simd::axpy<T>(self.grad.size() - split, T(1),
                                          self.grad.data() + split, g.data());
                          }
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        std::span<const std::int32_t> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + to_string(logits.shape()));
  std::vector<T> prob(n * k);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data().data() + i * k;
    const T zmax = *std::max_element(z, z + k);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - zmax);
    const T lse = zmax + std::log(s);
    for (std::size_t j = 0; j < k; ++j) prob[i * k + j] = std::exp(z[j] - lse);
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(k) + ")");
    total += lse - z[y];
  }
  std::vector<std::int32_t> ys(labels.begin(), labels.end());
  return make_result<T>({}, {total / static_cast<T>(n)}, "cross_entropy", {logits},
                        [n, k, prob = std::move(prob), ys = std::move(ys)](Node<T>& self) {
                          if (!self.inputs[0]->requires_grad) return;
                          auto& g = self.inputs[0]->ensure_grad();
                          const T scale = self.grad[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < k; ++j) {
                              const T onehot = static_cast<std::size_t>(ys[i]) == j ? T(1) : T(0);
                              g[i * k + j] += scale * (prob[i * k + j] - onehot);
                            }
                        });
}

#define AVT_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                            \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                            \
  template Tensor<T> exp(const Tensor<T>&);                                      \
  template Tensor<T> log(const Tensor<T>&);                                      \
  template Tensor<T> relu(const Tensor<T>&);                                     \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                              \
  template Tensor<T> sum(const Tensor<T>&);                                      \
  template Tensor<T> mean(const Tensor<T>&);                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,                  \
                            const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&,            \
                                  const Tensor<T>&, Mode, BatchNormStats<T>&);   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                          \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);     \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);     \
  template Tensor<T> concat_rows(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);

AVT_INSTANTIATE_OPS(float)
AVT_INSTANTIATE_OPS(double)

#undef AVT_INSTANTIATE_OPS

}  // namespace avt::ad
