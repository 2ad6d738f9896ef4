#pragma once
// The probabilistic Siamese encoder and the transformation decoder.
//
// Encoder: two blocks of three conv-BN-ReLU layers (a 3x3 stride-2 conv then
// two 1x1 convs), followed by a 1x1 conv + BN head for the log-variance.
// Decoder: two more blocks at stride 1 applied with shared weights to each
// representation, global average pooling, concatenation [z, z_tilde], and a
// dense head emitting the target mean and log-variance.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "avt/autodiff/ops.hpp"
#include "avt/optimizer.hpp"
#include "avt/rng.hpp"

namespace avt {

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t enc1 = 64;
  std::size_t enc2 = 96;
  std::size_t dec3 = 96;
  std::size_t dec4 = 96;
  std::size_t target_dim = 8;
  // Initial shift of the encoder log-variance head.
  double logvar_init = 0.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
class Model {
 public:
  struct Encoding {
    ad::Tensor<T> mean;    // N x enc2 x h x w
    ad::Tensor<T> logvar;  // same shape, clamped
  };
  struct Decoding {
    ad::Tensor<T> d;       // N x target_dim
    ad::Tensor<T> logvar;  // N x target_dim, clamped
  };

  Model(const ModelConfig& cfg, std::uint64_t init_seed);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  // Independent deep copy of parameters and normalization statistics.
  Model clone() const;

  const ModelConfig& config() const { return cfg_; }

  // Throws NonFiniteError when any activation is non-finite.
  Encoding encode(const ad::Tensor<T>& images, ad::Mode mode);
  // z and z_tilde are stacked into one batch so normalization statistics
  // are shared by both branches.
  Decoding decode(const ad::Tensor<T>& z, const ad::Tensor<T>& z_tilde, ad::Mode mode);

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  struct NormLayer {
    std::string name;
    ad::BatchNormStats<T>* stats;
  };
  // Running statistics of every batch-norm layer, in a fixed order.
  std::vector<NormLayer> norm_layers();

 private:
  struct ConvBn {
    std::string name;
    std::size_t weight = 0, gamma = 0, beta = 0;  // indices into params_
    std::size_t kernel = 1, stride = 1, pad = 0;
    bool relu = true;
    ad::Tensor<T> zero_bias;
    ad::BatchNormStats<T> stats;
  };

  std::size_t add_param(const std::string& name, ad::Shape shape, std::vector<T> values,
                        bool decay);
  void add_conv_bn(std::vector<ConvBn>& into, const std::string& name, std::size_t in,
                   std::size_t out, std::size_t kernel, std::size_t stride, bool relu,
                   Rng& rng);
  ad::Tensor<T> run(std::vector<ConvBn>& layers, ad::Tensor<T> x, ad::Mode mode);

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::vector<ConvBn> encoder_, head_, decoder_;
  std::size_t fc_w_ = 0, fc_b_ = 0;
};

}  // namespace avt
