#include "avt/model.hpp"

#include <cmath>

#include "avt/error.hpp"

namespace avt {
namespace {

template <typename T>
void require_finite(const ad::Tensor<T>& t, const std::string& where) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i]))
      throw NonFiniteError(where + ": non-finite activation at flat index " + std::to_string(i) +
                           " of " + ad::to_string(t.shape()));
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels == 0 || enc1 == 0 || enc2 == 0 || dec3 == 0 || dec4 == 0)
    throw ConfigError("model widths and input channels must be positive");
  if (target_dim == 0) throw ConfigError("target_dim must be positive");
  if (logvar_init < kLogvarMin || logvar_init > kLogvarMax)
    throw ConfigError("logvar_init must lie in [-10, 10]");
}

template <typename T>
std::size_t Model<T>::add_param(const std::string& name, ad::Shape shape, std::vector<T> values,
                                bool decay) {
  params_.push_back({name, ad::Tensor<T>::from(std::move(shape), std::move(values), true), decay});
  return params_.size() - 1;
}

template <typename T>
void Model<T>::add_conv_bn(std::vector<ConvBn>& into, const std::string& name, std::size_t in,
                           std::size_t out, std::size_t kernel, std::size_t stride, bool relu,
                           Rng& rng) {
  ConvBn l;
  l.name = name;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = kernel / 2;
  l.relu = relu;
  std::vector<T> w(out * in * kernel * kernel);
  fill_normal<T>(rng, w);
  const T std_dev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(in * kernel * kernel)));
  for (T& v : w) v *= std_dev;
  l.weight = add_param(name + ".w", {out, in, kernel, kernel}, std::move(w), true);
  l.gamma = add_param(name + ".gamma", {out}, std::vector<T>(out, T(1)), false);
  l.beta = add_param(name + ".beta", {out}, std::vector<T>(out, T(0)), false);
  l.zero_bias = ad::Tensor<T>::zeros({out});
  l.stats = ad::BatchNormStats<T>(out);
  into.push_back(std::move(l));
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = derive_rng(init_seed, {0x1417ull});
  const auto& c = cfg_;
  add_conv_bn(encoder_, "enc.b1.c0", c.in_channels, c.enc1, 3, 2, true, rng);
  add_conv_bn(encoder_, "enc.b1.c1", c.enc1, c.enc1, 1, 1, true, rng);
  add_conv_bn(encoder_, "enc.b1.c2", c.enc1, c.enc1, 1, 1, true, rng);
  add_conv_bn(encoder_, "enc.b2.c0", c.enc1, c.enc2, 3, 2, true, rng);
  add_conv_bn(encoder_, "enc.b2.c1", c.enc2, c.enc2, 1, 1, true, rng);
  add_conv_bn(encoder_, "enc.b2.c2", c.enc2, c.enc2, 1, 1, true, rng);
  add_conv_bn(head_, "enc.logvar", c.enc2, c.enc2, 1, 1, false, rng);
  for (T& v : params_[head_[0].beta].value.mutable_data()) v = static_cast<T>(c.logvar_init);
  add_conv_bn(decoder_, "dec.b3.c0", c.enc2, c.dec3, 3, 1, true, rng);
  add_conv_bn(decoder_, "dec.b3.c1", c.dec3, c.dec3, 1, 1, true, rng);
  add_conv_bn(decoder_, "dec.b3.c2", c.dec3, c.dec3, 1, 1, true, rng);
  add_conv_bn(decoder_, "dec.b4.c0", c.dec3, c.dec4, 3, 1, true, rng);
  add_conv_bn(decoder_, "dec.b4.c1", c.dec4, c.dec4, 1, 1, true, rng);
  add_conv_bn(decoder_, "dec.b4.c2", c.dec4, c.dec4, 1, 1, true, rng);

  const std::size_t in = 2 * c.dec4, out = 2 * c.target_dim;
  std::vector<T> w(in * out);
  fill_normal<T>(rng, w);
  const T std_dev = static_cast<T>(std::sqrt(1.0 / static_cast<double>(in)));
  for (T& v : w) v *= std_dev;
  fc_w_ = add_param("dec.fc.w", {in, out}, std::move(w), true);
  fc_b_ = add_param("dec.fc.b", {out}, std::vector<T>(out, T(0)), false);
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model copy(cfg_, 0);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = copy.params_[i].value.mutable_data();
    std::copy(params_[i].value.data().begin(), params_[i].value.data().end(), dst.begin());
  }
  auto copy_stats = [](const std::vector<ConvBn>& from, std::vector<ConvBn>& to) {
    for (std::size_t i = 0; i < from.size(); ++i) to[i].stats = from[i].stats;
  };
  copy_stats(encoder_, copy.encoder_);
  copy_stats(head_, copy.head_);
  copy_stats(decoder_, copy.decoder_);
  return copy;
}

template <typename T>
ad::Tensor<T> Model<T>::run(std::vector<ConvBn>& layers, ad::Tensor<T> x, ad::Mode mode) {
  for (auto& l : layers) {
    x = ad::conv2d(x, params_[l.weight].value, l.zero_bias, l.stride, l.pad);
    x = ad::batch_norm2d(x, params_[l.gamma].value, params_[l.beta].value, mode, l.stats);
    if (l.relu) x = ad::relu(x);
  }
  return x;
}

template <typename T>
typename Model<T>::Encoding Model<T>::encode(const ad::Tensor<T>& images, ad::Mode mode) {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels)
    throw ShapeError("encode: expected N x " + std::to_string(cfg_.in_channels) +
                     " x H x W images, got " + ad::to_string(images.shape()));
  Encoding e;
  e.mean = run(encoder_, images, mode);
  e.logvar = ad::clamp(run(head_, e.mean, mode), static_cast<T>(kLogvarMin),
                       static_cast<T>(kLogvarMax));
  require_finite(e.mean, "encode");
  require_finite(e.logvar, "encode");
  return e;
}

template <typename T>
typename Model<T>::Decoding Model<T>::decode(const ad::Tensor<T>& z, const ad::Tensor<T>& z_tilde,
                                             ad::Mode mode) {
  if (z.shape() != z_tilde.shape())
    throw ShapeError("decode: representations differ in shape: " + ad::to_string(z.shape()) +
                     " vs " + ad::to_string(z_tilde.shape()));
  const std::size_t n = z.dim(0);
  const auto pooled = ad::global_avg_pool(run(decoder_, ad::concat_rows(z, z_tilde), mode));
  const auto features =
      ad::concat_cols(ad::slice_rows(pooled, 0, n), ad::slice_rows(pooled, n, 2 * n));
  const auto out = ad::dense(features, params_[fc_w_].value, params_[fc_b_].value);
  Decoding d;
  d.d = ad::slice_cols(out, 0, cfg_.target_dim);
  d.logvar = ad::clamp(ad::slice_cols(out, cfg_.target_dim, 2 * cfg_.target_dim),
                       static_cast<T>(kLogvarMin), static_cast<T>(kLogvarMax));
  require_finite(out, "decode");
  return d;
}

template <typename T>
std::vector<typename Model<T>::NormLayer> Model<T>::norm_layers() {
  std::vector<NormLayer> out;
  for (auto* group : {&encoder_, &head_, &decoder_})
    for (auto& l : *group) out.push_back({l.name, &l.stats});
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace avt
