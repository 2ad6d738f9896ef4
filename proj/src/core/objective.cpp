#include "avt/objective.hpp"

#include <algorithm>
#include <cmath>

#include "avt/error.hpp"

namespace avt {

std::string to_string(Objective objective) {
  return objective == Objective::kAvt ? "avt" : "aet";
}

Objective parse_objective(const std::string& name) {
  if (name == "avt") return Objective::kAvt;
  if (name == "aet") return Objective::kAet;
  throw ConfigError("unknown mode '" + name + "' (expected avt or aet)");
}

template <typename T>
ad::Tensor<T> reparameterize(const ad::Tensor<T>& mean, const ad::Tensor<T>& logvar,
                             const ad::Tensor<T>& eps) {
  if (mean.shape() != logvar.shape() || mean.shape() != eps.shape())
    throw ShapeError("reparameterize: shapes " + ad::to_string(mean.shape()) + ", " +
                     ad::to_string(logvar.shape()) + ", " + ad::to_string(eps.shape()));
  return ad::add(mean, ad::mul(ad::exp(ad::mul_scalar(logvar, T(0.5))), eps));
}

template <typename T>
ad::Tensor<T> gaussian_nll(const ad::Tensor<T>& target, const ad::Tensor<T>& d,
                           const ad::Tensor<T>& logvar) {
  if (target.rank() != 2 || target.shape() != d.shape() || d.shape() != logvar.shape())
    throw ShapeError("gaussian_nll: expected equal N x D shapes, got " +
                     ad::to_string(target.shape()) + ", " + ad::to_string(d.shape()) + ", " +
                     ad::to_string(logvar.shape()));
  const double n = static_cast<double>(target.dim(0));
  const double dims = static_cast<double>(target.dim(1));
  const auto diff = ad::sub(target, d);
  const auto weighted = ad::mul(ad::mul(diff, diff), ad::exp(ad::mul_scalar(logvar, T(-1))));
  const auto total = ad::sum(ad::add(logvar, weighted));
  return ad::add_scalar(ad::mul_scalar(total, static_cast<T>(0.5 / n)),
                        static_cast<T>(0.5 * dims * std::log(2.0 * M_PI)));
}

namespace {

// Average of `samples` reparameterized draws; the mean when samples == 0.
template <typename T>
ad::Tensor<T> draw(const ad::Tensor<T>& mean, const ad::Tensor<T>& logvar, std::size_t samples,
                   Rng& rng) {
  if (samples == 0) return mean;
  ad::Tensor<T> acc;
  std::vector<T> eps(mean.numel());
  for (std::size_t s = 0; s < samples; ++s) {
    fill_normal<T>(rng, eps);
    auto z = reparameterize(mean, logvar, ad::Tensor<T>::from(mean.shape(), eps));
    acc = s == 0 ? z : ad::add(acc, z);
  }
  return samples == 1 ? acc : ad::mul_scalar(acc, static_cast<T>(1.0 / samples));
}

template <typename T>
ad::Tensor<T> to_tensor(ad::Shape shape, const std::vector<double>& a,
                        const std::vector<double>* b = nullptr) {
  std::vector<T> v(a.begin(), a.end());
  if (b) v.insert(v.end(), b->begin(), b->end());
  return ad::Tensor<T>::from(std::move(shape), std::move(v));
}

}  // namespace

template <typename T>
Representation<T> encode_original(Model<T>& model, const ad::Tensor<T>& images, ad::Mode mode,
                                  Objective objective, Rng& rng) {
  auto e = model.encode(images, mode);
  Representation<T> r{e.mean, e.logvar, {}};
  r.sample = objective == Objective::kAet ? e.mean : draw(e.mean, e.logvar, 1, rng);
  return r;
}

TransformBatch make_transform_batch(const Dataset& raw, std::span<const std::size_t> indices,
                                    const NormStats& stats, const TransformPrior& prior,
                                    const TargetStandardizer& standardizer, Rng& rng) {
  if (!raw.norm.empty()) throw Error("make_transform_batch: dataset must be unnormalized");
  if (indices.empty()) throw ShapeError("make_transform_batch: empty batch");
  if (stats.mean.size() != raw.channels)
    throw ShapeError("make_transform_batch: normalization statistics do not match channels");
  TransformBatch b;
  b.n = indices.size();
  b.channels = raw.channels;
  b.height = raw.height;
  b.width = raw.width;
  const std::size_t size = raw.image_size(), plane = raw.height * raw.width;
  b.original.resize(b.n * size);
  b.transformed.resize(b.n * size);
  b.targets.resize(b.n * 8);
  auto normalize_into = [&](const double* src, double* dst) {
    for (std::size_t c = 0; c < raw.channels; ++c)
      for (std::size_t q = 0; q < plane; ++q)
        dst[c * plane + q] = (src[c * plane + q] - stats.mean[c]) / stats.stddev[c];
  };
  for (std::size_t i = 0; i < b.n; ++i) {
    if (indices[i] >= raw.count)
      throw ShapeError("make_transform_batch: index " + std::to_string(indices[i]) +
                       " outside dataset of " + std::to_string(raw.count));
    const auto image = raw.image(indices[i]);
    const Homography h = sample_homography(rng, prior);
    const auto warped = warp_image(image, raw.channels, raw.height, raw.width, h);
    normalize_into(image.data(), b.original.data() + i * size);
    normalize_into(warped.data(), b.transformed.data() + i * size);
    const TransformTarget t = homography_to_target(h, standardizer);
    std::copy(t.begin(), t.end(), b.targets.begin() + i * 8);
  }
  return b;
}

template <typename T>
LossResult<T> avt_loss(Model<T>& model, const TransformBatch& batch, Objective objective,
                       ad::Mode mode, Rng& noise_rng, std::size_t samples) {
  const std::size_t n = batch.n;
  if (n == 0) throw ShapeError("avt_loss: empty batch");
  const auto stacked = to_tensor<T>({2 * n, batch.channels, batch.height, batch.width},
                                    batch.transformed, &batch.original);
  const auto enc = model.encode(stacked, mode);
  const bool aet = objective == Objective::kAet;
  const auto reps = aet ? enc.mean : draw(enc.mean, enc.logvar, samples, noise_rng);
  const auto dec =
      model.decode(ad::slice_rows(reps, 0, n), ad::slice_rows(reps, n, 2 * n), mode);
  const std::size_t dims = model.config().target_dim;
  if (batch.targets.size() != n * dims)
    throw ShapeError("avt_loss: " + std::to_string(batch.targets.size()) +
                     " target values for " + std::to_string(n) + " rows of " +
                     std::to_string(dims));
  const auto target = to_tensor<T>({n, dims}, batch.targets);
  const auto logvar = aet ? ad::Tensor<T>::zeros({n, dims}) : dec.logvar;

  LossResult<T> r;
  r.loss = gaussian_nll(target, dec.d, logvar);
  auto& g = r.diagnostics;
  g.nll = static_cast<double>(r.loss.item());
  g.min_logvar = kLogvarMax;
  g.max_logvar = kLogvarMin;
  for (T v : logvar.data()) {
    g.mean_decoder_var += std::exp(static_cast<double>(v));
    g.min_logvar = std::min(g.min_logvar, static_cast<double>(v));
    g.max_logvar = std::max(g.max_logvar, static_cast<double>(v));
  }
  g.mean_decoder_var /= static_cast<double>(logvar.numel());
  if (!aet) {
    for (T v : enc.logvar.data()) {
      g.mean_encoder_var += std::exp(static_cast<double>(v));
      g.min_logvar = std::min(g.min_logvar, static_cast<double>(v));
      g.max_logvar = std::max(g.max_logvar, static_cast<double>(v));
    }
    g.mean_encoder_var /= static_cast<double>(enc.logvar.numel());
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < dims; ++j) {
      const double e = batch.targets[i * dims + j] - static_cast<double>(dec.d.data()[i * dims + j]);
      s += e * e;
    }
    g.mean_residual_norm += std::sqrt(s);
  }
  g.mean_residual_norm /= static_cast<double>(n);
  if (!std::isfinite(g.nll)) throw NonFiniteError("avt_loss: non-finite loss");
  return r;
}

double mi_lower_bound_estimate(double avg_log_q, const TargetStandardizer& standardizer) {
  return standardizer.surrogate_entropy() + avg_log_q;
}

#define AVT_INSTANTIATE_OBJECTIVE(T)                                                          \
  template ad::Tensor<T> reparameterize(const ad::Tensor<T>&, const ad::Tensor<T>&,          \
                                        const ad::Tensor<T>&);                               \
  template ad::Tensor<T> gaussian_nll(const ad::Tensor<T>&, const ad::Tensor<T>&,            \
                                      const ad::Tensor<T>&);                                 \
  template Representation<T> encode_original(Model<T>&, const ad::Tensor<T>&, ad::Mode,     \
                                             Objective, Rng&);                               \
  template LossResult<T> avt_loss(Model<T>&, const TransformBatch&, Objective, ad::Mode,     \
                                  Rng&, std::size_t);

AVT_INSTANTIATE_OBJECTIVE(float)
AVT_INSTANTIATE_OBJECTIVE(double)

#undef AVT_INSTANTIATE_OBJECTIVE

}  // namespace avt
