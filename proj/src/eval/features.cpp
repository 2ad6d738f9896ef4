#include <cmath>

#include "avt/error.hpp"
#include "avt/eval.hpp"
#include "avt/rng.hpp"

namespace avt {
namespace {

template <typename T>
ad::Tensor<T> normalized_batch(const Dataset& raw, const NormStats& norm, std::size_t begin,
                               std::size_t n) {
  const std::size_t size = raw.image_size(), plane = raw.height * raw.width;
  std::vector<T> x(n * size);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < raw.channels; ++c)
      for (std::size_t q = 0; q < plane; ++q)
        x[i * size + c * plane + q] = static_cast<T>(
            (raw.images[(begin + i) * size + c * plane + q] - norm.mean[c]) / norm.stddev[c]);
  return ad::Tensor<T>::from({n, raw.channels, raw.height, raw.width}, std::move(x));
}

}  // namespace

template <typename T>
void calibrate_encoder_norm(Model<T>& model, const Dataset& raw, const NormStats& norm,
                            std::size_t batch_size) {
  if (!raw.norm.empty()) throw Error("calibrate_encoder_norm: dataset must be unnormalized");
  if (batch_size < 2) throw ConfigError("calibrate_encoder_norm: batch size must be at least 2");
  ad::NoGradGuard no_grad;
  const auto layers = model.norm_layers();
  std::vector<T> saved;
  for (const auto& l : layers) saved.push_back(l.stats->momentum);
  // Momentum 1/(b+1) turns the running update into a plain average over
  // batches. Decoder layers see no input here and stay untouched.
  std::size_t b = 0;
  for (std::size_t begin = 0; begin + 2 <= raw.count; begin += batch_size, ++b) {
    for (const auto& l : layers) l.stats->momentum = T(1) / static_cast<T>(b + 1);
    model.encode(normalized_batch<T>(raw, norm, begin, std::min(batch_size, raw.count - begin)),
                 ad::Mode::kTrain);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].stats->momentum = saved[i];
}

template <typename T>
FeatureMatrix extract_features(Model<T>& model, const Dataset& raw, const NormStats& norm,
                               std::size_t k_samples, std::uint64_t seed, Objective objective,
                               std::size_t batch_size) {
  if (!raw.norm.empty()) throw Error("extract_features: dataset must be unnormalized");
  if (batch_size == 0) throw ConfigError("extract_features: batch size must be positive");
  ad::NoGradGuard no_grad;
  FeatureMatrix fm;
  fm.rows = raw.count;
  fm.dims = model.config().enc2;
  fm.values.assign(fm.rows * fm.dims, 0.0);
  fm.labels = raw.labels;
  fm.k_samples = k_samples;

  for (std::size_t begin = 0; begin < raw.count; begin += batch_size) {
    const std::size_t n = std::min(batch_size, raw.count - begin);
    const auto enc = model.encode(normalized_batch<T>(raw, norm, begin, n), ad::Mode::kEval);
    const std::size_t hw = enc.mean.numel() / (n * fm.dims);
    const auto mean = enc.mean.data();
    const auto logvar = enc.logvar.data();
    // Pooling is linear, so averaging pooled samples equals pooling the
    // averaged sample.
    std::vector<double> acc(mean.begin(), mean.end());
    if (k_samples > 0 && objective == Objective::kAvt) {
      Rng rng = derive_rng(seed, {0xFEA7ull, begin});
      std::vector<T> eps(mean.size());
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t s = 0; s < k_samples; ++s) {
        fill_normal<T>(rng, eps);
        for (std::size_t e = 0; e < acc.size(); ++e)
          acc[e] += static_cast<double>(mean[e]) +
                    std::exp(0.5 * static_cast<double>(logvar[e])) * static_cast<double>(eps[e]);
      }
      for (double& v : acc) v /= static_cast<double>(k_samples);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < fm.dims; ++d) {
        double s = 0;
        const double* p = acc.data() + (i * fm.dims + d) * hw;
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
        fm.values[(begin + i) * fm.dims + d] = s / static_cast<double>(hw);
      }
  }
  for (double v : fm.values)
    if (!std::isfinite(v)) throw NonFiniteError("extract_features: non-finite feature");
  return fm;
}

template void calibrate_encoder_norm(Model<float>&, const Dataset&, const NormStats&, std::size_t);
template void calibrate_encoder_norm(Model<double>&, const Dataset&, const NormStats&,
                                     std::size_t);
template FeatureMatrix extract_features(Model<float>&, const Dataset&, const NormStats&,
                                        std::size_t, std::uint64_t, Objective, std::size_t);
template FeatureMatrix extract_features(Model<double>&, const Dataset&, const NormStats&,
                                        std::size_t, std::uint64_t, Objective, std::size_t);

}  // namespace avt
