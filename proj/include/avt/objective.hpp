#pragma once
// Training objective: transformation batches, the reparameterized
// representations, and the Gaussian likelihood of the transformation target.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "avt/data.hpp"
#include "avt/model.hpp"
#include "avt/transforms.hpp"

namespace avt {

// kAvt: stochastic representations and a learned decoder variance.
// kAet: deterministic representations (sigma_theta = 0) and unit decoder
// variance, so the loss is half the squared target error plus a constant.
enum class Objective { kAvt, kAet };

std::string to_string(Objective objective);
Objective parse_objective(const std::string& name);

// sample = mean + exp(logvar / 2) * eps, with eps held constant.
template <typename T>
ad::Tensor<T> reparameterize(const ad::Tensor<T>& mean, const ad::Tensor<T>& logvar,
                             const ad::Tensor<T>& eps);

// Mean over rows of 0.5 * sum_j [logvar_j + (target_j - d_j)^2 exp(-logvar_j) + ln 2 pi].
template <typename T>
ad::Tensor<T> gaussian_nll(const ad::Tensor<T>& target, const ad::Tensor<T>& d,
                           const ad::Tensor<T>& logvar);

template <typename T>
struct Representation {
  ad::Tensor<T> mean, logvar, sample;
};

// Encodes untransformed images and draws z_tilde with fresh noise from `rng`.
// Under kAet the sample is the mean exactly.
template <typename T>
Representation<T> encode_original(Model<T>& model, const ad::Tensor<T>& images, ad::Mode mode,
                                  Objective objective, Rng& rng);

// One sampled transformation per image, applied to the raw pixels before
// normalization so out-of-frame pixels read as black.
struct TransformBatch {
  std::size_t n = 0, channels = 0, height = 0, width = 0;
  std::vector<double> original;     // normalized network inputs, n x C x H x W
  std::vector<double> transformed;  // same layout
  std::vector<double> targets;      // n x 8 standardized corner displacements
};

// `raw` must be unnormalized; `stats` supplies the input normalization.
TransformBatch make_transform_batch(const Dataset& raw, std::span<const std::size_t> indices,
                                    const NormStats& stats, const TransformPrior& prior,
                                    const TargetStandardizer& standardizer, Rng& rng);

struct LossDiagnostics {
  double nll = 0;
  double mean_decoder_var = 0;    // mean of exp(decoder logvar)
  double mean_encoder_var = 0;    // mean of exp(encoder logvar), 0 under kAet
  double mean_residual_norm = 0;  // mean over rows of ||target - d||
  double min_logvar = 0, max_logvar = 0;  // over encoder and decoder outputs
};

template <typename T>
struct LossResult {
  ad::Tensor<T> loss;
  LossDiagnostics diagnostics;
};

// Encodes [transformed; original] as one Siamese batch, draws z and z_tilde,
// decodes and scores the targets. `samples` noise draws are averaged per
// representation (1 for training; 0 uses the means).
template <typename T>
LossResult<T> avt_loss(Model<T>& model, const TransformBatch& batch, Objective objective,
                       ad::Mode mode, Rng& noise_rng, std::size_t samples = 1);

// H(t) + avg_log_q with H(t) the surrogate entropy of the standardized
// target distribution. Meaningful only relative to that surrogate constant.
double mi_lower_bound_estimate(double avg_log_q, const TargetStandardizer& standardizer);

}  // namespace avt
