#include <algorithm>
#include <cmath>

#include "avt/error.hpp"
#include "avt/optimizer.hpp"
#include "avt/simd/kernels.hpp"

namespace avt {

void SgdConfig::validate() const {
  if (!(final_lr > 0 && final_lr <= base_lr && base_lr <= peak_lr))
    throw ConfigError("learning rates must satisfy 0 < final_lr <= base_lr <= peak_lr");
  // The decay segment needs at least one step to reach final_lr.
  if (!(warmup_epochs < decay_start_epoch && decay_start_epoch + 1 < total_epochs))
    throw ConfigError("epochs must satisfy warmup_epochs < decay_start_epoch < total_epochs - 1");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
}

SgdConfig SgdConfig::scaled_to(std::size_t total_epochs) {
  if (total_epochs < 4) throw ConfigError("schedule needs at least 4 epochs");
  SgdConfig cfg;
  cfg.total_epochs = total_epochs;
  const double t = static_cast<double>(total_epochs);
  cfg.warmup_epochs = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(t * 50.0 / 4500.0)));
  cfg.decay_start_epoch = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(t * 3000.0 / 4500.0)), cfg.warmup_epochs + 1,
      total_epochs - 2);
  return cfg;
}

double lr_schedule(std::size_t epoch, const SgdConfig& cfg) {
  if (epoch >= cfg.total_epochs)
    throw DomainError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(cfg.total_epochs) + ")");
  if (epoch <= cfg.warmup_epochs) {
    const double f = cfg.warmup_epochs ? static_cast<double>(epoch) / cfg.warmup_epochs : 1.0;
    return cfg.base_lr + (cfg.peak_lr - cfg.base_lr) * f;
  }
  if (epoch <= cfg.decay_start_epoch) return cfg.peak_lr;
  const std::size_t span = cfg.total_epochs - 1 - cfg.decay_start_epoch;
  if (epoch == cfg.total_epochs - 1) return cfg.final_lr;
  const double f = static_cast<double>(epoch - cfg.decay_start_epoch) / static_cast<double>(span);
  return cfg.peak_lr * std::pow(cfg.final_lr / cfg.peak_lr, f);
}

template <typename T>
void sgd_step(std::span<T> weights, std::span<const T> grads, std::span<T> velocity, T lr,
              T momentum, T weight_decay) {
  if (weights.size() != grads.size() || weights.size() != velocity.size())
    throw ShapeError("sgd_step: weights, gradients and velocity differ in size");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NonFiniteError("sgd_step: non-finite gradient at index " + std::to_string(i));
  simd::active<T>().sgd_momentum(weights.size(), lr, momentum, weight_decay, grads.data(),
                                 velocity.data(), weights.data());
}

template <typename T>
void Sgd<T>::step(std::vector<Parameter<T>>& params, double lr) {
  // Validate every gradient first so a rejected step changes nothing.
  for (auto& p : params)
    if (p.value.has_grad())
      for (T g : p.value.grad())
        if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter " + p.name);

  for (auto& p : params) {
    auto w = p.value.mutable_data();
    auto& v = velocity_[p.name];
    if (v.size() != w.size()) v.assign(w.size(), T(0));
    const std::vector<T> zeros = p.value.has_grad() ? std::vector<T>{} : std::vector<T>(w.size(), T(0));
    std::span<const T> g = p.value.has_grad() ? p.value.grad() : std::span<const T>(zeros);
    sgd_step<T>(w, g, v, static_cast<T>(lr), static_cast<T>(cfg_.momentum),
                p.decay ? static_cast<T>(cfg_.weight_decay) : T(0));
    p.value.zero_grad();
  }
}

template void sgd_step<float>(std::span<float>, std::span<const float>, std::span<float>, float,
                              float, float);
template void sgd_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                               double, double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace avt
