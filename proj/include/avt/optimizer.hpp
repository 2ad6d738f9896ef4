#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avt/autodiff/tensor.hpp"

namespace avt {

struct SgdConfig {
  double base_lr = 1e-3;
  double peak_lr = 5e-3;
  double final_lr = 1e-5;
  std::size_t warmup_epochs = 50;
  std::size_t decay_start_epoch = 3000;
  std::size_t total_epochs = 4500;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  // Requires 0 < final <= base <= peak and warmup < decay_start < total - 1.
  void validate() const;

  // Waypoints at the reference fractions 50/4500 and 3000/4500 of
  // `total_epochs`, with at least one warmup epoch.
  static SgdConfig scaled_to(std::size_t total_epochs);
};

// Linear ramp base -> peak over [0, warmup], flat peak until decay_start,
// then geometric decay reaching final_lr at total_epochs - 1.
double lr_schedule(std::size_t epoch, const SgdConfig& cfg);

// One momentum step: g' = g + wd*w, v = momentum*v + g', w -= lr*v.
// Throws NonFiniteError (leaving w and v untouched) on non-finite gradients.
template <typename T>
void sgd_step(std::span<T> weights, std::span<const T> grads, std::span<T> velocity, T lr,
              T momentum, T weight_decay);

template <typename T>
struct Parameter {
  std::string name;
  ad::Tensor<T> value;
  bool decay = true;  // false for normalization parameters and biases
};

template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  // Applies one step with learning rate `lr` to every parameter using its
  // accumulated gradient (absent gradients count as zero), then clears the
  // gradients.
  void step(std::vector<Parameter<T>>& params, double lr);

  const SgdConfig& config() const { return cfg_; }
  std::map<std::string, std::vector<T>>& velocity() { return velocity_; }
  const std::map<std::string, std::vector<T>>& velocity() const { return velocity_; }

 private:
  SgdConfig cfg_;
  std::map<std::string, std::vector<T>> velocity_;
};

}  // namespace avt
