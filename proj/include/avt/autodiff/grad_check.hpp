#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avt/autodiff/tensor.hpp"

namespace avt::ad {

struct GradCheckReport {
  // Per input: max over elements of |analytic - numeric| / max(|analytic|,
  // |numeric|, floor).
  std::vector<double> max_rel_error;
  bool all_finite = true;
  std::string non_finite_detail;

  double worst() const;
  bool passed(double tol) const { return all_finite && worst() <= tol; }
};

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this are compared on an absolute scale.
  double magnitude_floor = 1e-3;
  // Checks at most this many evenly spaced elements per input (0 = all).
  std::size_t max_elements_per_input = 0;
};

// Compares reverse-mode gradients of a scalar program against central
// differences. `inputs` must be leaves with requires_grad; their values are
// perturbed in place and restored.
GradCheckReport grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, const GradCheckOptions& options = {});

}  // namespace avt::ad
