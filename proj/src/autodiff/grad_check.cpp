#include "avt/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "avt/error.hpp"

namespace avt::ad {

double GradCheckReport::worst() const {
  double w = 0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

GradCheckReport grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, const GradCheckOptions& options) {
  for (auto& in : inputs) {
    if (!in.is_leaf() || !in.requires_grad())
      throw Error("grad_check: inputs must be leaves with requires_grad");
    in.zero_grad();
  }

  GradCheckReport report;
  const Tensor<double> loss = fn(inputs);
  if (loss.numel() != 1)
    throw ShapeError("grad_check: program must return a scalar, got " +
                     to_string(loss.shape()));
  if (!std::isfinite(loss.item())) {
    report.all_finite = false;
    report.non_finite_detail = "loss is not finite";
    report.max_rel_error.assign(inputs.size(), INFINITY);
    return report;
  }
  backward(loss);

  auto eval = [&]() {
    NoGradGuard guard;
    return fn(inputs).item();
  };

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    auto& in = inputs[idx];
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    auto values = in.mutable_data();
    std::size_t stride = 1;
    if (options.max_elements_per_input && values.size() > options.max_elements_per_input)
      stride = values.size() / options.max_elements_per_input;

    double worst = 0;
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = eval();
      values[i] = saved - options.step;
      const double minus = eval();
      values[i] = saved;
      const double numeric = (plus - minus) / (2 * options.step);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
        report.all_finite = false;
        report.non_finite_detail = "input " + std::to_string(idx) + " element " +
                                   std::to_string(i) + " produced a non-finite gradient";
        worst = INFINITY;
        continue;
      }
      const double scale =
          std::max({std::abs(analytic[i]), std::abs(numeric), options.magnitude_floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    report.max_rel_error.push_back(worst);
  }
  return report;
}

}  // namespace avt::ad
