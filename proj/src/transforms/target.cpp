#include <cmath>

#include "avt/error.hpp"
#include "avt/transforms.hpp"

namespace avt {
namespace {

constexpr double kVarianceFloor = 4.5399929762484854e-05;  // e^-10

// Frozen output of TargetStandardizer::calibrate(TransformPrior{},
// kCalibrationDraws, kCalibrationSeed); test_transforms recomputes it.
const TargetStandardizer kDefaultProjective{
#include "default_calibration.inc"
};

}  // namespace

TransformTarget corner_displacements(const Homography& h) {
  TransformTarget d{};
  for (int k = 0; k < 4; ++k) {
    const Point q = apply_homography_point(h, kCanonicalCorners[k]);
    d[2 * k] = q.x - kCanonicalCorners[k].x;
    d[2 * k + 1] = q.y - kCanonicalCorners[k].y;
  }
  return d;
}

TargetStandardizer TargetStandardizer::calibrate(const TransformPrior& prior, std::size_t draws,
                                                 std::uint64_t seed) {
  prior.validate();
  if (draws < 2) throw ConfigError("calibration needs at least two draws");
  Rng rng = derive_rng(seed, {});
  std::array<double, 8> sum{}, sum_sq{};
  std::vector<TransformTarget> samples;
  samples.reserve(draws);
  for (std::size_t n = 0; n < draws; ++n) {
    samples.push_back(corner_displacements(sample_homography(rng, prior)));
    for (int j = 0; j < 8; ++j) sum[j] += samples.back()[j];
  }
  TargetStandardizer s;
  for (int j = 0; j < 8; ++j) s.mean[j] = sum[j] / static_cast<double>(draws);
  for (const auto& d : samples)
    for (int j = 0; j < 8; ++j) sum_sq[j] += (d[j] - s.mean[j]) * (d[j] - s.mean[j]);
  for (int j = 0; j < 8; ++j) {
    const double sd = std::sqrt(sum_sq[j] / static_cast<double>(draws));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
    s.standardized_var[j] = std::max(kVarianceFloor, (sd / s.scale[j]) * (sd / s.scale[j]));
  }
  return s;
}

const TargetStandardizer& TargetStandardizer::default_projective() { return kDefaultProjective; }

TargetStandardizer TargetStandardizer::for_prior(const TransformPrior& prior) {
  if (prior == TransformPrior{}) return kDefaultProjective;
  return calibrate(prior, kCalibrationDraws, kCalibrationSeed);
}

double TargetStandardizer::surrogate_entropy() const {
  double h = 0;
  for (double v : standardized_var) h += 0.5 * std::log(2.0 * M_PI * M_E * v);
  return h;
}

TransformTarget homography_to_target(const Homography& h, const TargetStandardizer& s) {
  TransformTarget t = corner_displacements(h);
  for (int j = 0; j < 8; ++j) t[j] = (t[j] - s.mean[j]) / s.scale[j];
  return t;
}

Homography target_to_homography(const TransformTarget& target, const TargetStandardizer& s) {
  std::array<Point, 4> dst;
  for (int k = 0; k < 4; ++k)
    dst[k] = {kCanonicalCorners[k].x + target[2 * k] * s.scale[2 * k] + s.mean[2 * k],
              kCanonicalCorners[k].y + target[2 * k + 1] * s.scale[2 * k + 1] + s.mean[2 * k + 1]};
  return dlt_solve(std::span<const Point, 4>(kCanonicalCorners), std::span<const Point, 4>(dst));
}

}  // namespace avt
