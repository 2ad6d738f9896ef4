#pragma once
// Projective image transformations: sampling, homography algebra, warping,
// and the 8-dimensional regression target.
//
// Coordinates are normalized to [-1, 1]^2 with x to the right and y down;
// pixel (row i, col j) of an H x W image sits at ((2j+1)/W - 1, (2i+1)/H - 1).

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "avt/rng.hpp"

namespace avt {

struct Point {
  double x = 0;
  double y = 0;
};

// Canonical corners in the order used by every 8-vector below.
inline constexpr std::array<Point, 4> kCanonicalCorners{
    Point{-1, -1}, Point{1, -1}, Point{1, 1}, Point{-1, 1}};

enum class TransformFamily { kProjective, kAffine, kIdentity };

std::string to_string(TransformFamily family);
TransformFamily parse_family(const std::string& name);

struct TransformPrior {
  double jitter_max = 0.125;  // fraction of half-extent
  double scale_min = 0.8;
  double scale_max = 1.2;
  std::vector<double> rotations_deg{0, 90, 180, 270};
  TransformFamily family = TransformFamily::kProjective;

  // Throws ConfigError on empty rotation sets or inverted ranges.
  void validate() const;
  bool operator==(const TransformPrior&) const = default;
};

struct TransformParams {
  double scale = 1;
  double rotation_deg = 0;
  // (dx, dy) per canonical corner.
  std::array<double, 8> corner_jitter{};
};

class Homography {
 public:
  Homography();  // identity
  // Normalizes so the bottom-right entry is 1 when it is nonzero. Throws
  // DegeneracyError when |det| <= 1e-12.
  static Homography from_matrix(const std::array<double, 9>& m);

  double operator()(std::size_t row, std::size_t col) const { return m_[row * 3 + col]; }
  const std::array<double, 9>& matrix() const { return m_; }
  double determinant() const;
  Homography inverse() const;

 private:
  std::array<double, 9> m_;
};

TransformParams sample_transform(Rng& rng, const TransformPrior& prior);

// H = H_jitter * H_rot * H_scale. Throws DegeneracyError when three jittered
// corners are collinear.
Homography params_to_homography(const TransformParams& params);

// Samples until the corners are non-degenerate (at most 100 attempts).
Homography sample_homography(Rng& rng, const TransformPrior& prior,
                             TransformParams* params_out = nullptr);

// Exact four-point correspondence. Throws DegeneracyError when three points
// of either set are collinear or the linear system is singular.
Homography dlt_solve(std::span<const Point, 4> src, std::span<const Point, 4> dst);

// Throws DegeneracyError when the homogeneous coordinate is below 1e-12.
Point apply_homography_point(const Homography& h, Point p);

// Normalized product h2 * h1 (apply h1 first).
Homography compose(const Homography& h2, const Homography& h1);

// Inverse-mapping bilinear warp of a C x H x W image. Samples whose source
// falls outside [-1, 1]^2 read 0; so do out-of-range bilinear neighbors.
// Source coordinates within 1e-9 px of the pixel grid snap to it.
std::vector<double> warp_image(std::span<const double> image, std::size_t channels,
                               std::size_t height, std::size_t width, const Homography& h);

using TransformTarget = std::array<double, 8>;

// Raw corner displacements H(c) - c for the canonical corners.
TransformTarget corner_displacements(const Homography& h);

// Per-dimension affine standardization of the corner displacements,
// calibrated once from prior draws.
struct TargetStandardizer {
  std::array<double, 8> mean{};
  std::array<double, 8> scale{1, 1, 1, 1, 1, 1, 1, 1};
  // Variance of the standardized calibration targets, floored at e^-10.
  std::array<double, 8> standardized_var{1, 1, 1, 1, 1, 1, 1, 1};

  static TargetStandardizer calibrate(const TransformPrior& prior, std::size_t draws,
                                      std::uint64_t seed);
  // Calibration of the default projective prior (10^5 draws, seed
  // kCalibrationSeed), frozen at build time.
  static const TargetStandardizer& default_projective();
  // The frozen constants when `prior` is the default one, else a fresh
  // calibration with the same draw count and seed.
  static TargetStandardizer for_prior(const TransformPrior& prior);

  // Differential entropy of the factorized Gaussian surrogate of the
  // standardized target distribution, in nats.
  double surrogate_entropy() const;
};

inline constexpr std::size_t kCalibrationDraws = 100000;
inline constexpr std::uint64_t kCalibrationSeed = 0x5EEDCA1B;

TransformTarget homography_to_target(const Homography& h, const TargetStandardizer& s);
// Throws DegeneracyError when the reconstructed corners are degenerate.
Homography target_to_homography(const TransformTarget& target, const TargetStandardizer& s);

}  // namespace avt
