#include <cmath>
#include <set>

#include "avt/error.hpp"
#include "avt/transforms.hpp"
#include "doctest.h"

using namespace avt;

namespace {

double corner_roundtrip_error(const Homography& h, std::span<const Point, 4> src,
                              std::span<const Point, 4> dst) {
  double worst = 0;
  for (int k = 0; k < 4; ++k) {
    const Point q = apply_homography_point(h, src[k]);
    worst = std::max({worst, std::abs(q.x - dst[k].x), std::abs(q.y - dst[k].y)});
  }
  return worst;
}

// Max entry difference after scaling both matrices to unit Frobenius norm
// with a common sign.
double projective_distance(const Homography& a, const Homography& b) {
  auto unit = [](const Homography& h) {
    auto m = h.matrix();
    double n = 0;
    for (double v : m) n += v * v;
    n = std::sqrt(n) * (m[8] < 0 ? -1 : 1);
    for (double& v : m) v /= n;
    return m;
  };
  const auto ua = unit(a), ub = unit(b);
  double d = 0;
  for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(ua[i] - ub[i]));
  return d;
}

Homography random_homography(Rng& rng) {
  TransformPrior p;
  p.rotations_deg = {0, 37, 90, 180, 211, 270};
  return sample_homography(rng, p);
}

}  // namespace

TEST_CASE("degenerate prior yields identity parameters") {
  TransformPrior p;
  p.jitter_max = 0;
  p.scale_min = p.scale_max = 1;
  p.rotations_deg = {0};
  Rng rng = derive_rng(1, {});
  const auto params = sample_transform(rng, p);
  CHECK(params.scale == 1.0);
  CHECK(params.rotation_deg == 0.0);
  for (double v : params.corner_jitter) CHECK(v == 0.0);
  const auto h = params_to_homography(params);
  CHECK(h.matrix() == Homography().matrix());
}

TEST_CASE("default prior reproduces the reference configuration") {
  const TransformPrior p;
  CHECK(p.jitter_max == 0.125);
  CHECK(p.scale_min == 0.8);
  CHECK(p.scale_max == 1.2);
  CHECK(p.rotations_deg == std::vector<double>{0, 90, 180, 270});
  CHECK(p.family == TransformFamily::kProjective);
}

TEST_CASE("sampler ranges and Monte Carlo means over 10^4 draws") {
  const TransformPrior p;
  Rng rng = derive_rng(2, {});
  const int n = 10000;
  double sum_scale = 0, sum_rot_index = 0;
  std::array<double, 8> sum_j{};
  for (int i = 0; i < n; ++i) {
    const auto t = sample_transform(rng, p);
    REQUIRE(t.scale >= 0.8);
    REQUIRE(t.scale <= 1.2);
    REQUIRE(std::set<double>{0, 90, 180, 270}.count(t.rotation_deg) == 1);
    for (int k = 0; k < 8; ++k) {
      REQUIRE(std::abs(t.corner_jitter[k]) <= 0.125);
      sum_j[k] += t.corner_jitter[k];
    }
    sum_scale += t.scale;
    sum_rot_index += t.rotation_deg / 90.0;
  }
  // Standard errors of Uniform(a, b) means: (b - a) / sqrt(12 n).
  CHECK(std::abs(sum_scale / n - 1.0) < 3 * 0.4 / std::sqrt(12.0 * n));
  CHECK(std::abs(sum_rot_index / n - 1.5) < 3 * std::sqrt(1.25 / n));
  for (double s : sum_j) CHECK(std::abs(s / n) < 3 * 0.25 / std::sqrt(12.0 * n));
}

TEST_CASE("quarter rotation maps corner (1,1) to (-1,1)") {
  TransformParams t;
  t.rotation_deg = 90;
  const auto q = apply_homography_point(params_to_homography(t), {1, 1});
  CHECK(q.x == -1.0);
  CHECK(q.y == 1.0);
}

TEST_CASE("composed matrix equals staged point mapping") {
  Rng rng = derive_rng(3, {});
  const TransformPrior prior;
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = sample_transform(rng, prior);
    const auto h = params_to_homography(t);
    std::array<Point, 4> jittered;
    for (int k = 0; k < 4; ++k)
      jittered[k] = {kCanonicalCorners[k].x + t.corner_jitter[2 * k],
                     kCanonicalCorners[k].y + t.corner_jitter[2 * k + 1]};
    const auto hj = dlt_solve(kCanonicalCorners, jittered);
    const double rad = t.rotation_deg * M_PI / 180.0;
    for (const Point c : kCanonicalCorners) {
      // Stage by stage: scale, rotate (closed form), then jitter.
      const Point s{c.x * t.scale, c.y * t.scale};
      const Point r{std::round(std::cos(rad)) * s.x - std::round(std::sin(rad)) * s.y,
                    std::round(std::sin(rad)) * s.x + std::round(std::cos(rad)) * s.y};
      const Point staged = apply_homography_point(hj, r);
      const Point direct = apply_homography_point(h, c);
      CHECK(std::abs(staged.x - direct.x) < 1e-12);
      CHECK(std::abs(staged.y - direct.y) < 1e-12);
    }
  }
}

TEST_CASE("dlt_solve examples") {
  const std::array<Point, 4> src = kCanonicalCorners;
  CHECK(projective_distance(dlt_solve(src, src), Homography()) < 1e-15);

  std::array<Point, 4> shifted;
  for (int k = 0; k < 4; ++k) shifted[k] = {src[k].x + 0.1, src[k].y + 0.2};
  const auto h = dlt_solve(src, shifted);
  CHECK(corner_roundtrip_error(h, src, shifted) < 1e-12);
  const auto closed = Homography::from_matrix({1, 0, 0.1, 0, 1, 0.2, 0, 0, 1});
  CHECK(projective_distance(h, closed) < 1e-12);

  std::array<Point, 4> collinear{Point{0, 0}, Point{1, 1}, Point{2, 2}, Point{0, 1}};
  CHECK_THROWS_AS(dlt_solve(src, collinear), DegeneracyError);
  CHECK_THROWS_AS(dlt_solve(collinear, src), DegeneracyError);
}

TEST_CASE("dlt_solve property: 1000 random corner sets round-trip") {
  Rng rng = derive_rng(4, {});
  double worst = 0;
  int solved = 0;
  while (solved < 1000) {
    std::array<Point, 4> src, dst;
    for (int k = 0; k < 4; ++k) {
      src[k] = {kCanonicalCorners[k].x + uniform(rng, -0.4, 0.4),
                kCanonicalCorners[k].y + uniform(rng, -0.4, 0.4)};
      dst[k] = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
    }
    try {
      const auto h = dlt_solve(src, dst);
      worst = std::max(worst, corner_roundtrip_error(h, src, dst));
      ++solved;
    } catch (const DegeneracyError&) {
      // Non-convex or near-collinear random draws; skip.
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("apply and compose") {
  const Point p{0.3, -0.7};
  const auto id = apply_homography_point(Homography(), p);
  CHECK(id.x == p.x);
  CHECK(id.y == p.y);
  const auto t = apply_homography_point(Homography::from_matrix({1, 0, 0.1, 0, 1, 0.2, 0, 0, 1}),
                                        {0, 0});
  CHECK(t.x == 0.1);
  CHECK(t.y == 0.2);

  Rng rng = derive_rng(5, {});
  double worst_assoc = 0, worst_inv = 0, worst_id = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h1 = random_homography(rng);
    const auto h2 = random_homography(rng);
    const Point q{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto a = apply_homography_point(compose(h2, h1), q);
    const auto b = apply_homography_point(h2, apply_homography_point(h1, q));
    worst_assoc = std::max({worst_assoc, std::abs(a.x - b.x), std::abs(a.y - b.y)});
    worst_inv = std::max(worst_inv, projective_distance(compose(h1, h1.inverse()), Homography()));
    worst_id = std::max(worst_id, projective_distance(compose(h1, Homography()), h1));
  }
  CHECK(worst_assoc < 1e-12);
  CHECK(worst_inv < 1e-10);
  CHECK(worst_id == 0.0);

  CHECK_THROWS_AS(apply_homography_point(Homography::from_matrix({1, 0, 0, 0, 1, 0, 1, 0, 0}),
                                         {0, 0.5}),
                  DegeneracyError);
  CHECK_THROWS_AS(Homography::from_matrix({1, 2, 3, 2, 4, 6, 0, 0, 1}), DegeneracyError);
}

TEST_CASE("normalization is idempotent") {
  const auto h = Homography::from_matrix({2, 0.2, 0.4, 0.1, 1.8, -0.2, 0.02, 0.04, 2});
  CHECK(h(2, 2) == 1.0);
  CHECK(Homography::from_matrix(h.matrix()).matrix() == h.matrix());
}

TEST_CASE("warp_image exact cases") {
  std::vector<double> img(2 * 4 * 4);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(1.0 + 3.0 * i) + 0.01 * i;

  CHECK(warp_image(img, 2, 4, 4, Homography()) == img);

  TransformParams half_turn;
  half_turn.rotation_deg = 180;
  const auto rotated = warp_image(img, 2, 4, 4, params_to_homography(half_turn));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(rotated[c * 16 + i * 4 + j] == img[c * 16 + (3 - i) * 4 + (3 - j)]);

  TransformParams quarter;
  quarter.rotation_deg = 90;
  const auto q = warp_image(img, 2, 4, 4, params_to_homography(quarter));
  // Output (i, j) reads the source at H^-1 applied: x' = y, y' = -x.
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(q[i * 4 + j] == img[(3 - j) * 4 + i]);

  const auto gone =
      warp_image(img, 2, 4, 4, Homography::from_matrix({1, 0, 5, 0, 1, 5, 0, 0, 1}));
  for (double v : gone) CHECK(v == 0.0);
}

TEST_CASE("warp_image is linear in pixel values") {
  Rng rng = derive_rng(6, {});
  std::vector<double> x(3 * 9 * 11), y(x.size()), mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = uniform(rng, -1, 1);
    y[i] = uniform(rng, -1, 1);
    mix[i] = 0.7 * x[i] - 1.3 * y[i];
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = sample_homography(rng, TransformPrior{});
    const auto wx = warp_image(x, 3, 9, 11, h);
    const auto wy = warp_image(y, 3, 9, 11, h);
    const auto wm = warp_image(mix, 3, 9, 11, h);
    for (std::size_t i = 0; i < wm.size(); ++i)
      CHECK(std::abs(wm[i] - (0.7 * wx[i] - 1.3 * wy[i])) < 1e-12);
  }
}

TEST_CASE("target encoding") {
  const auto& s = TargetStandardizer::default_projective();
  const auto t0 = homography_to_target(Homography(), s);
  for (int j = 0; j < 8; ++j) CHECK(t0[j] == doctest::Approx(-s.mean[j] / s.scale[j]).epsilon(1e-15));

  Rng rng = derive_rng(7, {});
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = sample_homography(rng, TransformPrior{});
    worst = std::max(worst, projective_distance(target_to_homography(homography_to_target(h, s), s), h));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("frozen calibration constants match a fresh calibration") {
  const auto fresh = TargetStandardizer::calibrate(TransformPrior{}, kCalibrationDraws, kCalibrationSeed);
  const auto& frozen = TargetStandardizer::default_projective();
  for (int j = 0; j < 8; ++j) {
    CHECK(fresh.mean[j] == doctest::Approx(frozen.mean[j]).epsilon(1e-14));
    CHECK(fresh.scale[j] == doctest::Approx(frozen.scale[j]).epsilon(1e-14));
    CHECK(fresh.standardized_var[j] == doctest::Approx(frozen.standardized_var[j]).epsilon(1e-14));
  }
  CHECK(frozen.surrogate_entropy() == doctest::Approx(4.0 * std::log(2.0 * M_PI * M_E)).epsilon(1e-12));
}

TEST_CASE("standardized sampler draws are centered with unit spread") {
  const auto& s = TargetStandardizer::default_projective();
  Rng rng = derive_rng(8, {});
  const int n = 100000;
  std::array<double, 8> sum{}, sum_sq{};
  for (int i = 0; i < n; ++i) {
    const auto t = homography_to_target(sample_homography(rng, TransformPrior{}), s);
    for (int j = 0; j < 8; ++j) {
      sum[j] += t[j];
      sum_sq[j] += t[j] * t[j];
    }
  }
  for (int j = 0; j < 8; ++j) {
    const double m = sum[j] / n;
    const double sd = std::sqrt(sum_sq[j] / n - m * m);
    CHECK(std::abs(m) < 0.02);
    CHECK(sd >= 0.9);
    CHECK(sd <= 1.1);
  }
}

TEST_CASE("sampler invariants hold over 10^5 draws for every family") {
  for (auto family : {TransformFamily::kProjective, TransformFamily::kAffine, TransformFamily::kIdentity}) {
    TransformPrior p;
    p.family = family;
    Rng rng = derive_rng(9, {static_cast<std::uint64_t>(family)});
    bool ok = true;
    for (int i = 0; i < 100000 && ok; ++i) {
      const auto t = sample_transform(rng, p);
      ok = t.scale >= p.scale_min && t.scale <= p.scale_max &&
           std::find(p.rotations_deg.begin(), p.rotations_deg.end(), t.rotation_deg) !=
               p.rotations_deg.end();
      for (double v : t.corner_jitter) ok = ok && std::abs(v) <= p.jitter_max;
      if (family == TransformFamily::kAffine && i < 1000) {
        const auto h = params_to_homography(t);
        ok = ok && std::abs(h(2, 0)) < 1e-12 && std::abs(h(2, 1)) < 1e-12;
      }
    }
    CHECK(ok);
  }
}

TEST_CASE("identity family calibrates without dividing by zero") {
  TransformPrior p;
  p.family = TransformFamily::kIdentity;
  const auto s = TargetStandardizer::calibrate(p, 100, 1);
  for (int j = 0; j < 8; ++j) {
    CHECK(s.scale[j] == 1.0);
    CHECK(s.mean[j] == 0.0);
  }
  CHECK(std::isfinite(s.surrogate_entropy()));
}

TEST_CASE("prior validation") {
  TransformPrior p;
  p.rotations_deg.clear();
  CHECK_THROWS_AS(p.validate(), ConfigError);
  TransformPrior q;
  q.scale_min = 1.3;
  CHECK_THROWS_AS(q.validate(), ConfigError);
  CHECK(parse_family("affine") == TransformFamily::kAffine);
  CHECK_THROWS_AS(parse_family("shear"), ConfigError);
}
