#include <algorithm>
#include <cmath>

#include "avt/error.hpp"
#include "avt/transforms.hpp"

namespace avt {
namespace {

constexpr double kDetEps = 1e-12;
constexpr double kCollinearEps = 1e-9;

bool collinear(Point a, Point b, Point c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return std::abs(cross) < kCollinearEps;
}

bool any_three_collinear(std::span<const Point, 4> p) {
  return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) ||
         collinear(p[0], p[2], p[3]) || collinear(p[1], p[2], p[3]);
}

// Exact cos/sin for multiples of 90 degrees so quarter turns stay integral.
void rotation_cos_sin(double deg, double& c, double& s) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0) {
    c = 1, s = 0;
  } else if (r == 90) {
    c = 0, s = 1;
  } else if (r == 180) {
    c = -1, s = 0;
  } else if (r == 270) {
    c = 0, s = -1;
  } else {
    const double rad = r * M_PI / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
}

std::array<double, 9> matmul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

}  // namespace

std::string to_string(TransformFamily family) {
  switch (family) {
    case TransformFamily::kProjective: return "projective";
    case TransformFamily::kAffine: return "affine";
    case TransformFamily::kIdentity: return "identity";
  }
  return "unknown";
}

TransformFamily parse_family(const std::string& name) {
  if (name == "projective") return TransformFamily::kProjective;
  if (name == "affine") return TransformFamily::kAffine;
  if (name == "identity") return TransformFamily::kIdentity;
  throw ConfigError("unknown transform family '" + name + "'");
}

void TransformPrior::validate() const {
  if (!(jitter_max >= 0) || jitter_max >= 0.5)
    throw ConfigError("jitter_max must lie in [0, 0.5), got " + std::to_string(jitter_max));
  if (!(scale_min > 0) || !(scale_min <= scale_max))
    throw ConfigError("scale range must satisfy 0 < min <= max");
  if (rotations_deg.empty()) throw ConfigError("rotation set is empty");
}

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography Homography::from_matrix(const std::array<double, 9>& m) {
  Homography h;
  h.m_ = m;
  if (m[8] != 0.0) {
    const double inv = 1.0 / m[8];
    for (double& v : h.m_) v *= inv;
    h.m_[8] = 1.0;
  }
  if (!(std::abs(h.determinant()) > kDetEps))
    throw DegeneracyError("homography is singular (|det| <= 1e-12)");
  return h;
}

double Homography::determinant() const {
  const auto& a = m_;
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Homography Homography::inverse() const {
  const auto& a = m_;
  // Adjugate; the common 1/det factor is dropped by normalization.
  std::array<double, 9> adj{
      a[4] * a[8] - a[5] * a[7], a[2] * a[7] - a[1] * a[8], a[1] * a[5] - a[2] * a[4],
      a[5] * a[6] - a[3] * a[8], a[0] * a[8] - a[2] * a[6], a[2] * a[3] - a[0] * a[5],
      a[3] * a[7] - a[4] * a[6], a[1] * a[6] - a[0] * a[7], a[0] * a[4] - a[1] * a[3]};
  if (adj[8] == 0.0) {
    const double inv_det = 1.0 / determinant();
    for (double& v : adj) v *= inv_det;
  }
  return from_matrix(adj);
}

Point apply_homography_point(const Homography& h, Point p) {
  const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
  if (std::abs(w) < 1e-12) throw DegeneracyError("point maps to infinity");
  return {(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / w,
          (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / w};
}

Homography compose(const Homography& h2, const Homography& h1) {
  return Homography::from_matrix(matmul(h2.matrix(), h1.matrix()));
}

Homography dlt_solve(std::span<const Point, 4> src, std::span<const Point, 4> dst) {
  if (any_three_collinear(src)) throw DegeneracyError("dlt_solve: collinear source points");
  if (any_three_collinear(dst)) throw DegeneracyError("dlt_solve: collinear target points");

  // Unknowns h11..h32 with h33 = 1; two rows per correspondence.
  double a[8][9];
  for (int k = 0; k < 4; ++k) {
    const double x = src[k].x, y = src[k].y, u = dst[k].x, v = dst[k].y;
    double* r0 = a[2 * k];
    double* r1 = a[2 * k + 1];
    const double row0[9] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
    const double row1[9] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
    std::copy(row0, row0 + 9, r0);
    std::copy(row1, row1 + 9, r1);
  }
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-14) throw DegeneracyError("dlt_solve: singular system");
    if (pivot != col) std::swap(a[pivot], a[col]);
    for (int r = col + 1; r < 8; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::array<double, 9> h{};
  for (int r = 7; r >= 0; --r) {
    double s = a[r][8];
    for (int c = r + 1; c < 8; ++c) s -= a[r][c] * h[c];
    h[r] = s / a[r][r];
  }
  h[8] = 1.0;
  return Homography::from_matrix(h);
}

TransformParams sample_transform(Rng& rng, const TransformPrior& prior) {
  TransformParams p;
  if (prior.family == TransformFamily::kIdentity) return p;
  p.scale = uniform(rng, prior.scale_min, prior.scale_max);
  p.rotation_deg = prior.rotations_deg[uniform_index(rng, prior.rotations_deg.size())];
  const double j = prior.jitter_max;
  if (prior.family == TransformFamily::kProjective) {
    for (double& v : p.corner_jitter) v = uniform(rng, -j, j);
    return p;
  }
  // Affine: three corners jitter freely and the fourth completes the
  // parallelogram; rejected until it respects the jitter bound.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (int k = 0; k < 6; ++k) p.corner_jitter[k] = uniform(rng, -j, j);
    const double dx = p.corner_jitter[0] + p.corner_jitter[4] - p.corner_jitter[2];
    const double dy = p.corner_jitter[1] + p.corner_jitter[5] - p.corner_jitter[3];
    if (std::abs(dx) <= j && std::abs(dy) <= j) {
      p.corner_jitter[6] = dx;
      p.corner_jitter[7] = dy;
      return p;
    }
  }
  throw DegeneracyError("affine sampler failed to satisfy the jitter bound");
}

Homography params_to_homography(const TransformParams& params) {
  const std::array<double, 9> scale{params.scale, 0, 0, 0, params.scale, 0, 0, 0, 1};
  double c = 1, s = 0;
  rotation_cos_sin(params.rotation_deg, c, s);
  const std::array<double, 9> rot{c, -s, 0, s, c, 0, 0, 0, 1};

  std::array<Point, 4> jittered;
  for (int k = 0; k < 4; ++k)
    jittered[k] = {kCanonicalCorners[k].x + params.corner_jitter[2 * k],
                   kCanonicalCorners[k].y + params.corner_jitter[2 * k + 1]};
  const bool no_jitter = std::all_of(params.corner_jitter.begin(), params.corner_jitter.end(),
                                     [](double v) { return v == 0.0; });
  const Homography jitter =
      no_jitter ? Homography() : dlt_solve(std::span<const Point, 4>(kCanonicalCorners),
                                           std::span<const Point, 4>(jittered));
  return Homography::from_matrix(matmul(jitter.matrix(), matmul(rot, scale)));
}

Homography sample_homography(Rng& rng, const TransformPrior& prior,
                             TransformParams* params_out) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const TransformParams p = sample_transform(rng, prior);
    try {
      Homography h = params_to_homography(p);
      if (params_out) *params_out = p;
      return h;
    } catch (const DegeneracyError&) {
    }
  }
  throw DegeneracyError("no non-degenerate transformation in 100 attempts");
}

}  // namespace avt
