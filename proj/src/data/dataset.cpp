#include <algorithm>
#include <cmath>
#include <numeric>

#include "avt/data.hpp"
#include "avt/error.hpp"
#include "avt/rng.hpp"

namespace avt {
namespace {

struct Vertex {
  double x, y;
};

// Containment in a positively oriented convex polygon, edges inclusive.
bool inside(const std::vector<Vertex>& poly, double x, double y) {
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vertex& a = poly[k];
    const Vertex& b = poly[(k + 1) % poly.size()];
    if ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) < 0) return false;
  }
  return true;
}

constexpr int kSupersample = 4;
constexpr double kSkyBrightness = 0.3;

}  // namespace

Dataset gen_synthetic_shapes(std::uint64_t seed, std::size_t n, std::size_t size) {
  if (n == 0) throw ConfigError("gen_synthetic_shapes: n must be at least 1");
  if (size < 4) throw ConfigError("gen_synthetic_shapes: size must be at least 4");
  Dataset ds;
  ds.count = n;
  ds.channels = 1;
  ds.height = ds.width = size;
  ds.num_classes = 3;
  ds.split = "synthetic";
  ds.images.assign(n * size * size, 0.0);
  ds.labels.resize(n);

  const double s = static_cast<double>(size);
  for (std::size_t idx = 0; idx < n; ++idx) {
    Rng rng = derive_rng(seed, {0x5A9E5ull, idx});
    const std::size_t shapes = 1 + uniform_index(rng, 3);
    ds.labels[idx] = static_cast<std::int32_t>(shapes - 1);
    double* img = ds.images.data() + idx * size * size;
    // Background brightens toward the top, giving images an upright
    // orientation the way natural scenes have one.
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c)
        img[r * size + c] = kSkyBrightness * (1.0 - static_cast<double>(r) / (s - 1.0));

    for (std::size_t p = 0; p < shapes; ++p) {
      const std::size_t m = 3 + uniform_index(rng, 4);
      const double cx = uniform(rng, 0.25, 0.75) * s;
      const double cy = uniform(rng, 0.25, 0.75) * s;
      const double radius = uniform(rng, 0.12, 0.3) * s;
      const double phase = uniform(rng, 0.0, 2.0 * M_PI);
      const double intensity = uniform(rng, 0.4, 1.0);
      // Strictly increasing angles on a circle: convex, positively oriented.
      std::vector<Vertex> poly(m);
      for (std::size_t k = 0; k < m; ++k) {
        const double a = phase + 2.0 * M_PI * (static_cast<double>(k) + uniform(rng, -0.3, 0.3)) /
                                     static_cast<double>(m);
        poly[k] = {cx + radius * std::cos(a), cy + radius * std::sin(a)};
      }

      const auto [minx_it, maxx_it] = std::minmax_element(
          poly.begin(), poly.end(), [](const Vertex& a, const Vertex& b) { return a.x < b.x; });
      const auto [miny_it, maxy_it] = std::minmax_element(
          poly.begin(), poly.end(), [](const Vertex& a, const Vertex& b) { return a.y < b.y; });
      const long c0 = std::max(0L, static_cast<long>(std::floor(minx_it->x)));
      const long c1 = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(maxx_it->x)));
      const long r0 = std::max(0L, static_cast<long>(std::floor(miny_it->y)));
      const long r1 = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(maxy_it->y)));
      for (long r = r0; r <= r1; ++r)
        for (long c = c0; c <= c1; ++c) {
          int hits = 0;
          for (int sy = 0; sy < kSupersample; ++sy)
            for (int sx = 0; sx < kSupersample; ++sx)
              hits += inside(poly, c + (sx + 0.5) / kSupersample, r + (sy + 0.5) / kSupersample);
          if (!hits) continue;
          const double cover = hits / double(kSupersample * kSupersample);
          double& px = img[r * size + c];
          px = px * (1.0 - cover) + intensity * cover;
        }
    }
  }
  return ds;
}

NormStats compute_norm_stats(const Dataset& train) {
  NormStats st;
  const std::size_t plane = train.height * train.width;
  const double count = static_cast<double>(train.count * plane);
  st.mean.assign(train.channels, 0.0);
  st.stddev.assign(train.channels, 0.0);
  for (std::size_t c = 0; c < train.channels; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < train.count; ++i) {
      const double* p = train.images.data() + (i * train.channels + c) * plane;
      for (std::size_t q = 0; q < plane; ++q) s += p[q];
    }
    const double mu = s / count;
    double v = 0;
    for (std::size_t i = 0; i < train.count; ++i) {
      const double* p = train.images.data() + (i * train.channels + c) * plane;
      for (std::size_t q = 0; q < plane; ++q) v += (p[q] - mu) * (p[q] - mu);
    }
    st.mean[c] = mu;
    st.stddev[c] = std::max(std::sqrt(v / count), 1e-12);
  }
  return st;
}

Dataset normalize(const Dataset& ds, const NormStats& stats) {
  if (!ds.norm.empty()) throw Error("normalize: dataset '" + ds.split + "' is already normalized");
  if (stats.mean.size() != ds.channels)
    throw ShapeError("normalize: statistics for " + std::to_string(stats.mean.size()) +
                     " channels, dataset has " + std::to_string(ds.channels));
  Dataset out = ds;
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t i = 0; i < ds.count; ++i)
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double* p = out.images.data() + (i * ds.channels + c) * plane;
      for (std::size_t q = 0; q < plane; ++q) p[q] = (p[q] - stats.mean[c]) / stats.stddev[c];
    }
  out.norm = stats;
  return out;
}

Dataset denormalize(const Dataset& ds) {
  if (ds.norm.empty()) return ds;
  Dataset out = ds;
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t i = 0; i < ds.count; ++i)
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double* p = out.images.data() + (i * ds.channels + c) * plane;
      for (std::size_t q = 0; q < plane; ++q) p[q] = p[q] * ds.norm.stddev[c] + ds.norm.mean[c];
    }
  out.norm = {};
  return out;
}

Dataset take(const Dataset& ds, std::size_t begin, std::size_t count) {
  if (begin + count > ds.count)
    throw ShapeError("take: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside dataset of " + std::to_string(ds.count));
  Dataset out = ds;
  out.count = count;
  out.images.assign(ds.images.begin() + begin * ds.image_size(),
                    ds.images.begin() + (begin + count) * ds.image_size());
  if (ds.labeled()) out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + begin + count);
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, {0xBA7C4ull, epoch});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n; b += batch_size)
    batches.emplace_back(order.begin() + b, order.begin() + std::min(n, b + batch_size));
  return batches;
}

}  // namespace avt
