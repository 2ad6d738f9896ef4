#include <cmath>

#include "avt/transforms.hpp"

namespace avt {
namespace {

double snap(double v) {
  const double r = std::nearbyint(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

std::vector<double> warp_image(std::span<const double> image, std::size_t channels,
                               std::size_t height, std::size_t width, const Homography& h) {
  const Homography inv = h.inverse();
  const std::size_t plane = height * width;
  std::vector<double> out(channels * plane, 0.0);
  const auto at = [&](std::size_t c, long r, long q) -> double {
    if (r < 0 || q < 0 || r >= static_cast<long>(height) || q >= static_cast<long>(width))
      return 0.0;
    return image[c * plane + static_cast<std::size_t>(r) * width + static_cast<std::size_t>(q)];
  };

  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double px = (2.0 * j + 1.0) / width - 1.0;
      const double py = (2.0 * i + 1.0) / height - 1.0;
      const double w = inv(2, 0) * px + inv(2, 1) * py + inv(2, 2);
      if (std::abs(w) < 1e-12) continue;
      const double qx = (inv(0, 0) * px + inv(0, 1) * py + inv(0, 2)) / w;
      const double qy = (inv(1, 0) * px + inv(1, 1) * py + inv(1, 2)) / w;
      if (!(qx >= -1.0 && qx <= 1.0 && qy >= -1.0 && qy <= 1.0)) continue;

      const double u = snap(((qx + 1.0) * width - 1.0) / 2.0);
      const double v = snap(((qy + 1.0) * height - 1.0) / 2.0);
      const double u0 = std::floor(u), v0 = std::floor(v);
      const double fu = u - u0, fv = v - v0;
      const long c0 = static_cast<long>(u0), r0 = static_cast<long>(v0);
      for (std::size_t c = 0; c < channels; ++c) {
        double value;
        if (fu == 0.0 && fv == 0.0) {
          value = at(c, r0, c0);
        } else {
          value = (1 - fv) * ((1 - fu) * at(c, r0, c0) + fu * at(c, r0, c0 + 1)) +
                  fv * ((1 - fu) * at(c, r0 + 1, c0) + fu * at(c, r0 + 1, c0 + 1));
        }
        out[c * plane + i * width + j] = value;
      }
    }
  return out;
}

}  // namespace avt
