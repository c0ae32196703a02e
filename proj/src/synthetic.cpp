#include "tmapath/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tmapath {

double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SyntheticSpot generate_synthetic_spot(const SyntheticSpotParams& params, Rng& rng) {
  SyntheticSpot spot;
  const int max_attempts = 200 * std::max(1, params.n_discs);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(spot.discs.size()) < params.n_discs;
       ++attempt) {
    const double r = params.radius_min + (params.radius_max - params.radius_min) * uniform_unit(rng);
    const double margin = r + 1.0;
    if (params.width <= 2 * margin || params.height <= 2 * margin) break;
    const Point2d c(margin + (params.width - 1 - 2 * margin) * uniform_unit(rng),
                    margin + (params.height - 1 - 2 * margin) * uniform_unit(rng));
    const Point2d snapped(std::round(c.x()), std::round(c.y()));
    const bool free = std::all_of(spot.discs.begin(), spot.discs.end(), [&](const SyntheticDisc& d) {
      return (d.center - snapped).norm() >= params.min_center_distance;
    });
    if (free) spot.discs.push_back({snapped, r, false});
  }
  const auto n_stained = static_cast<std::size_t>(
      std::lround(params.stained_fraction * static_cast<double>(spot.discs.size())));
  for (std::size_t k = 0; k < n_stained; ++k) spot.discs[k].stained = true;

  RgbImage& img = spot.image = RgbImage(params.width, params.height);
  for (int y = 0; y < params.height; ++y)
    for (int x = 0; x < params.width; ++x) {
      std::array<std::uint8_t, 3> base = params.background;
      for (const auto& d : spot.discs) {
        const double dx = x - d.center.x(), dy = y - d.center.y();
        if (dx * dx + dy * dy <= d.radius * d.radius) {
          base = d.stained ? params.stained_color : params.unstained_color;
          break;
        }
      }
      std::array<std::uint8_t, 3> px{};
      for (int c = 0; c < 3; ++c) {
        const double v = base[static_cast<std::size_t>(c)] + params.noise_sigma * standard_normal(rng);
        px[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
      img.set(x, y, px[0], px[1], px[2]);
    }
  return spot;
}

}  // namespace tmapath
