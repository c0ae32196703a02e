#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tmapath/image.hpp"
#include "tmapath/random.hpp"

namespace tmapath {

struct SyntheticDisc {
  Point2d center;
  double radius;
  bool stained;
};

/// Generator for benchmark spots: flat discs on a light background with
/// additive Gaussian noise, placed by dart throwing with a minimum center
/// distance. Stained discs are brown, unstained discs blue.
struct SyntheticSpotParams {
  int width = 512;
  int height = 512;
  int n_discs = 30;
  double radius_min = 8.0;
  double radius_max = 15.0;
  double min_center_distance = 40.0;
  double noise_sigma = 10.0;
  double stained_fraction = 0.5;
  std::array<std::uint8_t, 3> background{225, 215, 225};
  std::array<std::uint8_t, 3> stained_color{150, 95, 60};
  std::array<std::uint8_t, 3> unstained_color{80, 90, 170};
};

struct SyntheticSpot {
  RgbImage image;
  std::vector<SyntheticDisc> discs;
};

/// Exactly round(stained_fraction * placed) discs are stained. Fewer than
/// n_discs discs are placed only when dart throwing runs out of room.
SyntheticSpot generate_synthetic_spot(const SyntheticSpotParams& params, Rng& rng);

/// Standard normal draw (Box-Muller on uniform_unit); portable across
/// standard libraries.
double standard_normal(Rng& rng);

}  // namespace tmapath
