#pragma once

#include <array>
#include <cstdint>

namespace millforge {

/// 2-D gradient noise (improved Perlin) with a permutation table shuffled
/// from `seed`. Output lies roughly in [-1, 1] and is 0 on integer lattice
/// points.
class PerlinNoise {
 public:
  explicit PerlinNoise(std::uint64_t seed = 0);

  double operator()(double x, double y) const;

 private:
  std::array<int, 512> perm_{};
};

/// Octave sum of Perlin noise, normalised by the total amplitude so the range
/// stays near [-1, 1] for any octave count.
double fractal_noise(const PerlinNoise& noise, double x, double y, int octaves,
                     double lacunarity = 2.0, double persistence = 0.5);

}  // namespace millforge
