#include "millforge/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace millforge {

namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Eight gradient directions; enough for 2-D and keeps the range symmetric.
double grad(int hash, double x, double y) {
  switch (hash & 7) {
    case 0: return x + y;
    case 1: return -x + y;
    case 2: return x - y;
    case 3: return -x - y;
    case 4: return x;
    case 5: return -x;
    case 6: return y;
    default: return -y;
  }
}

}  // namespace

PerlinNoise::PerlinNoise(std::uint64_t seed) {
  std::array<int, 256> p{};
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own index draw so the table does not depend on the
  // standard library's shuffle implementation.
  for (int i = 255; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[i], p[j]);
  }
  for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
}

double PerlinNoise::operator()(double x, double y) const {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int xi = static_cast<int>(static_cast<long long>(fx) & 255);
  const int yi = static_cast<int>(static_cast<long long>(fy) & 255);
  const double xf = x - fx;
  const double yf = y - fy;
  const double u = fade(xf);
  const double v = fade(yf);

  const int aa = perm_[perm_[xi] + yi];
  const int ab = perm_[perm_[xi] + yi + 1];
  const int ba = perm_[perm_[xi + 1] + yi];
  const int bb = perm_[perm_[xi + 1] + yi + 1];

  const double x1 = lerp(grad(aa, xf, yf), grad(ba, xf - 1.0, yf), u);
  const double x2 = lerp(grad(ab, xf, yf - 1.0), grad(bb, xf - 1.0, yf - 1.0), u);
  // Corner gradients reach |g.d| <= 2 for the diagonal directions.
  return 0.5 * lerp(x1, x2, v);
}

double fractal_noise(const PerlinNoise& noise, double x, double y, int octaves,
                     double lacunarity, double persistence) {
  double sum = 0.0;
  double amp = 1.0;
  double norm = 0.0;
  double freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    // Offset each octave so lattice zeros do not line up.
    sum += amp * noise(x * freq + 17.31 * o, y * freq + 5.77 * o);
    norm += amp;
    amp *= persistence;
    freq *= lacunarity;
  }
  return norm > 0.0 ? sum / norm : 0.0;
}

}  // namespace millforge
