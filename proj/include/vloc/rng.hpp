#pragma once

#include <cmath>
#include <cstdint>

// Counter-based randomness. Every draw is keyed on the values it depends on,
// so results are independent of call order and safe to recompute anywhere.

namespace vloc::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         std::uint64_t d) {
  return mix(mix(mix(a, b), c), d);
}

// Uniform in (0, 1]; never returns 0 so log() stays finite.
inline double u01(std::uint64_t key) {
  return static_cast<double>((splitmix64(key) >> 11) + 1) * 0x1.0p-53;
}

// Standard normal via Box-Muller from two derived uniforms.
inline double normal(std::uint64_t key) {
  const double u1 = u01(mix(key, 0x6e6f726d31ULL));
  const double u2 = u01(mix(key, 0x6e6f726d32ULL));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Zero-mean Laplace with the given scale; heavier tails than a normal.
inline double laplace(std::uint64_t key, double scale) {
  const double u = u01(mix(key, 0x6c61706cULL)) - 0.5;
  const double s = (u < 0.0) ? -1.0 : 1.0;
  return -scale * s * std::log(1.0 - 2.0 * std::abs(u));
}

}  // namespace vloc::rng
