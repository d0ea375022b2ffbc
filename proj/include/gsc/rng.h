#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace gsc {

/// SplitMix64. Tiny state, so one can be seeded per pixel or per ray at no
/// cost; our own uniform/normal helpers below keep streams identical across
/// standard library implementations.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() {
    return 0;
  }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from (seed, index).
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 gen(seed ^ (index * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL));
  gen();
  return gen();
}

template <typename Gen>
double uniform01(Gen& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

template <typename Gen>
double standardNormal(Gen& gen) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - uniform01(gen);
  const double v = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

template <typename Gen>
Eigen::Vector3d uniformUnitVector(Gen& gen) {
  const double z = 2.0 * uniform01(gen) - 1.0;
  const double phi = 2.0 * std::numbers::pi * uniform01(gen);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

} // namespace gsc
