#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A draw is a
// pure function of (key, counter), which is what makes path generation
// independent of thread scheduling.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace bsde {

class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    ctr = round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += kW0;
      key[1] += kW1;
      ctr = round(ctr, key);
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static constexpr Counter round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Two independent standard normals for one counter value (Box-Muller on two
/// 53-bit uniforms).
inline std::pair<double, double> philox_normal_pair(const Philox4x32::Counter& ctr,
                                                    const Philox4x32::Key& key) {
  const auto x = Philox4x32::apply(ctr, key);
  const std::uint64_t a = (static_cast<std::uint64_t>(x[0]) << 32) | x[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(x[2]) << 32) | x[3];
  constexpr double scale = 0x1.0p-53;
  // u1 in (0, 1], u2 in [0, 1)
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * scale;
  const double u2 = static_cast<double>(b >> 11) * scale;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Standard normal addressed by (seed, stream, step, component).
inline double philox_normal(std::uint64_t seed, std::uint64_t stream, std::uint32_t step,
                            std::uint32_t component) {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream),
                                static_cast<std::uint32_t>(stream >> 32), step,
                                component / 2};
  const auto [n0, n1] = philox_normal_pair(ctr, Philox4x32::key_from_seed(seed));
  return (component % 2 == 0) ? n0 : n1;
}

/// Uniform in [0, 1) addressed like philox_normal.
inline double philox_uniform(std::uint64_t seed, std::uint64_t stream, std::uint32_t step,
                             std::uint32_t component) {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream),
                                static_cast<std::uint32_t>(stream >> 32), step,
                                component};
  const auto x = Philox4x32::apply(ctr, Philox4x32::key_from_seed(seed));
  const std::uint64_t a = (static_cast<std::uint64_t>(x[0]) << 32) | x[1];
  return static_cast<double>(a >> 11) * 0x1.0p-53;
}

} // namespace bsde
