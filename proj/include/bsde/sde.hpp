#pragma once

// Seeded Brownian ensembles and the forward market model: money-market rate
// r, n stocks with appreciation rates b, volatility matrix sigma (n x k) and
// risk premium theta linked by b - r 1 = sigma theta.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "bsde/core.hpp"

namespace bsde {

/// Counter-based Brownian ensemble. Increment (m, i, c) is a pure function of
/// (seed, m, i, c), so the ensemble is independent of generation order.
PathsPtr simulate_brownian(const TimeGrid& grid, std::size_t num_paths, std::size_t dim,
                           std::uint64_t seed);

/// Constant-coefficient complete market.
class MarketModel {
public:
  /// Either b or theta may be omitted; the missing one is derived from the
  /// risk-premium relation. When both are given their consistency is checked.
  MarketModel(double r, std::optional<std::vector<double>> b, std::vector<std::vector<double>> sigma,
              std::optional<std::vector<double>> theta, std::vector<double> s0);

  /// Single stock driven by one Brownian motion.
  static MarketModel black_scholes(double r, double b, double sigma, double s0);

  double r() const noexcept { return r_; }
  const std::vector<double>& b() const noexcept { return b_; }
  const std::vector<std::vector<double>>& sigma() const noexcept { return sigma_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& s0() const noexcept { return s0_; }
  std::size_t num_assets() const noexcept { return s0_.size(); }
  std::size_t noise_dim() const noexcept { return theta_.size(); }

  /// sup_i |b_i - r - (sigma theta)_i|
  double consistency_error() const;
  bool complete() const noexcept { return num_assets() == noise_dim(); }

  /// (sigma^*)^{-1} as a row-major k x n matrix; throws SingularVolatility.
  std::vector<double> sigma_transpose_inverse() const;

  /// F(t,y,z) = -r y - z theta for a d-dimensional claim vector.
  Generator generator(std::size_t d = 1) const;

private:
  double r_;
  std::vector<double> b_;
  std::vector<std::vector<double>> sigma_;
  std::vector<double> theta_;
  std::vector<double> s0_;
};

/// Log-Euler asset paths, a y-type process with one entry per asset.
AdaptedProcess simulate_assets(const MarketModel& market, const PathsPtr& paths);

/// Per-path discount factor exp(-[sum (r + |theta|^2/2) dt + sum theta . dW])
/// between grid indices from <= to (left-endpoint sums).
std::vector<double> discount_factor(const MarketModel& market, const PathEnsemble& paths,
                                    std::size_t from, std::size_t to);

/// Cumulative exponent L[i][m] = sum_{l<i} (r + |theta|^2/2) dt_l + theta . dW_l,
/// so that the factor between i and j is exp(-(L[j] - L[i])).
std::vector<double> discount_exponent(const MarketModel& market, const PathEnsemble& paths);

} // namespace bsde
