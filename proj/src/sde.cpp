#include "bsde/sde.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"
#include "bsde/philox.hpp"

namespace bsde {

PathsPtr simulate_brownian(const TimeGrid& grid, std::size_t num_paths, std::size_t dim,
                           std::uint64_t seed) {
  if (num_paths == 0 || dim == 0) throw InvalidArgument("simulate_brownian: M and k must be positive");
  const std::size_t n = grid.num_steps();
  std::vector<double> inc(n * num_paths * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double sd = std::sqrt(grid.dt(i));
    double* slab = inc.data() + i * num_paths * dim;
    parallel::for_chunks(num_paths, [&](std::size_t b, std::size_t e) {
      for (std::size_t m = b; m < e; ++m)
        for (std::size_t c = 0; c < dim; c += 2) {
          const Philox4x32::Counter ctr{static_cast<std::uint32_t>(m),
                                        static_cast<std::uint32_t>(static_cast<std::uint64_t>(m) >> 32),
                                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(c / 2)};
          const auto [z0, z1] = philox_normal_pair(ctr, Philox4x32::key_from_seed(seed));
          slab[m * dim + c] = sd * z0;
          if (c + 1 < dim) slab[m * dim + c + 1] = sd * z1;
        }
    });
  }
  return std::make_shared<const PathEnsemble>(grid, num_paths, dim, seed, std::move(inc));
}

// ------------------------------------------------------------- MarketModel

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != k)
      throw DimensionError("volatility matrix rows have different lengths");
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

} // namespace

MarketModel::MarketModel(double r, std::optional<std::vector<double>> b,
                         std::vector<std::vector<double>> sigma, std::optional<std::vector<double>> theta,
                         std::vector<double> s0)
    : r_(r), sigma_(std::move(sigma)), s0_(std::move(s0)) {
  if (s0_.empty() || sigma_.size() != s0_.size() || sigma_.front().empty())
    throw DimensionError("market: sigma must have one row per asset");
  for (double s : s0_)
    if (!(s > 0.0)) throw InvalidArgument("market: initial prices must be positive");
  const Eigen::MatrixXd sig = to_matrix(sigma_);
  const auto n = sig.rows();
  const auto k = sig.cols();

  if (theta) {
    if (static_cast<Eigen::Index>(theta->size()) != k) throw DimensionError("market: theta must have k entries");
    theta_ = *theta;
  }
  if (b) {
    if (static_cast<Eigen::Index>(b->size()) != n) throw DimensionError("market: b must have n entries");
    b_ = *b;
  }
  if (!b && !theta) {
    theta_.assign(static_cast<std::size_t>(k), 0.0);
  }
  if (!b_.empty() && theta_.empty()) {
    Eigen::VectorXd excess(n);
    for (Eigen::Index i = 0; i < n; ++i) excess(i) = b_[static_cast<std::size_t>(i)] - r_;
    const Eigen::VectorXd th = sig.completeOrthogonalDecomposition().solve(excess);
    theta_.assign(th.data(), th.data() + k);
  }
  if (b_.empty()) {
    const Eigen::Map<const Eigen::VectorXd> th(theta_.data(), k);
    const Eigen::VectorXd sb = sig * th;
    b_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) b_[static_cast<std::size_t>(i)] = r_ + sb(i);
  }
  if (consistency_error() > 1e-10)
    throw InvalidArgument("market: b - r 1 != sigma theta (risk-premium relation violated)");
}

MarketModel MarketModel::black_scholes(double r, double b, double sigma, double s0) {
  return MarketModel(r, std::vector<double>{b}, {{sigma}}, std::nullopt, {s0});
}

double MarketModel::consistency_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < b_.size(); ++i) {
    double st = 0.0;
    for (std::size_t j = 0; j < theta_.size(); ++j) st += sigma_[i][j] * theta_[j];
    worst = std::max(worst, std::abs(b_[i] - r_ - st));
  }
  return worst;
}

std::vector<double> MarketModel::sigma_transpose_inverse() const {
  if (!complete()) throw SingularVolatility("hedging needs a square volatility matrix (n = k)");
  const Eigen::MatrixXd st = to_matrix(sigma_).transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(st);
  if (!lu.isInvertible()) throw SingularVolatility("volatility matrix is singular");
  const Eigen::MatrixXd inv = lu.inverse();
  std::vector<double> out(static_cast<std::size_t>(inv.size()));
  for (Eigen::Index i = 0; i < inv.rows(); ++i)
    for (Eigen::Index j = 0; j < inv.cols(); ++j)
      out[static_cast<std::size_t>(i * inv.cols() + j)] = inv(i, j);
  return out;
}

Generator MarketModel::generator(std::size_t d) const { return Generator::linear(d, r_, theta_); }

// ------------------------------------------------------------- simulation

AdaptedProcess simulate_assets(const MarketModel& market, const PathsPtr& paths) {
  const std::size_t n = market.num_assets();
  const std::size_t k = market.noise_dim();
  if (paths->dim() != k) throw DimensionError("simulate_assets: market noise dimension != ensemble dimension");
  const std::size_t m = paths->num_paths();
  const std::size_t steps = paths->num_steps();
  const auto& sig = market.sigma();

  std::vector<double> drift(n);
  for (std::size_t a = 0; a < n; ++a) {
    double v = 0.0;
    for (std::size_t c = 0; c < k; ++c) v += sig[a][c] * sig[a][c];
    drift[a] = market.b()[a] - 0.5 * v;
  }

  std::vector<double> s((steps + 1) * m * n);
  for (std::size_t p = 0; p < m; ++p)
    std::copy(market.s0().begin(), market.s0().end(), s.begin() + p * n);
  for (std::size_t i = 0; i < steps; ++i) {
    const double dt = paths->grid().dt(i);
    parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        const auto dw = paths->dw(i, p);
        for (std::size_t a = 0; a < n; ++a) {
          double noise = 0.0;
          for (std::size_t c = 0; c < k; ++c) noise += sig[a][c] * dw[c];
          s[((i + 1) * m + p) * n + a] = s[(i * m + p) * n + a] * std::exp(drift[a] * dt + noise);
        }
      }
    });
  }
  return AdaptedProcess(paths, n, Shape::y_type, std::move(s));
}

std::vector<double> discount_exponent(const MarketModel& market, const PathEnsemble& paths) {
  const auto& th = market.theta();
  if (paths.dim() != th.size()) throw DimensionError("discount: theta dimension != ensemble dimension");
  const std::size_t m = paths.num_paths();
  const std::size_t steps = paths.num_steps();
  double th2 = 0.0;
  for (double x : th) th2 += x * x;
  const double rate = market.r() + 0.5 * th2;

  std::vector<double> L((steps + 1) * m, 0.0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double dt = paths.grid().dt(i);
    parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        const auto dw = paths.dw(i, p);
        double x = rate * dt;
        for (std::size_t c = 0; c < th.size(); ++c) x += th[c] * dw[c];
        L[(i + 1) * m + p] = L[i * m + p] + x;
      }
    });
  }
  return L;
}

std::vector<double> discount_factor(const MarketModel& market, const PathEnsemble& paths,
                                    std::size_t from, std::size_t to) {
  if (from > to || to > paths.num_steps()) throw RangeError("discount_factor: need from <= to <= N");
  const std::size_t m = paths.num_paths();
  std::vector<double> out(m, 1.0);
  if (from == to) return out;
  const auto L = discount_exponent(market, paths);
  for (std::size_t p = 0; p < m; ++p) out[p] = std::exp(-(L[to * m + p] - L[from * m + p]));
  return out;
}

} // namespace bsde
