#pragma once

// Least-squares Monte Carlo estimators standing in for E[. | F_t] and for the
// martingale representation. Regressions use polynomials of a Markov state
// sampled at the conditioning time, so every output is adapted by
// construction.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsde/core.hpp"

namespace bsde {

struct BasisSpec {
  /// y-type process whose value at t_i is the regression state at t_i.
  std::shared_ptr<const AdaptedProcess> state;
  std::size_t degree = 3;
  /// Ridge penalty on the non-constant basis functions; defaults to 1e-8 * M.
  std::optional<double> ridge;

  static BasisSpec brownian(const PathsPtr& paths, std::size_t degree = 3);
  static BasisSpec on_process(AdaptedProcess state, std::size_t degree = 3);

  double ridge_for(std::size_t num_paths) const { return ridge ? *ridge : 1e-8 * static_cast<double>(num_paths); }
};

/// Number of monomials of total degree <= degree in dim variables.
std::size_t basis_size(std::size_t dim, std::size_t degree);

/// Projection onto polynomials of one time slice of the state. When noise is
/// given the basis is {phi_j(X) dW^c}, used for the martingale representation.
class StepRegressor {
public:
  StepRegressor(std::span<const double> state, std::size_t num_paths, std::size_t state_dim,
                std::size_t degree, double ridge, std::span<const double> noise = {},
                std::size_t noise_dim = 0);

  std::size_t num_paths() const noexcept { return num_paths_; }
  std::size_t num_state_features() const noexcept { return exponents_.size(); }
  std::size_t num_features() const noexcept { return exponents_.size() * std::max<std::size_t>(noise_dim_, 1); }

  /// Least-squares coefficients (features x width) for targets laid out
  /// [path][entry].
  Eigen::MatrixXd fit(std::span<const double> targets, std::size_t width) const;

  /// Fitted values sum_j phi_j(X_m) beta_j (no noise factor).
  std::vector<double> predict(const Eigen::MatrixXd& beta) const;

  /// For the noise basis: per path, the d x k matrix with entries
  /// sum_j phi_j(X_m) beta_{(j,c), a}.
  std::vector<double> predict_noise_loadings(const Eigen::MatrixXd& beta) const;

  /// Standardized monomials of the state on one path (length num_state_features()).
  void state_features(std::size_t path, std::span<double> out) const;
  /// (Phi^T Phi + ridge)^{-1} over the full feature set.
  const Eigen::MatrixXd& inverse_gram() const noexcept { return solve_; }

private:
  void features(std::size_t path, std::span<double> out) const;

  std::span<const double> state_;
  std::span<const double> noise_;
  std::size_t num_paths_;
  std::size_t state_dim_;
  std::size_t noise_dim_;
  std::vector<std::size_t> active_;       // state components with spread
  std::vector<double> mean_, scale_;      // standardization of active components
  std::vector<std::vector<unsigned>> exponents_;
  std::size_t max_degree_ = 0;
  Eigen::MatrixXd solve_;                 // (Phi^T Phi + ridge)^{-1}
};

/// Per-step regressors for a whole grid, fitted once and reused by every
/// backward sweep on the same ensemble and basis.
class RegressionPlan {
public:
  RegressionPlan(PathsPtr paths, BasisSpec basis);

  const PathsPtr& paths() const noexcept { return paths_; }
  const BasisSpec& basis() const noexcept { return basis_; }

  /// Estimate of E[target | X_step] on every path.
  std::vector<double> cond_expect(std::size_t step, std::span<const double> target, std::size_t width) const;

  /// Estimate of E[y_next dW_step^* | X_step] / dt_step, a d x k matrix per path.
  std::vector<double> martingale_z(std::size_t step, std::span<const double> y_next, std::size_t d) const;

  struct StepResult {
    std::vector<double> y; ///< cond_expect(y_next + f dt)
    std::vector<double> z; ///< martingale_z(y_next)
  };
  /// One step of the backward scheme with a single pass over the paths for
  /// the moments and one for the predictions. f may be empty (no driver).
  StepResult backward_step(std::size_t step, std::span<const double> y_next, std::span<const double> f,
                           std::size_t d) const;

private:
  PathsPtr paths_;
  BasisSpec basis_;
  std::vector<StepRegressor> value_;
  std::vector<StepRegressor> noise_;
  std::vector<Eigen::MatrixXd> cross_; // sum_m (phi dW)(m) phi(m)^T per step
  std::vector<std::vector<double>> phi_; // state features per step, [path][feature]
};

/// One-shot conditional expectation at a grid step.
std::vector<double> cond_expect(std::span<const double> target, std::size_t width,
                                const BasisSpec& basis, std::size_t step);

/// One-shot martingale representation estimate at a grid step.
std::vector<double> martingale_z(std::span<const double> y_next, std::size_t d,
                                 std::span<const double> dw, std::size_t k, double dt,
                                 const BasisSpec& basis, std::size_t step);

} // namespace bsde
