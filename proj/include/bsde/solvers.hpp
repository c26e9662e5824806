#pragma once

// Solution maps of the linear test equation
//   y_t = eta + int_t^T f ds - int_t^T z dW
// and the solvers built on them: Picard iteration for a generator F, the
// closed-form linear pricer, hedge extraction, the exponential change of
// variables and the Yosida regularization of a monotone generator.

#include <cstddef>
#include <optional>
#include <vector>

#include "bsde/core.hpp"
#include "bsde/regression.hpp"
#include "bsde/sde.hpp"

namespace bsde {

/// Backward recursion y_N = eta, z_i from the martingale representation of
/// y_{i+1}, y_i = E[y_{i+1} + f_i dt_i | X_i]. Returns (C(eta,f), D(eta,f)).
SolutionPair solve_test_bsde(const ControlPair& pair, const RegressionPlan& plan);

/// max_i mean_m |C(a p1 + b p2) - a C(p1) - b C(p2)|^2, square-rooted.
double linearity_check(const ControlPair& p1, const ControlPair& p2, double a, double b,
                       const RegressionPlan& plan);

struct PicardOptions {
  double tol = 1e-6;          ///< on max_i mean_m |Y^{n+1}_i - Y^n_i|^2
  std::size_t max_iter = 50;
  bool auto_transform = true; ///< apply exp_transform when mono_M + L^2/2 > 0
  std::optional<SolutionPair> initial; ///< defaults to Y = 0, Z = 0
};

struct PicardReport {
  std::size_t iterations = 0;
  std::vector<double> residuals;  ///< one entry per Picard map applied
  bool converged = false;
  double transform_alpha = 0.0;   ///< 0 when no transform was applied
  double bound_lhs = 0.0;         ///< E sup|Y|^2 + E int |Z|^2
  double bound_rhs = 0.0;         ///< C1 E(|xi|^2 + int |F(s,0,0)|^2)
  double c1 = 0.0;
  bool bound_holds = false;
};

/// Picard iteration (Y^{n+1}, Z^{n+1}) = (C, D)(xi, F(., Y^n, Z^n)).
/// Throws NonConvergence (carrying the residual trace) past max_iter.
std::pair<SolutionPair, PicardReport> solve_picard(const Generator& gen, const TerminalVariable& xi,
                                                   const RegressionPlan& plan,
                                                   const PicardOptions& opts = {});

/// Concrete a-priori constant 8 exp((1 + 2 max(M,0) + 2 L^2) T).
double apriori_constant(const Generator& gen, double horizon);

/// E(|xi|^2 + int |F(s,0,0)|^2 ds), the right-hand factor of the a-priori bound.
double apriori_data_norm(const Generator& gen, const TerminalVariable& xi);

/// Y_i = E[discount(t_i, T) xi | X_i]; Z from the martingale representation
/// of the discounted value process.
SolutionPair solve_linear_closed_form(const MarketModel& market, const TerminalVariable& xi,
                                      const RegressionPlan& plan);

/// pi_t = (sigma^*)^{-1} Z_t^*: per path a d x n matrix of holdings (row a is
/// the portfolio replicating claim component a).
AdaptedProcess hedge_portfolio(const MarketModel& market, const SolutionPair& solution);

/// Same hedge through the discounted-value representation
/// pi = (sigma^*)^{-1}(discount_0t^{-1} U + V theta) with U the martingale
/// integrand of discount_0t V_t.
AdaptedProcess hedge_portfolio_discounted(const MarketModel& market, const AdaptedProcess& value,
                                          const RegressionPlan& plan);

/// xi~ = e^{-alpha T} xi, F~(t,y,z) = alpha y + e^{-alpha t} F(t, e^{alpha t} y, e^{alpha t} z).
std::pair<Generator, TerminalVariable> exp_transform(const Generator& gen, const TerminalVariable& xi,
                                                     double alpha);

/// Maps a solution of the transformed equation back: Y = e^{alpha t} Y~, Z = e^{alpha t} Z~.
SolutionPair undo_exp_transform(const SolutionPair& transformed, double alpha);

// ------------------------------------------------------------------ Yosida

struct YosidaParams {
  double epsilon = 1e-2;
  double inner_tol = 1e-10;
  std::size_t max_inner = 200;

  /// Throws InvalidArgument unless epsilon in (0, min(1, 1/(2 gamma))).
  void validate(const Generator& gen) const;
};

/// J solving J - eps F(t, J, z) = y.
std::vector<double> yosida_resolvent(const Generator& gen, const EvalPoint& pt, std::span<const double> y,
                                     std::span<const double> z, const YosidaParams& params);

/// F_eps(t,y,z) = (y - J)/eps, cross-checked against -F(t, J, z).
std::vector<double> yosida_generator(const Generator& gen, const EvalPoint& pt, std::span<const double> y,
                                     std::span<const double> z, const YosidaParams& params);

/// The Lipschitz generator G = -F_eps as a Generator object.
Generator regularized_generator(const Generator& gen, const YosidaParams& params);

struct YosidaResult {
  ControlPair pair;       ///< (xi, -F_eps(., y^eps, z^eps))
  SolutionPair solution;  ///< (y^eps, z^eps)
  PicardReport picard;
  double theta_hat = 0.0; ///< sup of the functional over the default candidate family
  double theta_hat_se = 0.0;
};

struct YosidaOptions {
  PicardOptions picard;
  std::size_t family_count = 16;
  std::uint64_t family_seed = 11;
  std::optional<double> radius; ///< defaults to the a-priori radius
};

YosidaResult yosida_sequence(const Generator& gen, const TerminalVariable& xi, const RegressionPlan& plan,
                             const YosidaParams& params, const YosidaOptions& opts = {});

} // namespace bsde
