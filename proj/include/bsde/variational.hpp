#pragma once

// The convex functional on pairs (eta, f):
//   E_comp(eta, f) = E|eta - xi|^2 + 2 E int <y - u, f - F(u, v)> dt - E int |z - v|^2 dt
// with (y, z) = C,D(eta, f) and (u, v) = C,D(comp), its supremum over a finite
// family of competitors, and a minimizer over drivers f with eta = xi.
//
// Discretization: int <a, b> dt is a left-endpoint sum, and int |z - v|^2 dt
// is sum_i |(z_i - v_i) dW_i|^2, whose mean matches sum_i |z_i - v_i|^2 dt_i
// in expectation and makes the discrete functional exactly convex in (eta, f).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bsde/core.hpp"
#include "bsde/regression.hpp"

namespace bsde {

/// E|y0 - u0|^2 + E int |z - v|^2 = E|eta - alpha|^2 + 2 E int <y - u, f - g>
/// for (y, z) = C,D(a), (u, v) = C,D(b). In the discrete scheme int |z - v|^2
/// is the sum of squared martingale increments dM_i = dy_{i+1} - E_i dy_{i+1}
/// and the inner-product integral takes dy at step midpoints
/// (dy_i + E_i dy_{i+1}) / 2; with these the identity telescopes exactly.
struct EnergyIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0; ///< |lhs - rhs| / max(|lhs|, |rhs|), 0 when both vanish
  /// lhs with int |z - v|^2 taken from the regressed z as sum |(z - v) dW|^2.
  /// Differs from lhs by the part of dM outside span{phi(X_i) dW_i}, O(dt).
  double lhs_z = 0.0;
  double residual_z = 0.0;
};

EnergyIdentity energy_identity(const ControlPair& a, const ControlPair& b, const RegressionPlan& plan);

/// Sample mean of a per-path quantity and its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// E_comp(pair) with its per-path standard error.
Estimate eval_E_pair(const ControlPair& comp, const ControlPair& pair, const TerminalVariable& xi,
                     const Generator& gen, const RegressionPlan& plan);

struct CandidateFamily {
  std::vector<ControlPair> members; ///< members[0] is the evaluated pair
  double radius = 0.0;
  std::uint64_t seed = 0;
  std::size_t num_anchors = 1;      ///< leading members exempt from the ball constraint
};

struct SupEstimate {
  double value = 0.0;
  double se = 0.0;           ///< standard error of the maximizing candidate
  std::size_t argmax = 0;
  std::vector<Estimate> per_candidate;
};

/// max over the family of eval_E_pair. Throws InvalidFamily when the family
/// is empty or does not contain pair.
SupEstimate eval_E_sup(const ControlPair& pair, const TerminalVariable& xi, const Generator& gen,
                       const CandidateFamily& family, const RegressionPlan& plan);

/// {pair} plus an optional anchor, up to four perturbations
/// (eta, f - lambda (f - F(y, z))) inside the ball, then random adapted pairs
/// of B-norm <= radius, `count` non-pair members in total besides the anchor.
CandidateFamily build_candidates(const ControlPair& pair, const TerminalVariable& xi, const Generator& gen,
                                 double radius, std::size_t count, std::uint64_t seed,
                                 const RegressionPlan& plan, const std::optional<ControlPair>& anchor = std::nullopt);

/// A random adapted pair on the ensemble with B-norm exactly `norm`.
ControlPair random_pair(const PathsPtr& paths, std::size_t d, double norm, std::uint64_t seed);

/// max(2 C1 E(|xi|^2 + int |F(s,0,0)|^2), 1).
double default_radius(const Generator& gen, const TerminalVariable& xi);

/// E int <u, f - F(y, z)> dt with (y, z) = C,D(pair).
double optimality_residual(const ControlPair& pair, const AdaptedProcess& u, const Generator& gen,
                           const RegressionPlan& plan);

/// E int |f - F(y, z)|^2 dt with (y, z) = C,D(pair).
double driver_match_residual(const ControlPair& pair, const Generator& gen, const RegressionPlan& plan);

struct MinimizerConfig {
  std::size_t max_outer = 25;
  std::size_t patience = 5;        ///< consecutive failed outer steps before StallError
  double initial_step = 1.0;       ///< first backtracking step
  std::size_t max_backtrack = 6;   ///< halvings per line search
  double fd_h = 1e-3;              ///< finite-difference step on the driver
  std::size_t fd_directions = 4;   ///< random directions added to the fallback search
  double threshold_floor = 1e-3;   ///< E-hat threshold is max(3 SE, this)
  double driver_tol = 1e-12;       ///< on E int |f - F(y, z)|^2
  double increment_tol = 1e-12;    ///< on max_i mean |y_new - y_old|^2
  std::size_t family_count = 16;
  std::uint64_t family_seed = 11;
  std::optional<double> radius;    ///< defaults to default_radius

  void validate() const;
};

struct MinimizerTrace {
  std::vector<double> e_hat;       ///< E-hat of each accepted iterate, starting with the initial one
  std::vector<double> e_hat_se;
  std::vector<std::string> steps;  ///< "substitution", "backtrack", "descent" per accepted step
  std::vector<double> driver_residuals;
  std::size_t outer = 0;
  double threshold = 0.0;
  bool reached = false;
};

struct MinimizerResult {
  ControlPair pair;
  SolutionPair solution;
  MinimizerTrace trace;
};

/// Descent on E-hat over drivers with eta fixed at xi. Throws StallError if
/// patience runs out above the threshold.
MinimizerResult minimize_E(const TerminalVariable& xi, const Generator& gen, const AdaptedProcess& init_f,
                           const MinimizerConfig& cfg, const RegressionPlan& plan);

} // namespace bsde
