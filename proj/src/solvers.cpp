#include "bsde/solvers.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

SolutionPair solve_test_bsde(const ControlPair& pair, const RegressionPlan& plan) {
  require_same_paths(pair.paths(), plan.paths(), "solve_test_bsde");
  const PathsPtr& paths = plan.paths();
  const std::size_t d = pair.dim();
  const std::size_t m = paths->num_paths();
  const std::size_t k = paths->dim();
  const std::size_t n = paths->num_steps();
  const std::size_t slab = m * d;

  std::vector<double> y((n + 1) * slab, 0.0);
  std::vector<double> z((n + 1) * slab * k, 0.0);
  std::copy(pair.eta.values().begin(), pair.eta.values().end(), y.begin() + n * slab);

  for (std::size_t i = n; i-- > 0;) {
    const std::span<const double> y_next(y.data() + (i + 1) * slab, slab);
    const auto r = plan.backward_step(i, y_next, pair.f.step_values(i), d);
    std::copy(r.z.begin(), r.z.end(), z.begin() + i * slab * k);
    std::copy(r.y.begin(), r.y.end(), y.begin() + i * slab);
  }
  return SolutionPair(AdaptedProcess(paths, d, Shape::y_type, std::move(y)),
                      AdaptedProcess(paths, d, Shape::z_type, std::move(z)));
}

namespace {

/// max over grid times of mean over paths of |a - b|^2
double sup_mean_square_diff(const AdaptedProcess& a, const AdaptedProcess& b) {
  const std::size_t m = a.num_paths();
  double worst = 0.0;
  for (std::size_t i = 0; i <= a.num_steps(); ++i) {
    const double ms = parallel::sum(m, [&](std::size_t p) {
                        const auto x = a.at(i, p);
                        const auto y = b.at(i, p);
                        double s = 0.0;
                        for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
                        return s;
                      }) /
                      static_cast<double>(m);
    worst = std::max(worst, ms);
  }
  return worst;
}

} // namespace

double linearity_check(const ControlPair& p1, const ControlPair& p2, double a, double b,
                       const RegressionPlan& plan) {
  const auto combined = solve_test_bsde(ControlPair::combine(a, p1, b, p2), plan);
  const auto s1 = solve_test_bsde(p1, plan);
  const auto s2 = solve_test_bsde(p2, plan);
  const auto expected = s1.Y.combine(a, s2.Y, b);
  return std::sqrt(sup_mean_square_diff(combined.Y, expected));
}

// ------------------------------------------------------------------ Picard

double apriori_constant(const Generator& gen, double horizon) {
  const double L = gen.lip_L();
  return 8.0 * std::exp((1.0 + 2.0 * std::max(gen.mono_M(), 0.0) + 2.0 * L * L) * horizon);
}

double apriori_data_norm(const Generator& gen, const TerminalVariable& xi) {
  const PathsPtr& paths = xi.paths();
  const auto zero_y = AdaptedProcess::zeros(paths, gen.dim(), Shape::y_type);
  const auto zero_z = AdaptedProcess::zeros(paths, gen.dim(), Shape::z_type);
  return xi.second_moment() + time_integral_sq(apply_generator(gen, zero_y, zero_z));
}

namespace {

std::pair<SolutionPair, PicardReport> picard_direct(const Generator& gen, const TerminalVariable& xi,
                                                    const RegressionPlan& plan, const PicardOptions& opts) {
  const PathsPtr& paths = plan.paths();
  const std::size_t d = gen.dim();
  SolutionPair current = opts.initial ? *opts.initial
                                      : SolutionPair(AdaptedProcess::zeros(paths, d, Shape::y_type),
                                                     AdaptedProcess::zeros(paths, d, Shape::z_type));
  PicardReport report;
  AdaptedProcess f = apply_generator(gen, current.Y, current.Z);
  for (std::size_t n = 1; n <= opts.max_iter; ++n) {
    SolutionPair next = solve_test_bsde(ControlPair(xi, f), plan);
    const double inc = sup_mean_square_diff(next.Y, current.Y);
    report.residuals.push_back(inc);
    report.iterations = n;
    current = std::move(next);
    AdaptedProcess f_next = apply_generator(gen, current.Y, current.Z);
    // An unchanged driver means the next map would reproduce the current
    // iterate exactly.
    const bool fixed = std::equal(f_next.values().begin(), f_next.values().end(), f.values().begin());
    f = std::move(f_next);
    if (inc < opts.tol || fixed) {
      report.converged = true;
      return {std::move(current), std::move(report)};
    }
  }
  throw NonConvergence("Picard iteration did not reach tolerance within max_iter", report.residuals);
}

void fill_bound(PicardReport& report, const Generator& gen, const TerminalVariable& xi, const SolutionPair& sol) {
  const std::size_t m = sol.Y.num_paths();
  const double sup_y = parallel::sum(m, [&](std::size_t p) {
                         double worst = 0.0;
                         for (std::size_t i = 0; i <= sol.Y.num_steps(); ++i) {
                           double s = 0.0;
                           for (double x : sol.Y.at(i, p)) s += x * x;
                           worst = std::max(worst, s);
                         }
                         return worst;
                       }) /
                       static_cast<double>(m);
  report.c1 = apriori_constant(gen, sol.Y.grid().horizon());
  report.bound_lhs = sup_y + time_integral_sq(sol.Z);
  report.bound_rhs = report.c1 * apriori_data_norm(gen, xi);
  report.bound_holds = report.bound_lhs <= report.bound_rhs * (1.0 + 1e-12);
}

} // namespace

std::pair<SolutionPair, PicardReport> solve_picard(const Generator& gen, const TerminalVariable& xi,
                                                   const RegressionPlan& plan, const PicardOptions& opts) {
  require_same_paths(xi.paths(), plan.paths(), "solve_picard");
  if (xi.dim() != gen.dim()) throw DimensionError("solve_picard: terminal and generator dimensions differ");
  if (plan.paths()->dim() != gen.noise_dim())
    throw DimensionError("solve_picard: generator noise dimension != ensemble dimension");

  const double L = gen.lip_L();
  const double excess = gen.mono_M() + 0.5 * L * L;
  if (opts.auto_transform && excess > 0.0) {
    const double alpha = -excess;
    auto [tgen, txi] = exp_transform(gen, xi, alpha);
    PicardOptions inner = opts;
    inner.auto_transform = false;
    if (opts.initial) {
      // initial guess mapped into the transformed variables
      inner.initial = undo_exp_transform(*opts.initial, -alpha);
    }
    auto [tsol, report] = picard_direct(tgen, txi, plan, inner);
    SolutionPair sol = undo_exp_transform(tsol, alpha);
    report.transform_alpha = alpha;
    fill_bound(report, gen, xi, sol);
    return {std::move(sol), std::move(report)};
  }
  auto [sol, report] = picard_direct(gen, xi, plan, opts);
  fill_bound(report, gen, xi, sol);
  return {std::move(sol), std::move(report)};
}

// ------------------------------------------------------ closed-form pricer

SolutionPair solve_linear_closed_form(const MarketModel& market, const TerminalVariable& xi,
                                      const RegressionPlan& plan) {
  require_same_paths(xi.paths(), plan.paths(), "solve_linear_closed_form");
  if (!market.complete()) throw SingularVolatility("closed-form pricing needs a complete market (n = k)");
  market.sigma_transpose_inverse(); // throws on singular sigma
  const PathsPtr& paths = plan.paths();
  const std::size_t d = xi.dim();
  const std::size_t m = paths->num_paths();
  const std::size_t k = paths->dim();
  const std::size_t n = paths->num_steps();
  const std::size_t slab = m * d;
  const auto L = discount_exponent(market, *paths);
  const auto& theta = market.theta();

  std::vector<double> y((n + 1) * slab, 0.0);
  std::copy(xi.values().begin(), xi.values().end(), y.begin() + n * slab);
  std::vector<double> target(slab);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < m; ++p) {
      const double disc = std::exp(-(L[n * m + p] - L[i * m + p]));
      for (std::size_t a = 0; a < d; ++a) target[p * d + a] = disc * xi.at(p)[a];
    }
    const auto yi = plan.cond_expect(i, target, d);
    std::copy(yi.begin(), yi.end(), y.begin() + i * slab);
  }

  // Z_i = e^{L_i} U_i + Y_i theta^*, U from the discounted value process.
  std::vector<double> z((n + 1) * slab * k, 0.0);
  std::vector<double> discounted(slab);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < m; ++p) {
      const double disc = std::exp(-L[(i + 1) * m + p]);
      for (std::size_t a = 0; a < d; ++a) discounted[p * d + a] = disc * y[(i + 1) * slab + p * d + a];
    }
    const auto u = plan.martingale_z(i, discounted, d);
    for (std::size_t p = 0; p < m; ++p) {
      const double undisc = std::exp(L[i * m + p]);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t c = 0; c < k; ++c)
          z[i * slab * k + (p * d + a) * k + c] =
              undisc * u[(p * d + a) * k + c] + y[i * slab + p * d + a] * theta[c];
    }
  }
  return SolutionPair(AdaptedProcess(paths, d, Shape::y_type, std::move(y)),
                      AdaptedProcess(paths, d, Shape::z_type, std::move(z)));
}

// -------------------------------------------------------------------- hedge

namespace {

AdaptedProcess holdings_from_z(const MarketModel& market, const AdaptedProcess& Z) {
  const auto inv = market.sigma_transpose_inverse(); // n x n row-major
  const std::size_t nassets = market.num_assets();
  const std::size_t d = Z.dim();
  const std::size_t k = Z.paths()->dim();
  if (k != nassets) throw DimensionError("hedge: noise dimension != number of assets");
  return AdaptedProcess::from_map(Z, d * nassets, Shape::y_type,
                                  [&](std::size_t, std::size_t, std::span<const double> z, std::span<double> out) {
                                    for (std::size_t a = 0; a < d; ++a)
                                      for (std::size_t i = 0; i < nassets; ++i) {
                                        double v = 0.0;
                                        for (std::size_t c = 0; c < k; ++c) v += inv[i * k + c] * z[a * k + c];
                                        out[a * nassets + i] = v;
                                      }
                                  });
}

} // namespace

AdaptedProcess hedge_portfolio(const MarketModel& market, const SolutionPair& solution) {
  return holdings_from_z(market, solution.Z);
}

AdaptedProcess hedge_portfolio_discounted(const MarketModel& market, const AdaptedProcess& value,
                                          const RegressionPlan& plan) {
  require_same_paths(value.paths(), plan.paths(), "hedge_portfolio_discounted");
  const PathsPtr& paths = plan.paths();
  const std::size_t d = value.dim();
  const std::size_t m = paths->num_paths();
  const std::size_t k = paths->dim();
  const std::size_t n = paths->num_steps();
  const std::size_t slab = m * d;
  const auto L = discount_exponent(market, *paths);
  const auto& theta = market.theta();
  std::vector<double> z((n + 1) * slab * k, 0.0);
  std::vector<double> discounted(slab);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t a = 0; a < d; ++a)
        discounted[p * d + a] = std::exp(-L[(i + 1) * m + p]) * value.at(i + 1, p)[a];
    const auto u = plan.martingale_z(i, discounted, d);
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t c = 0; c < k; ++c)
          z[i * slab * k + (p * d + a) * k + c] =
              std::exp(L[i * m + p]) * u[(p * d + a) * k + c] + value.at(i, p)[a] * theta[c];
  }
  return holdings_from_z(market, AdaptedProcess(paths, d, Shape::z_type, std::move(z)));
}

// ---------------------------------------------------- exponential transform

std::pair<Generator, TerminalVariable> exp_transform(const Generator& gen, const TerminalVariable& xi,
                                                     double alpha) {
  const std::size_t d = gen.dim();
  const std::size_t k = gen.noise_dim();
  auto fn = [gen, alpha, d, k](const EvalPoint& pt, std::span<const double> y, std::span<const double> z,
                               std::span<double> out) {
    const double up = std::exp(alpha * pt.t);
    const double down = std::exp(-alpha * pt.t);
    double ys[16], zs[64];
    std::vector<double> yh, zh;
    double* yp = ys;
    double* zp = zs;
    if (d > 16 || d * k > 64) {
      yh.resize(d);
      zh.resize(d * k);
      yp = yh.data();
      zp = zh.data();
    }
    for (std::size_t a = 0; a < d; ++a) yp[a] = up * y[a];
    for (std::size_t j = 0; j < d * k; ++j) zp[j] = up * z[j];
    gen.eval(pt, std::span<const double>(yp, d), std::span<const double>(zp, d * k), out);
    for (std::size_t a = 0; a < d; ++a) out[a] = alpha * y[a] + down * out[a];
  };
  auto eta = [gen, alpha](const EvalPoint& pt) { return std::exp(-alpha * pt.t) * gen.growth_eta(pt); };
  std::optional<LinearStructure> lin;
  if (gen.linear_structure()) lin = LinearStructure{gen.linear_structure()->r - alpha, gen.linear_structure()->theta};
  Generator transformed(d, k, fn, gen.mono_M() + alpha, gen.lip_L(), gen.growth_gamma() + std::abs(alpha), eta,
                        lin);

  const double scale = std::exp(-alpha * xi.paths()->grid().horizon());
  std::vector<double> v(xi.values().begin(), xi.values().end());
  for (double& x : v) x *= scale;
  return {std::move(transformed), TerminalVariable(xi.paths(), xi.dim(), std::move(v))};
}

SolutionPair undo_exp_transform(const SolutionPair& transformed, double alpha) {
  auto rescale = [alpha](const AdaptedProcess& p) {
    const TimeGrid& grid = p.grid();
    return AdaptedProcess::from_map(p, p.dim(), p.shape(),
                                    [&](std::size_t i, std::size_t, std::span<const double> in, std::span<double> out) {
                                      const double s = std::exp(alpha * grid.time(i));
                                      for (std::size_t j = 0; j < in.size(); ++j) out[j] = s * in[j];
                                    });
  };
  return SolutionPair(rescale(transformed.Y), rescale(transformed.Z));
}

} // namespace bsde
