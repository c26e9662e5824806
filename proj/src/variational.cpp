#include "bsde/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"
#include "bsde/solvers.hpp"

namespace bsde {

namespace {

Estimate estimate_of(const std::vector<double>& q) {
  const std::size_t m = q.size();
  const double mean = parallel::sum(m, [&](std::size_t p) { return q[p]; }) / static_cast<double>(m);
  if (m < 2) return {mean, 0.0};
  const double var =
      parallel::sum(m, [&](std::size_t p) { return (q[p] - mean) * (q[p] - mean); }) / static_cast<double>(m - 1);
  return {mean, std::sqrt(var / static_cast<double>(m))};
}

/// |(z - v) dW|^2 for one path and step; z, v are d x k row-major.
double noise_square(std::span<const double> z, std::span<const double> v, std::span<const double> dw, std::size_t d) {
  const std::size_t k = dw.size();
  double s = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    double x = 0.0;
    for (std::size_t c = 0; c < k; ++c) x += (z[a * k + c] - v[a * k + c]) * dw[c];
    s += x * x;
  }
  return s;
}

double dot_diff(std::span<const double> a, std::span<const double> b, std::span<const double> f,
                std::span<const double> g) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (f[j] - g[j]);
  return s;
}

/// Per-path values of the functional given both C,D images.
std::vector<double> e_pair_samples(const SolutionPair& comp_sol, const ControlPair& pair, const SolutionPair& pair_sol,
                                   const TerminalVariable& xi, const Generator& gen) {
  const PathsPtr& paths = pair.paths();
  const std::size_t m = paths->num_paths();
  const std::size_t n = paths->num_steps();
  const std::size_t d = pair.dim();
  const auto g = apply_generator(gen, comp_sol.Y, comp_sol.Z);
  std::vector<double> q(m);
  parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      double s = 0.0;
      const auto eta = pair.eta.at(p);
      const auto x = xi.at(p);
      for (std::size_t a = 0; a < d; ++a) s += (eta[a] - x[a]) * (eta[a] - x[a]);
      for (std::size_t i = 0; i < n; ++i) {
        s += 2.0 * dot_diff(pair_sol.Y.at(i, p), comp_sol.Y.at(i, p), pair.f.at(i, p), g.at(i, p)) *
             paths->grid().dt(i);
        s -= noise_square(pair_sol.Z.at(i, p), comp_sol.Z.at(i, p), paths->dw(i, p), d);
      }
      q[p] = s;
    }
  });
  return q;
}

bool same_pair(const ControlPair& a, const ControlPair& b) {
  if (a.paths() != b.paths() || a.dim() != b.dim()) return false;
  return std::ranges::equal(a.eta.values(), b.eta.values()) && std::ranges::equal(a.f.values(), b.f.values());
}

ControlPair scaled(const ControlPair& p, double s) { return ControlPair::combine(s, p, 0.0, p); }

SupEstimate sup_with_image(const ControlPair& pair, const SolutionPair& pair_sol, const TerminalVariable& xi,
                           const Generator& gen, const CandidateFamily& family, const RegressionPlan& plan) {
  if (family.members.empty()) throw InvalidFamily("eval_E_sup: empty candidate family");
  if (!std::ranges::any_of(family.members, [&](const ControlPair& c) { return same_pair(c, pair); }))
    throw InvalidFamily("eval_E_sup: family must contain the evaluated pair");
  SupEstimate out;
  out.per_candidate.reserve(family.members.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < family.members.size(); ++j) {
    const ControlPair& c = family.members[j];
    require_same_paths(c.paths(), pair.paths(), "eval_E_sup");
    Estimate est;
    if (same_pair(c, pair)) {
      est = estimate_of(e_pair_samples(pair_sol, pair, pair_sol, xi, gen));
    } else {
      est = estimate_of(e_pair_samples(solve_test_bsde(c, plan), pair, pair_sol, xi, gen));
    }
    out.per_candidate.push_back(est);
    if (est.value > best) {
      best = est.value;
      out.argmax = j;
    }
  }
  out.value = best;
  out.se = out.per_candidate[out.argmax].se;
  return out;
}

/// f - F(y, z)
AdaptedProcess driver_gap(const ControlPair& pair, const SolutionPair& sol, const Generator& gen) {
  return pair.f.combine(1.0, apply_generator(gen, sol.Y, sol.Z), -1.0);
}

CandidateFamily build_with_image(const ControlPair& pair, const SolutionPair* pair_sol, const Generator& gen,
                                 double radius, std::size_t count, std::uint64_t seed,
                                 const std::optional<ControlPair>& anchor) {
  if (!(radius > 0.0)) throw InvalidArgument("build_candidates: radius must be positive");
  CandidateFamily fam;
  fam.radius = radius;
  fam.seed = seed;
  fam.members.push_back(pair);
  if (anchor) fam.members.push_back(*anchor);
  fam.num_anchors = fam.members.size();

  std::size_t used = 0;
  if (count > 0) {
    const AdaptedProcess gap = driver_gap(pair, *pair_sol, gen);
    const bool nonzero = std::ranges::any_of(gap.values(), [](double x) { return x != 0.0; });
    for (double lambda : {1.0, -1.0, 0.25, -0.25}) {
      if (!nonzero || used == count) break;
      ControlPair c(pair.eta, pair.f.combine(1.0, gap, -lambda));
      if (in_ball(c, radius)) {
        fam.members.push_back(std::move(c));
        ++used;
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double base = std::max(b_norm(pair), 1.0);
  const std::size_t d = pair.dim();
  for (std::size_t j = 0; used < count; ++j, ++used) {
    const std::uint64_t sub = rng();
    const double u = unit(rng);
    ControlPair c = ControlPair::zeros(pair.paths(), d);
    if (j % 2 == 0) {
      // local: pair plus a perturbation of log-uniform size
      const double rho = base * std::exp(std::log(1e-3) * (1.0 - u));
      c = ControlPair::combine(1.0, pair, 1.0, random_pair(pair.paths(), d, rho, sub));
    } else {
      c = random_pair(pair.paths(), d, std::max(u, 1e-6) * radius, sub);
    }
    const double nc = b_norm(c);
    if (nc > radius) c = scaled(c, radius / nc * (1.0 - 1e-12));
    fam.members.push_back(std::move(c));
  }
  return fam;
}

double sup_mean_square_diff(const AdaptedProcess& a, const AdaptedProcess& b) {
  double worst = 0.0;
  const std::size_t m = a.num_paths();
  for (std::size_t i = 0; i <= a.num_steps(); ++i) {
    const double s = parallel::sum(m, [&](std::size_t p) {
      const auto x = a.at(i, p);
      const auto y = b.at(i, p);
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += (x[j] - y[j]) * (x[j] - y[j]);
      return acc;
    });
    worst = std::max(worst, s / static_cast<double>(m));
  }
  return worst;
}

} // namespace

// ------------------------------------------------------------------ energy

EnergyIdentity energy_identity(const ControlPair& a, const ControlPair& b, const RegressionPlan& plan) {
  require_same_paths(a.paths(), b.paths(), "energy_identity");
  const auto sa = solve_test_bsde(a, plan);
  const auto sb = solve_test_bsde(b, plan);
  const PathsPtr& paths = a.paths();
  const std::size_t m = paths->num_paths();
  const std::size_t n = paths->num_steps();
  const std::size_t d = a.dim();
  const double inv_m = 1.0 / static_cast<double>(m);

  // Martingale increments dM_i = dy_{i+1} - E_i dy_{i+1} of the difference
  // and the step midpoints (dy_i + E_i dy_{i+1}) / 2.
  std::vector<double> dy_next(m * d), mid(n * m * d), mart(n * m * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t j = 0; j < d; ++j) dy_next[p * d + j] = sa.Y.at(i + 1, p)[j] - sb.Y.at(i + 1, p)[j];
    const auto proj = plan.cond_expect(i, dy_next, d);
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t at = (i * m + p) * d + j;
        mid[at] = 0.5 * (sa.Y.at(i, p)[j] - sb.Y.at(i, p)[j] + proj[p * d + j]);
        mart[at] = dy_next[p * d + j] - proj[p * d + j];
      }
  }

  auto y0_sq = [&](std::size_t p) {
    double s = 0.0;
    const auto y0 = sa.Y.at(0, p);
    const auto u0 = sb.Y.at(0, p);
    for (std::size_t j = 0; j < d; ++j) s += (y0[j] - u0[j]) * (y0[j] - u0[j]);
    return s;
  };
  const double lhs = parallel::sum(m, [&](std::size_t p) {
                       double s = y0_sq(p);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < d; ++j) s += mart[(i * m + p) * d + j] * mart[(i * m + p) * d + j];
                       return s;
                     }) *
                     inv_m;
  const double lhs_z = parallel::sum(m, [&](std::size_t p) {
                         double s = y0_sq(p);
                         for (std::size_t i = 0; i < n; ++i)
                           s += noise_square(sa.Z.at(i, p), sb.Z.at(i, p), paths->dw(i, p), d);
                         return s;
                       }) *
                       inv_m;
  const double rhs = parallel::sum(m, [&](std::size_t p) {
                       double s = 0.0;
                       const auto ea = a.eta.at(p);
                       const auto eb = b.eta.at(p);
                       for (std::size_t j = 0; j < d; ++j) s += (ea[j] - eb[j]) * (ea[j] - eb[j]);
                       for (std::size_t i = 0; i < n; ++i) {
                         const auto fa = a.f.at(i, p);
                         const auto fb = b.f.at(i, p);
                         double dot = 0.0;
                         for (std::size_t j = 0; j < d; ++j) dot += mid[(i * m + p) * d + j] * (fa[j] - fb[j]);
                         s += 2.0 * dot * paths->grid().dt(i);
                       }
                       return s;
                     }) *
                     inv_m;
  auto rel = [](double x, double y) {
    const double scale = std::max(std::abs(x), std::abs(y));
    return scale > 0.0 ? std::abs(x - y) / scale : 0.0;
  };
  return {lhs, rhs, rel(lhs, rhs), lhs_z, rel(lhs_z, rhs)};
}

// ------------------------------------------------------------- functional

Estimate eval_E_pair(const ControlPair& comp, const ControlPair& pair, const TerminalVariable& xi,
                     const Generator& gen, const RegressionPlan& plan) {
  require_same_paths(comp.paths(), pair.paths(), "eval_E_pair");
  require_same_paths(xi.paths(), pair.paths(), "eval_E_pair");
  const auto pair_sol = solve_test_bsde(pair, plan);
  if (same_pair(comp, pair)) return estimate_of(e_pair_samples(pair_sol, pair, pair_sol, xi, gen));
  return estimate_of(e_pair_samples(solve_test_bsde(comp, plan), pair, pair_sol, xi, gen));
}

SupEstimate eval_E_sup(const ControlPair& pair, const TerminalVariable& xi, const Generator& gen,
                       const CandidateFamily& family, const RegressionPlan& plan) {
  if (family.members.empty()) throw InvalidFamily("eval_E_sup: empty candidate family");
  return sup_with_image(pair, solve_test_bsde(pair, plan), xi, gen, family, plan);
}

ControlPair random_pair(const PathsPtr& paths, std::size_t d, double norm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t k = paths->dim();
  std::vector<double> ce(4 * d), cf(5 * d);
  for (double& c : ce) c = gauss(rng);
  for (double& c : cf) c = gauss(rng);

  auto eta = TerminalVariable::from_paths(paths, d, [&](const PathView& v, std::span<double> out) {
    const auto w = v.terminal();
    for (std::size_t a = 0; a < d; ++a) {
      const double x = w[a % k];
      out[a] = ce[4 * a] + ce[4 * a + 1] * x + ce[4 * a + 2] * x * x + ce[4 * a + 3] * std::sin(x);
    }
  });
  auto f = AdaptedProcess::from_brownian(paths, d, Shape::y_type,
                                         [&](double t, std::span<const double> w, std::span<double> out) {
                                           for (std::size_t a = 0; a < d; ++a) {
                                             const double x = w[a % k];
                                             out[a] = cf[5 * a] + cf[5 * a + 1] * x + cf[5 * a + 2] * t +
                                                      cf[5 * a + 3] * std::sin(x) + cf[5 * a + 4] * (x * x - t);
                                           }
                                         });
  ControlPair raw(std::move(eta), std::move(f));
  const double nr = b_norm(raw);
  if (!(nr > 0.0)) return ControlPair::zeros(paths, d);
  return scaled(raw, norm / nr);
}

CandidateFamily build_candidates(const ControlPair& pair, const TerminalVariable& xi, const Generator& gen,
                                 double radius, std::size_t count, std::uint64_t seed, const RegressionPlan& plan,
                                 const std::optional<ControlPair>& anchor) {
  require_same_paths(xi.paths(), pair.paths(), "build_candidates");
  if (!(radius > 0.0)) throw InvalidArgument("build_candidates: radius must be positive");
  if (count == 0) return build_with_image(pair, nullptr, gen, radius, 0, seed, anchor);
  const auto sol = solve_test_bsde(pair, plan);
  return build_with_image(pair, &sol, gen, radius, count, seed, anchor);
}

double default_radius(const Generator& gen, const TerminalVariable& xi) {
  const double c1 = apriori_constant(gen, xi.paths()->grid().horizon());
  return std::max(2.0 * c1 * apriori_data_norm(gen, xi), 1.0);
}

double optimality_residual(const ControlPair& pair, const AdaptedProcess& u, const Generator& gen,
                           const RegressionPlan& plan) {
  require_same_paths(u.paths(), pair.paths(), "optimality_residual");
  if (u.dim() != pair.dim() || u.shape() != Shape::y_type)
    throw DimensionError("optimality_residual: direction must be a y-type process of the pair's dimension");
  const auto sol = solve_test_bsde(pair, plan);
  const auto gap = driver_gap(pair, sol, gen);
  const PathsPtr& paths = pair.paths();
  const std::size_t m = paths->num_paths();
  return parallel::sum(m, [&](std::size_t p) {
           double s = 0.0;
           for (std::size_t i = 0; i < paths->num_steps(); ++i) {
             const auto a = u.at(i, p);
             const auto b = gap.at(i, p);
             double dot = 0.0;
             for (std::size_t j = 0; j < a.size(); ++j) dot += a[j] * b[j];
             s += dot * paths->grid().dt(i);
           }
           return s;
         }) /
         static_cast<double>(m);
}

double driver_match_residual(const ControlPair& pair, const Generator& gen, const RegressionPlan& plan) {
  const auto sol = solve_test_bsde(pair, plan);
  return time_integral_sq(driver_gap(pair, sol, gen));
}

// --------------------------------------------------------------- minimizer

void MinimizerConfig::validate() const {
  if (max_outer == 0) throw InvalidArgument("minimizer: max_outer must be positive");
  if (patience == 0) throw InvalidArgument("minimizer: patience must be positive");
  if (!(initial_step > 0.0) || !(fd_h > 0.0)) throw InvalidArgument("minimizer: step sizes must be positive");
  if (!(threshold_floor >= 0.0) || !(driver_tol >= 0.0) || !(increment_tol >= 0.0))
    throw InvalidArgument("minimizer: thresholds must be non-negative");
  if (radius && !(*radius > 0.0)) throw InvalidArgument("minimizer: radius must be positive");
}

namespace {

struct Iterate {
  ControlPair pair;
  SolutionPair sol;
  SupEstimate sup;
};

} // namespace

MinimizerResult minimize_E(const TerminalVariable& xi, const Generator& gen, const AdaptedProcess& init_f,
                           const MinimizerConfig& cfg, const RegressionPlan& plan) {
  cfg.validate();
  require_same_paths(xi.paths(), init_f.paths(), "minimize_E");
  const double radius = cfg.radius ? *cfg.radius : default_radius(gen, xi);

  auto evaluate = [&](AdaptedProcess f) {
    ControlPair pair(xi, std::move(f));
    SolutionPair sol = solve_test_bsde(pair, plan);
    const auto fam = build_with_image(pair, &sol, gen, radius, cfg.family_count, cfg.family_seed, std::nullopt);
    SupEstimate sup = sup_with_image(pair, sol, xi, gen, fam, plan);
    return Iterate{std::move(pair), std::move(sol), std::move(sup)};
  };

  MinimizerTrace trace;
  // eta = xi, so the |eta - xi|^2 term and its standard error vanish.
  trace.threshold = cfg.threshold_floor;
  Iterate cur = evaluate(init_f);
  trace.e_hat.push_back(cur.sup.value);
  trace.e_hat_se.push_back(cur.sup.se);
  double increment = std::numeric_limits<double>::infinity();
  std::size_t failures = 0;
  std::uint64_t dir_seed = cfg.family_seed ^ 0x5DEECE66DULL;

  for (std::size_t outer = 0;; ++outer) {
    trace.outer = outer;
    const AdaptedProcess gap = driver_gap(cur.pair, cur.sol, gen);
    const double dres = time_integral_sq(gap);
    trace.driver_residuals.push_back(dres);
    if (cur.sup.value <= trace.threshold && (dres <= cfg.driver_tol || increment < cfg.increment_tol)) {
      trace.reached = true;
      break;
    }
    if (outer == cfg.max_outer) break;

    // substitution f <- F(y, z) = f - gap, then backtracking along it
    const double e_old = cur.sup.value;
    std::optional<Iterate> next;
    std::string kind;
    double s = 1.0;
    for (std::size_t b = 0; b <= cfg.max_backtrack; ++b, s *= 0.5) {
      Iterate trial = evaluate(cur.pair.f.combine(1.0, gap, -s));
      if (trial.sup.value <= e_old) {
        next = std::move(trial);
        kind = b == 0 ? "substitution" : "backtrack";
        break;
      }
    }

    if (!next) {
      // finite-difference directional descent
      std::vector<AdaptedProcess> dirs;
      dirs.push_back(gap.scaled(-1.0));
      dirs.push_back(gap);
      const double gap_norm = std::sqrt(std::max(dres, 1e-300));
      for (std::size_t j = 0; j < cfg.fd_directions; ++j)
        dirs.push_back(random_pair(xi.paths(), xi.dim(), std::max(gap_norm, 1e-6), dir_seed++).f);
      double best_slope = 0.0;
      const AdaptedProcess* best_dir = nullptr;
      for (const auto& dir : dirs) {
        const double slope = (evaluate(cur.pair.f.combine(1.0, dir, cfg.fd_h)).sup.value - e_old) / cfg.fd_h;
        if (slope < best_slope) {
          best_slope = slope;
          best_dir = &dir;
        }
      }
      if (best_dir) {
        double step = cfg.initial_step;
        for (std::size_t b = 0; b <= cfg.max_backtrack; ++b, step *= 0.5) {
          Iterate trial = evaluate(cur.pair.f.combine(1.0, *best_dir, step));
          if (trial.sup.value < e_old) {
            next = std::move(trial);
            kind = "descent";
            break;
          }
        }
      }
    }

    if (!next) {
      if (++failures >= cfg.patience) {
        if (cur.sup.value > trace.threshold)
          throw StallError("minimize_E: no decrease of E-hat within patience", trace.e_hat);
        trace.reached = true;
        break;
      }
      continue;
    }
    failures = 0;
    increment = sup_mean_square_diff(next->sol.Y, cur.sol.Y);
    cur = std::move(*next);
    trace.e_hat.push_back(cur.sup.value);
    trace.e_hat_se.push_back(cur.sup.se);
    trace.steps.push_back(kind);
  }
  return MinimizerResult{std::move(cur.pair), std::move(cur.sol), std::move(trace)};
}

} // namespace bsde
