#include <algorithm>
#include <cmath>
#include <string>

#include "bsde/error.hpp"
#include "bsde/solvers.hpp"
#include "bsde/variational.hpp"

namespace bsde {

void YosidaParams::validate(const Generator& gen) const {
  const double upper = std::min(1.0, 1.0 / (2.0 * gen.growth_gamma()));
  if (!(epsilon > 0.0 && epsilon < upper))
    throw InvalidArgument("yosida: epsilon must lie in (0, min(1, 1/(2 gamma))) = (0, " + std::to_string(upper) +
                          ")");
  if (!(inner_tol > 0.0)) throw InvalidArgument("yosida: inner tolerance must be positive");
  if (max_inner == 0) throw InvalidArgument("yosida: max_inner must be positive");
}

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// r = J - eps F(t, J, z) - y
void residual(const Generator& gen, const EvalPoint& pt, std::span<const double> y, std::span<const double> z,
              double eps, std::span<const double> J, std::span<double> r) {
  gen.eval(pt, J, z, r);
  for (std::size_t a = 0; a < r.size(); ++a) r[a] = J[a] - eps * r[a] - y[a];
}

} // namespace

std::vector<double> yosida_resolvent(const Generator& gen, const EvalPoint& pt, std::span<const double> y,
                                     std::span<const double> z, const YosidaParams& params) {
  const std::size_t d = gen.dim();
  if (y.size() != d || z.size() != d * gen.noise_dim()) throw DimensionError("yosida_resolvent: bad y/z width");
  const double eps = params.epsilon;
  std::vector<double> J(y.begin(), y.end());

  if (const auto& lin = gen.linear_structure()) {
    // J (1 + eps r) = y - eps z theta
    const std::size_t k = gen.noise_dim();
    for (std::size_t a = 0; a < d; ++a) {
      double zt = 0.0;
      for (std::size_t c = 0; c < k; ++c) zt += z[a * k + c] * lin->theta[c];
      J[a] = (y[a] - eps * zt) / (1.0 + eps * lin->r);
    }
    return J;
  }

  const double target = params.inner_tol * std::min(1.0, eps);
  std::vector<double> r(d), trial(d), r_trial(d);
  residual(gen, pt, y, z, eps, J, r);
  double rn = norm(r);
  double omega = 1.0;
  for (std::size_t it = 0; it < params.max_inner && rn > target; ++it) {
    for (std::size_t a = 0; a < d; ++a) trial[a] = J[a] - omega * r[a];
    residual(gen, pt, y, z, eps, trial, r_trial);
    const double tn = norm(r_trial);
    if (std::isfinite(tn) && tn < rn) {
      J.swap(trial);
      r.swap(r_trial);
      rn = tn;
      omega = std::min(1.0, 2.0 * omega);
    } else {
      omega *= 0.5;
    }
  }
  if (rn <= target) return J;

  if (d == 1) {
    // g(J) = J - eps F(J) - y is increasing for eps M < 1: bracket and bisect.
    auto g = [&](double x) {
      double in[1] = {x}, out[1];
      gen.eval(pt, std::span<const double>(in, 1), z, std::span<double>(out, 1));
      return x - eps * out[0] - y[0];
    };
    double h = std::max(1.0, std::abs(y[0]));
    double lo = y[0] - h, hi = y[0] + h;
    for (int n = 0; n < 200 && !(g(lo) <= 0.0 && g(hi) >= 0.0); ++n) {
      h *= 2.0;
      lo = y[0] - h;
      hi = y[0] + h;
    }
    if (g(lo) <= 0.0 && g(hi) >= 0.0) {
      for (int n = 0; n < 400; ++n) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break; // bracket exhausted at machine precision
        const double gm = g(mid);
        if (std::abs(gm) <= target) return {mid};
        if (gm < 0.0) lo = mid;
        else hi = mid;
      }
      const double mid = 0.5 * (lo + hi);
      rn = std::abs(g(mid));
      if (rn <= target) return {mid};
    }
  }
  throw ResolventError("yosida_resolvent: inner iteration did not converge", rn);
}

std::vector<double> yosida_generator(const Generator& gen, const EvalPoint& pt, std::span<const double> y,
                                     std::span<const double> z, const YosidaParams& params) {
  const auto J = yosida_resolvent(gen, pt, y, z, params);
  const std::size_t d = gen.dim();
  std::vector<double> via_j(d), out(d);
  gen.eval(pt, J, z, via_j);
  double worst = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    out[a] = (y[a] - J[a]) / params.epsilon;
    worst = std::max(worst, std::abs(out[a] + via_j[a]));
  }
  if (worst > 10.0 * params.inner_tol)
    throw InconsistencyError("yosida_generator: (y - J)/eps and -F(J) disagree by " + std::to_string(worst));
  return out;
}

Generator regularized_generator(const Generator& gen, const YosidaParams& params) {
  params.validate(gen);
  const double eps = params.epsilon;
  const double M = gen.mono_M();
  const double L = gen.lip_L();
  auto fn = [gen, params](const EvalPoint& pt, std::span<const double> y, std::span<const double> z,
                          std::span<double> out) {
    const auto fe = yosida_generator(gen, pt, y, z, params);
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = -fe[a];
  };
  // G' = F'/(1 - eps F') is increasing in F', so the one-sided constant maps
  // to M/(1 - eps M); the z-sensitivity picks up at most 1/(1 - eps max(M,0)).
  const double mono = M / (1.0 - eps * M);
  const double lip = L / (1.0 - eps * std::max(M, 0.0));
  std::optional<LinearStructure> lin;
  if (const auto& l = gen.linear_structure()) {
    const double s = 1.0 / (1.0 + eps * l->r);
    std::vector<double> th(l->theta);
    for (double& x : th) x *= s;
    lin = LinearStructure{l->r * s, th};
  }
  return Generator(gen.dim(), gen.noise_dim(), fn, mono, lip, gen.growth_gamma(),
                   [gen](const EvalPoint& pt) { return gen.growth_eta(pt); }, lin);
}

YosidaResult yosida_sequence(const Generator& gen, const TerminalVariable& xi, const RegressionPlan& plan,
                             const YosidaParams& params, const YosidaOptions& opts) {
  const Generator reg = regularized_generator(gen, params);
  auto [sol, report] = solve_picard(reg, xi, plan, opts.picard);
  ControlPair pair(xi, apply_generator(reg, sol.Y, sol.Z));
  const double radius = opts.radius ? *opts.radius : default_radius(gen, xi);
  const auto family = build_candidates(pair, xi, gen, radius, opts.family_count, opts.family_seed, plan);
  const auto sup = eval_E_sup(pair, xi, gen, family, plan);
  return YosidaResult{std::move(pair), std::move(sol), std::move(report), sup.value, sup.se};
}

} // namespace bsde
