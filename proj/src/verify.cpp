#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "bsde/error.hpp"
#include "bsde/pricing.hpp"
#include "bsde/regression.hpp"
#include "bsde/solvers.hpp"
#include "bsde/variational.hpp"

namespace bsde {

namespace {

VerifyRow row(std::string name, bool passed, double value, double tol, std::string detail = {}) {
  return {std::move(name), passed, value, tol, std::move(detail)};
}

/// F(t,y,z) = -y^3 - 0.5 y + 0.3 z: monotone, Lipschitz in z, no linear structure.
Generator cubic_generator() {
  DriverFn fn = [](const EvalPoint&, std::span<const double> y, std::span<const double> z, std::span<double> out) {
    out[0] = -y[0] * y[0] * y[0] - 0.5 * y[0] + 0.3 * z[0];
  };
  return Generator(1, 1, fn, -0.5, 0.3, 0.5);
}

} // namespace

std::vector<VerifyRow> verify_suite(const VerifyOptions& opts) {
  std::vector<VerifyRow> rows;

  // b = 0.08, r = 0.05, sigma = 0.2: theta = 0.15 and M + L^2/2 < 0
  const MarketModel market(0.05, std::vector<double>{0.08}, {{0.2}}, std::nullopt, {100.0});
  const TimeGrid grid = TimeGrid::uniform(1.0, opts.N);
  const PathsPtr paths = simulate_brownian(grid, opts.M, 1, opts.seed);
  AdaptedProcess assets = simulate_assets(market, paths);
  const TerminalVariable xi = make_terminal({ClaimType::call, 100.0, 0, {}}, assets);
  const RegressionPlan plan(paths, BasisSpec::on_process(std::move(assets), 3));
  const Generator gen = market.generator(1);

  ProbeOptions probe;
  probe.seed = opts.seed;
  const Generator declared = gen.with_constants(gen.mono_M(), gen.lip_L() * opts.lip_L_scale, gen.growth_gamma());
  const auto lip = probe_lipschitz(declared, grid, probe);
  rows.push_back(row("lipschitz_probe", lip.passed, lip.worst_excess, probe.tol, "declared L = " + std::to_string(declared.lip_L())));
  const auto mono = probe_monotonicity(gen, grid, probe);
  rows.push_back(row("monotonicity_probe", mono.passed, mono.worst_excess, probe.tol));
  const auto growth = probe_growth(gen, grid, probe);
  rows.push_back(row("growth_probe", growth.passed, growth.worst_excess, probe.tol));
  const auto linear = probe_linear_structure(gen, grid, probe);
  rows.push_back(row("linear_structure_probe", linear.passed, linear.worst_excess, probe.tol));

  // energy identity on random pairs
  {
    double worst = 0.0;
    for (std::uint64_t j = 0; j < 3; ++j) {
      const auto a = random_pair(paths, 1, 1.0, opts.seed * 101 + 2 * j);
      const auto b = random_pair(paths, 1, 1.0, opts.seed * 101 + 2 * j + 1);
      worst = std::max(worst, energy_identity(a, b, plan).residual);
    }
    rows.push_back(row("energy_identity", worst <= 0.02, worst, 0.02, "max relative residual over 3 pairs"));
  }

  // midpoint convexity of the functional for a fixed competitor
  {
    double worst = -1e300;
    for (std::uint64_t j = 0; j < 5; ++j) {
      const auto comp = random_pair(paths, 1, 1.0, opts.seed * 211 + 3 * j);
      const auto pa = random_pair(paths, 1, 2.0, opts.seed * 211 + 3 * j + 1);
      const auto pb = random_pair(paths, 1, 0.5, opts.seed * 211 + 3 * j + 2);
      const auto mid = ControlPair::combine(0.5, pa, 0.5, pb);
      const double ea = eval_E_pair(comp, pa, xi, gen, plan).value;
      const double eb = eval_E_pair(comp, pb, xi, gen, plan).value;
      const double em = eval_E_pair(comp, mid, xi, gen, plan).value;
      worst = std::max(worst, em - 0.5 * (ea + eb));
    }
    rows.push_back(row("convexity", worst <= 1e-8, worst, 1e-8, "max of E(mid) - (E(a) + E(b))/2"));
  }

  // the supremum over a family containing the pair is never negative
  {
    const auto pair = random_pair(paths, 1, 1.0, opts.seed * 307);
    const auto fam = build_candidates(pair, xi, gen, default_radius(gen, xi), 6, opts.seed * 307 + 1, plan);
    const auto sup = eval_E_sup(pair, xi, gen, fam, plan);
    rows.push_back(row("nonnegativity", sup.value >= 0.0, sup.value, 0.0, "E-hat at a random pair"));
  }

  // resolvent of the linear generator: closed form against the generic inner solve
  {
    const Generator opaque(1, 1, gen.fn(), gen.mono_M(), gen.lip_L(), gen.growth_gamma());
    const YosidaParams params{0.1, 1e-13, 200};
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> g(0.0, 2.0);
    double worst = 0.0;
    for (int j = 0; j < 50; ++j) {
      const double y[1] = {g(rng)};
      const double z[1] = {g(rng)};
      const EvalPoint pt{0, 0, 0.0};
      const auto a = yosida_resolvent(gen, pt, y, z, params);
      const auto b = yosida_resolvent(opaque, pt, y, z, params);
      worst = std::max(worst, std::abs(a[0] - b[0]));
    }
    rows.push_back(row("resolvent_linear", worst <= 1e-12, worst, 1e-12));
  }

  // (y - J)/eps against -F(J, z) for a nonlinear generator
  {
    const Generator cubic = cubic_generator();
    const YosidaParams params{0.1, 1e-12, 200};
    std::mt19937_64 rng(opts.seed + 1);
    std::normal_distribution<double> g(0.0, 2.0);
    double worst = 0.0;
    bool ok = true;
    for (int j = 0; j < 50; ++j) {
      const double y[1] = {g(rng)};
      const double z[1] = {g(rng)};
      const EvalPoint pt{0, 0, 0.0};
      try {
        const auto J = yosida_resolvent(cubic, pt, y, z, params);
        double fj[1];
        cubic.eval(pt, J, z, fj);
        worst = std::max(worst, std::abs((y[0] - J[0]) / params.epsilon + fj[0]));
      } catch (const Error&) {
        ok = false;
      }
    }
    rows.push_back(row("resolvent_cross_check", ok && worst <= 1e-9, worst, 1e-9));
  }

  // F~(t, y, z) = (alpha - r) y - z theta after the exponential change of variables
  {
    const double alpha = 0.7;
    const auto [tgen, txi] = exp_transform(gen, xi, alpha);
    std::mt19937_64 rng(opts.seed + 2);
    std::normal_distribution<double> g(0.0, 2.0);
    double worst = 0.0;
    for (int j = 0; j < 50; ++j) {
      const double y[1] = {g(rng)};
      const double z[1] = {g(rng)};
      const std::size_t step = static_cast<std::size_t>(j) % (grid.num_steps() + 1);
      const EvalPoint pt{step, 0, grid.time(step)};
      double out[1];
      tgen.eval(pt, y, z, out);
      const double expect = (alpha - market.r()) * y[0] - z[0] * market.theta()[0];
      worst = std::max(worst, std::abs(out[0] - expect) / std::max(1.0, std::abs(expect)));
    }
    rows.push_back(row("transform", worst <= 1e-12, worst, 1e-12));
  }

  // E-hat at the Picard solution pair is within noise of zero
  {
    auto [sol, report] = solve_picard(gen, xi, plan);
    const ControlPair pair(xi, apply_generator(gen, sol.Y, sol.Z));
    const auto fam = build_candidates(pair, xi, gen, default_radius(gen, xi), 8, opts.seed * 401, plan);
    const auto sup = eval_E_sup(pair, xi, gen, fam, plan);
    const double tol = std::max(3.0 * sup.se, 1e-3);
    rows.push_back(row("equivalence", sup.value <= tol, sup.value, tol, "E-hat at (xi, F(Y, Z)) of the Picard solution"));
    rows.push_back(row("apriori_bound", report.bound_holds, report.bound_lhs, report.bound_rhs,
                       "E sup|Y|^2 + E int |Z|^2 against C1 E(|xi|^2 + int |F(s,0,0)|^2)"));
  }
  return rows;
}

nlohmann::ordered_json verify_to_json(const std::vector<VerifyRow>& rows) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["passed"] = std::all_of(rows.begin(), rows.end(), [](const VerifyRow& r) { return r.passed; });
  auto& arr = j["rows"];
  arr = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    arr.push_back(nlohmann::ordered_json{
        {"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"tolerance", r.tolerance}, {"detail", r.detail}});
  return j;
}

std::string verify_to_csv(const std::vector<VerifyRow>& rows) {
  std::ostringstream os;
  os << "name,passed,value,tolerance,detail\r\n";
  char buf[64];
  for (const auto& r : rows) {
    os << csv_field(r.name) << ',' << (r.passed ? "true" : "false") << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.value, r.tolerance);
    os << buf << ',' << csv_field(r.detail) << "\r\n";
  }
  return os.str();
}

} // namespace bsde
