#include <doctest.h>

#include <cmath>
#include <vector>

#include "bsde/claim.hpp"
#include "bsde/error.hpp"
#include "bsde/solvers.hpp"

using namespace bsde;

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct BlackScholes {
  double price, delta;
};

BlackScholes bs_call(double s, double k, double r, double sigma, double t) {
  const double d1 = (std::log(s / k) + (r + 0.5 * sigma * sigma) * t) / (sigma * std::sqrt(t));
  const double d2 = d1 - sigma * std::sqrt(t);
  return {s * norm_cdf(d1) - k * std::exp(-r * t) * norm_cdf(d2), norm_cdf(d1)};
}

double max_abs(std::span<const double> v) {
  double w = 0.0;
  for (double x : v) w = std::max(w, std::abs(x));
  return w;
}

} // namespace

TEST_CASE("independent Black-Scholes oracle") {
  const auto bs = bs_call(100.0, 100.0, 0.05, 0.2, 1.0);
  CHECK(bs.price == doctest::Approx(10.4506).epsilon(1e-5));
  CHECK(bs.delta == doctest::Approx(0.6368).epsilon(1e-4));
}

TEST_CASE("test equation: constant terminal, no driver") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), 2000, 1, 1);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> c{1.75};
  const auto sol = solve_test_bsde(
      ControlPair(TerminalVariable::constant(paths, c), AdaptedProcess::zeros(paths, 1, Shape::y_type)), plan);
  for (double v : sol.Y.values()) CHECK(v == doctest::Approx(1.75).epsilon(1e-13));
  CHECK(max_abs(sol.Z.values()) <= 1e-12);
}

TEST_CASE("test equation: unit driver, zero terminal") {
  const auto grid = TimeGrid::uniform(1.0, 8);
  const auto paths = simulate_brownian(grid, 2000, 1, 2);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> one{1.0};
  const auto sol = solve_test_bsde(
      ControlPair(TerminalVariable::zeros(paths, 1), AdaptedProcess::constant(paths, one, Shape::y_type)), plan);
  for (std::size_t i = 0; i <= 8; ++i)
    for (std::size_t m = 0; m < 2000; m += 111) CHECK(sol.Y.at(i, m)[0] == doctest::Approx(1.0 - grid.time(i)).epsilon(1e-12));
}

TEST_CASE("test equation: terminal W_T") {
  const std::size_t M = 20000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), M, 1, 3);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const auto sol = solve_test_bsde(ControlPair(TerminalVariable::from_paths(paths, 1,
                                                                            [](const PathView& v, std::span<double> out) {
                                                                              out[0] = v.terminal()[0];
                                                                            }),
                                               AdaptedProcess::zeros(paths, 1, Shape::y_type)),
                                   plan);
  double err = 0.0, zmean = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double e = sol.Y.at(5, m)[0] - paths->w(5, m)[0];
    err += e * e;
    zmean += sol.Z.at(5, m)[0];
  }
  // W_T - W_t projected on four basis functions per step: rms ~ sqrt(4 (T - t) / M)
  CHECK(std::sqrt(err / M) <= 3.0 * std::sqrt(4.0 * 0.5 / M));
  CHECK(std::abs(zmean / M - 1.0) <= 3.0 * std::sqrt(1.0 / 0.1 * 4.0 / M));
}

TEST_CASE("solution maps are linear") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), 3000, 1, 4);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const auto f1 = AdaptedProcess::from_brownian(paths, 1, Shape::y_type,
                                                [](double t, std::span<const double> w, std::span<double> o) {
                                                  o[0] = std::sin(w[0]) + t;
                                                });
  const auto f2 = AdaptedProcess::from_brownian(paths, 1, Shape::y_type,
                                                [](double, std::span<const double> w, std::span<double> o) {
                                                  o[0] = w[0] * w[0];
                                                });
  const ControlPair p1(f1.terminal(), f1);
  const ControlPair p2(f2.terminal(), f2);
  CHECK(linearity_check(p1, p2, 1.0, 0.0, plan) == 0.0);
  CHECK(linearity_check(p1, p1, 0.5, 0.5, plan) == 0.0);
  CHECK(linearity_check(p1, p2, 2.0, -1.0, plan) <= 1e-10);
}

TEST_CASE("Picard: zero generator converges at once") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), 2000, 1, 5);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> c{0.5};
  auto [sol, rep] = solve_picard(Generator::zero(1, 1), TerminalVariable::constant(paths, c), plan);
  CHECK(rep.iterations == 1);
  CHECK(rep.converged);
  CHECK(sol.Y.at(0, 0)[0] == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(max_abs(sol.Z.values()) <= 1e-12);
}

TEST_CASE("Picard: deterministic linear decay") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 50), 1000, 1, 6);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> one{1.0};
  auto [sol, rep] = solve_picard(Generator::linear(1, 0.05, {0.0}), TerminalVariable::constant(paths, one), plan);
  CHECK(std::abs(sol.Y.at(0, 0)[0] - std::exp(-0.05)) <= 1e-3);
  CHECK(rep.bound_holds);
}

TEST_CASE("Picard: budget exhaustion carries the trace") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), 1000, 1, 7);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> one{1.0};
  PicardOptions opts;
  opts.tol = 1e-30;
  opts.max_iter = 2;
  try {
    solve_picard(Generator::linear(1, 0.5, {0.3}), TerminalVariable::constant(paths, one), plan, opts);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.trace().size() == 2);
  }
}

TEST_CASE("Black-Scholes call: closed form, Picard and hedge") {
  const auto market = MarketModel::black_scholes(0.05, 0.05, 0.2, 100.0);
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 50), 100000, 1, 42);
  const auto s = simulate_assets(market, paths);
  const auto xi = make_terminal({ClaimType::call, 100.0, 0, {}}, s);
  const RegressionPlan plan(paths, BasisSpec::on_process(s, 3));
  const auto oracle = bs_call(100.0, 100.0, 0.05, 0.2, 1.0);

  const auto cf = solve_linear_closed_form(market, xi, plan);
  CHECK(std::abs(cf.Y.at(0, 0)[0] / oracle.price - 1.0) <= 0.01);
  auto [pic, rep] = solve_picard(market.generator(), xi, plan);
  CHECK(std::abs(pic.Y.at(0, 0)[0] / oracle.price - 1.0) <= 0.01);

  const auto pi = hedge_portfolio(market, pic);
  CHECK(std::abs(pi.at(0, 0)[0] / 100.0 / oracle.delta - 1.0) <= 0.02);
  const auto pid = hedge_portfolio_discounted(market, pic.Y, plan);
  CHECK(std::abs(pid.at(0, 0)[0] / 100.0 / oracle.delta - 1.0) <= 0.02);
}

TEST_CASE("closed form: deterministic claim and zero claim") {
  const double r = 0.05;
  const auto market = MarketModel::black_scholes(r, r, 0.2, 100.0);
  const auto grid = TimeGrid::uniform(1.0, 10);
  const auto paths = simulate_brownian(grid, 2000, 1, 8);
  const RegressionPlan plan(paths, BasisSpec::on_process(simulate_assets(market, paths), 2));
  const std::vector<double> c{3.0};
  const auto sol = solve_linear_closed_form(market, TerminalVariable::constant(paths, c), plan);
  for (std::size_t i = 0; i <= 10; ++i)
    for (std::size_t m = 0; m < 2000; m += 199)
      CHECK(sol.Y.at(i, m)[0] == doctest::Approx(3.0 * std::exp(-r * (1.0 - grid.time(i)))).epsilon(1e-12));

  const auto zero = solve_linear_closed_form(market, TerminalVariable::zeros(paths, 1), plan);
  CHECK(max_abs(zero.Y.values()) == 0.0);
  CHECK(max_abs(zero.Z.values()) == 0.0);
  CHECK(max_abs(hedge_portfolio(market, zero).values()) == 0.0);
}

TEST_CASE("exponential change of variables") {
  const auto grid = TimeGrid::uniform(1.0, 10);
  const auto paths = simulate_brownian(grid, 500, 1, 9);
  const std::vector<double> one{1.0};
  const auto xi = TerminalVariable::constant(paths, one);
  const auto gen = Generator::linear(1, 0.05, {0.2});

  auto [same, same_xi] = exp_transform(gen, xi, 0.0);
  const double y[1] = {1.3}, z[1] = {-0.4};
  double a[1], b[1];
  gen.eval({3, 0, grid.time(3)}, y, z, a);
  same.eval({3, 0, grid.time(3)}, y, z, b);
  CHECK(a[0] == b[0]);
  CHECK(same_xi.at(0)[0] == 1.0);

  const double alpha = 0.4;
  auto [tgen, txi] = exp_transform(gen, xi, alpha);
  const double z0[1] = {0.0};
  tgen.eval({3, 0, grid.time(3)}, y, z0, b);
  CHECK(b[0] == doctest::Approx((alpha - 0.05) * 1.3).epsilon(1e-14));
  CHECK(txi.at(0)[0] == doctest::Approx(std::exp(-alpha)).epsilon(1e-14));
}

TEST_CASE("transformed solve maps back onto the direct solve") {
  // M + L^2/2 > 0 for F = y + 0.5 z; small horizon keeps the direct iteration contractive
  DriverFn fn = [](const EvalPoint&, std::span<const double> y, std::span<const double> z, std::span<double> o) {
    o[0] = y[0] + 0.5 * z[0];
  };
  const Generator gen(1, 1, fn, 1.0, 0.5, 1.0);
  const auto paths = simulate_brownian(TimeGrid::uniform(0.5, 50), 20000, 1, 10);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const auto xi = TerminalVariable::from_paths(paths, 1, [](const PathView& v, std::span<double> o) {
    o[0] = std::max(v.terminal()[0], 0.0) + 1.0;
  });
  PicardOptions direct;
  direct.auto_transform = false;
  direct.tol = 1e-14;
  PicardOptions autoopt;
  autoopt.tol = 1e-14;
  auto [d, drep] = solve_picard(gen, xi, plan, direct);
  auto [t, trep] = solve_picard(gen, xi, plan, autoopt);
  CHECK(drep.transform_alpha == 0.0);
  CHECK(trep.transform_alpha == doctest::Approx(-(1.0 + 0.125)));
  CHECK(std::abs(t.Y.at(0, 0)[0] / d.Y.at(0, 0)[0] - 1.0) <= 1e-2);
}
