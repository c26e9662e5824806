#include <doctest.h>

#include <cmath>
#include <vector>

#include "bsde/error.hpp"
#include "bsde/regression.hpp"
#include "bsde/sde.hpp"

using namespace bsde;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

std::vector<double> slice(const AdaptedProcess& p, std::size_t step) {
  const auto s = p.step_values(step);
  return {s.begin(), s.end()};
}

} // namespace

TEST_CASE("projection of a constant is exact") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 5), 5000, 1, 1);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> target(5000, 3.25);
  for (double v : plan.cond_expect(2, target, 1)) CHECK(v == doctest::Approx(3.25).epsilon(1e-13));
}

TEST_CASE("a target in the span is reproduced") {
  const auto market = MarketModel::black_scholes(0.05, 0.08, 0.2, 100.0);
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 5), 5000, 1, 2);
  const auto s = simulate_assets(market, paths);
  // the default ridge shrinks non-constant coefficients by a relative 1e-8, so
  // exact reproduction is checked on the unpenalized projection
  auto basis = BasisSpec::on_process(s, 2);
  basis.ridge = 0.0;
  const RegressionPlan plan(paths, basis);
  const auto target = slice(s, 3);
  CHECK(max_abs_diff(plan.cond_expect(3, target, 1), target) <= 1e-10);

  auto wbasis = BasisSpec::brownian(paths, 1);
  wbasis.ridge = 0.0;
  const RegressionPlan wplan(paths, wbasis);
  std::vector<double> w(5000);
  for (std::size_t m = 0; m < w.size(); ++m) w[m] = paths->w(4, m)[0];
  CHECK(max_abs_diff(wplan.cond_expect(4, w, 1), w) <= 1e-10);
}

TEST_CASE("conditional mean of a geometric Brownian motion") {
  const double b = 0.08, dt = 0.1;
  const auto market = MarketModel::black_scholes(0.05, b, 0.2, 100.0);
  const std::size_t M = 100000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), M, 1, 3);
  const auto s = simulate_assets(market, paths);
  const RegressionPlan plan(paths, BasisSpec::on_process(s, 3));
  const auto target = slice(s, 6);
  const auto est = plan.cond_expect(5, target, 1);
  // residual noise of the target around the oracle, and the projection error it induces
  double q = 0.0, err = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double oracle = s.at(5, m)[0] * std::exp(b * dt);
    q += (target[m] - oracle) * (target[m] - oracle);
    err += (est[m] - oracle) * (est[m] - oracle);
  }
  const double sigma = std::sqrt(q / M);
  const double se = sigma * std::sqrt(4.0 / M); // four basis functions
  CHECK(std::sqrt(err / M) <= 3.0 * se);
}

TEST_CASE("linearity and tower property") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 5), 8000, 1, 4);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  std::vector<double> u(8000), v(8000), uv(8000);
  for (std::size_t m = 0; m < 8000; ++m) {
    const double w = paths->w(5, m)[0];
    u[m] = std::sin(w) + w * w;
    v[m] = std::exp(0.3 * w);
    uv[m] = 2.0 * u[m] - 0.5 * v[m];
  }
  const auto eu = plan.cond_expect(2, u, 1);
  const auto ev = plan.cond_expect(2, v, 1);
  const auto euv = plan.cond_expect(2, uv, 1);
  double worst = 0.0, mean_e = 0.0, mean_t = 0.0;
  for (std::size_t m = 0; m < 8000; ++m) {
    worst = std::max(worst, std::abs(euv[m] - 2.0 * eu[m] + 0.5 * ev[m]));
    mean_e += eu[m];
    mean_t += u[m];
  }
  CHECK(worst <= 1e-10);
  CHECK(std::abs(mean_e - mean_t) / 8000.0 <= 1e-10);
}

TEST_CASE("martingale representation of W") {
  const std::size_t M = 20000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), M, 1, 5);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  std::vector<double> w(M), c(M, 2.0);
  for (std::size_t m = 0; m < M; ++m) w[m] = paths->w(4, m)[0];
  const auto z = plan.martingale_z(3, w, 1);
  const auto z0 = plan.martingale_z(3, c, 1);
  // se of the slope of W_{t+dt} on dW/dt with intercept, a few basis functions
  const double se = std::sqrt(0.3 / 0.1 * 4.0 / M);
  double mean = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    mean += z[m];
    CHECK(std::abs(z0[m]) <= 1e-10);
  }
  CHECK(std::abs(mean / M - 1.0) <= 3.0 * se);
}

TEST_CASE("martingale representation of a geometric Brownian motion") {
  const double sigma = 0.2;
  const auto market = MarketModel::black_scholes(0.05, 0.08, sigma, 100.0);
  const std::size_t M = 100000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 10), M, 1, 6);
  const auto s = simulate_assets(market, paths);
  const RegressionPlan plan(paths, BasisSpec::on_process(s, 3));
  const auto z = plan.martingale_z(5, slice(s, 6), 1);
  double worst = 0.0;
  for (std::size_t m = 0; m < M; m += 97) {
    const double oracle = sigma * s.at(5, m)[0];
    worst = std::max(worst, std::abs(z[m] - oracle) / oracle);
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("one-shot estimators agree with the plan") {
  const std::size_t M = 5000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 5), M, 1, 7);
  const auto basis = BasisSpec::brownian(paths);
  const RegressionPlan plan(paths, basis);
  std::vector<double> y(M);
  for (std::size_t m = 0; m < M; ++m) y[m] = std::cos(paths->w(3, m)[0]);
  CHECK(max_abs_diff(cond_expect(y, 1, basis, 2), plan.cond_expect(2, y, 1)) <= 1e-10);
  const auto dw = paths->dw_step(2);
  CHECK(max_abs_diff(martingale_z(y, 1, dw, 1, 0.2, basis, 2), plan.martingale_z(2, y, 1)) <= 1e-10);
  CHECK_THROWS_AS(martingale_z(y, 1, dw, 1, 0.0, basis, 2), DegenerateStep);
}

TEST_CASE("estimates at step i ignore data after the target time") {
  const std::size_t M = 3000;
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 6), M, 1, 8);
  const auto moved = std::make_shared<const PathEnsemble>(paths->perturbed(17, 4, 0, 0.7));
  const RegressionPlan a(paths, BasisSpec::brownian(paths));
  const RegressionPlan b(moved, BasisSpec::brownian(moved));
  std::vector<double> target(M);
  for (std::size_t m = 0; m < M; ++m) target[m] = std::sin(paths->w(3, m)[0]) + paths->w(3, m)[0];
  CHECK(a.cond_expect(2, target, 1) == b.cond_expect(2, target, 1));
  CHECK(a.martingale_z(2, target, 1) == b.martingale_z(2, target, 1));
}

TEST_CASE("basis larger than M/10 is refused") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 2), 30, 1, 9);
  CHECK_THROWS_AS(RegressionPlan(paths, BasisSpec::brownian(paths, 3)), InvalidArgument);
}

TEST_CASE("rank-deficient design without ridge") {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 2), 100, 1, 10);
  std::vector<double> state(100, 1.0);
  for (std::size_t m = 0; m < 50; ++m) state[m] = 2.0; // two distinct values, cubic basis
  CHECK_THROWS_AS(StepRegressor(state, 100, 1, 3, 0.0), SingularRegression);
}
