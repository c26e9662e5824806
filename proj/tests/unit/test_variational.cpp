#include <doctest.h>

#include <cmath>
#include <vector>

#include "bsde/claim.hpp"
#include "bsde/error.hpp"
#include "bsde/solvers.hpp"
#include "bsde/variational.hpp"

using namespace bsde;

namespace {

struct Setup {
  PathsPtr paths;
  RegressionPlan plan;
};

Setup brownian_setup(std::size_t n, std::size_t m, std::uint64_t seed) {
  auto paths = simulate_brownian(TimeGrid::uniform(1.0, n), m, 1, seed);
  return {paths, RegressionPlan(paths, BasisSpec::brownian(paths))};
}

ControlPair unit_driver(const PathsPtr& paths) {
  const std::vector<double> one{1.0};
  return ControlPair(TerminalVariable::zeros(paths, 1), AdaptedProcess::constant(paths, one, Shape::y_type));
}

struct Market {
  MarketModel market;
  PathsPtr paths;
  TerminalVariable xi;
  RegressionPlan plan;
};

Market call_market(std::size_t n, std::size_t m, std::uint64_t seed) {
  const auto market = MarketModel::black_scholes(0.05, 0.05, 0.2, 100.0);
  auto paths = simulate_brownian(TimeGrid::uniform(1.0, n), m, 1, seed);
  auto s = simulate_assets(market, paths);
  auto xi = make_terminal({ClaimType::call, 100.0, 0, {}}, s);
  return {market, paths, xi, RegressionPlan(paths, BasisSpec::on_process(std::move(s), 3))};
}

} // namespace

TEST_CASE("energy identity: equal pairs and the deterministic example") {
  auto [paths, plan] = brownian_setup(20, 500, 1);
  const auto p = random_pair(paths, 1, 1.0, 3);
  const auto same = energy_identity(p, p, plan);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.residual == 0.0);

  const auto det = energy_identity(unit_driver(paths), ControlPair::zeros(paths, 1), plan);
  CHECK(det.lhs == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(det.rhs == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("energy identity on random pairs") {
  auto [paths, plan] = brownian_setup(50, 4000, 2);
  for (std::uint64_t j = 0; j < 5; ++j) {
    const auto e = energy_identity(random_pair(paths, 1, 1.0, 10 + j), random_pair(paths, 1, 2.0, 20 + j), plan);
    CHECK(e.residual <= 0.02);
    CHECK(e.residual_z <= 0.05);
  }
}

TEST_CASE("functional: self-evaluation and the deterministic example") {
  auto [paths, plan] = brownian_setup(40, 500, 4);
  const auto gen = Generator::zero(1, 1);
  const auto xi = TerminalVariable::zeros(paths, 1);
  const auto pair = unit_driver(paths);
  // comp = pair gives E|eta - xi|^2
  const auto p = random_pair(paths, 1, 1.5, 5);
  CHECK(eval_E_pair(p, p, xi, gen, plan).value == doctest::Approx(p.eta.second_moment()).epsilon(1e-13));
  // 2 int (1 - t) dt = 1, left sums give 1 + dt
  const auto det = eval_E_pair(ControlPair::zeros(paths, 1), pair, xi, gen, plan);
  CHECK(std::abs(det.value - 1.0) <= 1.0 / 40.0 + 1e-12);
  CHECK(det.value == doctest::Approx(1.0 + 1.0 / 40.0).epsilon(1e-12));
}

TEST_CASE("supremum over small families") {
  auto [paths, plan] = brownian_setup(40, 500, 6);
  const auto gen = Generator::zero(1, 1);
  const auto xi = TerminalVariable::zeros(paths, 1);
  const auto pair = unit_driver(paths);

  CandidateFamily only;
  only.members = {pair};
  CHECK(eval_E_sup(pair, xi, gen, only, plan).value == 0.0);

  CandidateFamily two;
  two.members = {ControlPair::zeros(paths, 1), pair};
  const auto sup = eval_E_sup(pair, xi, gen, two, plan);
  CHECK(sup.argmax == 0);
  CHECK(sup.value == doctest::Approx(1.0 + 1.0 / 40.0).epsilon(1e-12));

  CandidateFamily without;
  without.members = {ControlPair::zeros(paths, 1)};
  CHECK_THROWS_AS(eval_E_sup(pair, xi, gen, without, plan), InvalidFamily);
  CHECK_THROWS_AS(eval_E_sup(pair, xi, gen, CandidateFamily{}, plan), InvalidFamily);
}

TEST_CASE("degenerate exactness: constant terminal, zero generator") {
  auto [paths, plan] = brownian_setup(20, 1000, 7);
  const std::vector<double> c{2.5};
  const auto xi = TerminalVariable::constant(paths, c);
  const auto gen = Generator::zero(1, 1);
  const ControlPair pair(xi, AdaptedProcess::zeros(paths, 1, Shape::y_type));
  const auto fam = build_candidates(pair, xi, gen, default_radius(gen, xi), 12, 3, plan);
  CHECK(std::abs(eval_E_sup(pair, xi, gen, fam, plan).value) <= 1e-10);
}

TEST_CASE("candidate families") {
  auto m = call_market(10, 2000, 8);
  const auto gen = m.market.generator();
  const ControlPair pair(m.xi, AdaptedProcess::zeros(m.paths, 1, Shape::y_type));
  const double radius = default_radius(gen, m.xi);

  CHECK(build_candidates(pair, m.xi, gen, radius, 0, 1, m.plan).members.size() == 1);

  const auto a = build_candidates(pair, m.xi, gen, radius, 10, 99, m.plan);
  const auto b = build_candidates(pair, m.xi, gen, radius, 10, 99, m.plan);
  REQUIRE(a.members.size() == 11);
  for (std::size_t j = 0; j < a.members.size(); ++j) {
    CHECK(std::ranges::equal(a.members[j].f.values(), b.members[j].f.values()));
    if (j >= a.num_anchors) CHECK(in_ball(a.members[j], radius));
  }
  CHECK_THROWS_AS(build_candidates(pair, m.xi, gen, -1.0, 3, 1, m.plan), InvalidArgument);

  // adding candidates never lowers the supremum
  CandidateFamily head = a;
  head.members.erase(head.members.begin() + 5, head.members.end());
  CHECK(eval_E_sup(pair, m.xi, gen, a, m.plan).value >= eval_E_sup(pair, m.xi, gen, head, m.plan).value);
}

TEST_CASE("random pairs have the requested norm") {
  auto [paths, plan] = brownian_setup(10, 800, 9);
  CHECK(b_norm(random_pair(paths, 1, 3.5, 1)) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(b_norm(random_pair(paths, 2, 0.25, 2)) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("midpoint convexity") {
  auto m = call_market(20, 2000, 10);
  const auto gen = m.market.generator();
  for (std::uint64_t j = 0; j < 10; ++j) {
    const auto comp = random_pair(m.paths, 1, 5.0, 3 * j);
    const auto pa = random_pair(m.paths, 1, 10.0, 3 * j + 1);
    const auto pb = random_pair(m.paths, 1, 1.0, 3 * j + 2);
    const auto mid = ControlPair::combine(0.5, pa, 0.5, pb);
    const double ea = eval_E_pair(comp, pa, m.xi, gen, m.plan).value;
    const double eb = eval_E_pair(comp, pb, m.xi, gen, m.plan).value;
    CHECK(eval_E_pair(comp, mid, m.xi, gen, m.plan).value <= 0.5 * (ea + eb) + 1e-8);
  }
}

TEST_CASE("the Picard pair is optimal") {
  auto m = call_market(20, 5000, 11);
  const auto gen = m.market.generator();
  PicardOptions opts;
  opts.tol = 1e-14;
  auto [sol, rep] = solve_picard(gen, m.xi, m.plan, opts);
  const ControlPair pair(m.xi, apply_generator(gen, sol.Y, sol.Z));
  const auto fam = build_candidates(pair, m.xi, gen, default_radius(gen, m.xi), 12, 5, m.plan);
  const auto sup = eval_E_sup(pair, m.xi, gen, fam, m.plan);
  CHECK(sup.value >= 0.0);
  CHECK(sup.value <= 3.0 * sup.se + 1e-10);

  CHECK(driver_match_residual(pair, gen, m.plan) <= 1e-14 * 1.0);
  const auto u = AdaptedProcess::from_brownian(m.paths, 1, Shape::y_type,
                                               [](double t, std::span<const double> w, std::span<double> o) {
                                                 o[0] = std::cos(w[0]) - t;
                                               });
  CHECK(std::abs(optimality_residual(pair, u, gen, m.plan)) <= 1e-6);
  CHECK(optimality_residual(pair, AdaptedProcess::zeros(m.paths, 1, Shape::y_type), gen, m.plan) == 0.0);

  // f = F(y, z) + delta with (y, z) = C,D(xi, f): the fixed point of the shifted generator
  for (double delta : {0.3, 1.0}) {
    const Generator shifted(1, 1,
                            [&gen, delta](const EvalPoint& pt, std::span<const double> y, std::span<const double> z,
                                          std::span<double> o) {
                              gen.eval(pt, y, z, o);
                              o[0] += delta;
                            },
                            gen.mono_M(), gen.lip_L(), gen.growth_gamma(), [delta](const EvalPoint&) { return delta; });
    auto [ssol, srep] = solve_picard(shifted, m.xi, m.plan, opts);
    const ControlPair offset(m.xi, apply_generator(shifted, ssol.Y, ssol.Z));
    const std::vector<double> one{1.0};
    const auto ones = AdaptedProcess::constant(m.paths, one, Shape::y_type);
    CHECK(optimality_residual(offset, ones, gen, m.plan) == doctest::Approx(delta * 1.0).epsilon(1e-6));
    CHECK(driver_match_residual(offset, gen, m.plan) == doctest::Approx(delta * delta * 1.0).epsilon(1e-6));
  }
}

TEST_CASE("minimizer: already optimal start") {
  auto [paths, plan] = brownian_setup(10, 1000, 12);
  const std::vector<double> c{1.5};
  const auto xi = TerminalVariable::constant(paths, c);
  MinimizerConfig cfg;
  cfg.family_count = 4;
  const auto res = minimize_E(xi, Generator::zero(1, 1), AdaptedProcess::zeros(paths, 1, Shape::y_type), cfg, plan);
  REQUIRE(!res.trace.e_hat.empty());
  CHECK(res.trace.e_hat.front() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.trace.reached);
  CHECK(res.trace.outer == 0);
  CHECK(std::ranges::equal(res.pair.eta.values(), xi.values()));
  CHECK(time_integral_sq(res.pair.f) == 0.0);
}

TEST_CASE("minimizer on the linear-market call") {
  auto m = call_market(20, 5000, 13);
  const auto gen = m.market.generator();
  auto [pic, rep] = solve_picard(gen, m.xi, m.plan);
  MinimizerConfig cfg;
  cfg.family_count = 6;
  const auto res = minimize_E(m.xi, gen, AdaptedProcess::zeros(m.paths, 1, Shape::y_type), cfg, m.plan);
  CHECK(res.trace.reached);
  CHECK(res.trace.outer <= 25);
  CHECK(std::abs(res.solution.Y.at(0, 0)[0] / pic.Y.at(0, 0)[0] - 1.0) <= 0.02);
  const ControlPair pp(m.xi, apply_generator(gen, pic.Y, pic.Z));
  CHECK(driver_match_residual(res.pair, gen, m.plan) <= 10.0 * driver_match_residual(pp, gen, m.plan) + 1e-12);
}

TEST_CASE("minimizer configuration is validated") {
  MinimizerConfig cfg;
  cfg.max_outer = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = MinimizerConfig{};
  cfg.radius = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
