// Acceptance checks AC1-AC9. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bsde/claim.hpp"
#include "bsde/error.hpp"
#include "bsde/pricing.hpp"
#include "bsde/solvers.hpp"
#include "bsde/variational.hpp"

using namespace bsde;

namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Black-Scholes call price and delta, computed independently of the library.
std::pair<double, double> bs_call(double s, double k, double r, double sigma, double t) {
  const double d1 = (std::log(s / k) + (r + 0.5 * sigma * sigma) * t) / (sigma * std::sqrt(t));
  const double d2 = d1 - sigma * std::sqrt(t);
  return {s * norm_cdf(d1) - k * std::exp(-r * t) * norm_cdf(d2), norm_cdf(d1)};
}

struct CallInstance {
  MarketModel market;
  PathsPtr paths;
  TerminalVariable xi;
  RegressionPlan plan;
};

// Call on a single stock with b = r (zero risk premium).
CallInstance call_instance(std::size_t n, std::size_t m, std::uint64_t seed) {
  const auto market = MarketModel::black_scholes(0.05, 0.05, 0.2, 100.0);
  auto paths = simulate_brownian(TimeGrid::uniform(1.0, n), m, 1, seed);
  auto s = simulate_assets(market, paths);
  auto xi = make_terminal({ClaimType::call, 100.0, 0, {}}, s);
  return {market, paths, xi, RegressionPlan(paths, BasisSpec::on_process(std::move(s), 3))};
}

void ac1(Outcome& o) {
  const auto [price, delta] = bs_call(100.0, 100.0, 0.05, 0.2, 1.0);
  PricingConfig cfg;
  cfg.ensemble.M = 100000;
  cfg.grid.N = 50;
  cfg.solvers = {"closed_form", "picard"};
  cfg.tolerances.family_size = 2;
  const auto rep = price_claim(cfg);
  for (const auto& r : rep.runs) {
    const double pe = std::abs(r.price / price - 1.0);
    const double de = std::abs(r.delta0[0] / delta - 1.0);
    o.detail << r.solver << " price " << r.price << " (" << 100 * pe << "%), delta " << r.delta0[0] << " ("
             << 100 * de << "%); ";
    o.require(pe <= 0.01, r.solver + " price within 1%");
    o.require(de <= 0.02, r.solver + " delta within 2%");
  }
  o.detail << "oracle " << price << " / " << delta;
}

void ac2(Outcome& o) {
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 20), 10000, 1, 3);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const std::vector<double> c{1.7};
  const auto xi = TerminalVariable::constant(paths, c);
  const auto gen = Generator::zero(1, 1);
  auto [sol, rep] = solve_picard(gen, xi, plan);
  double ey = 0.0, ez = 0.0;
  for (double v : sol.Y.values()) ey = std::max(ey, std::abs(v - 1.7));
  for (double v : sol.Z.values()) ez = std::max(ez, std::abs(v));
  const ControlPair pair(xi, AdaptedProcess::zeros(paths, 1, Shape::y_type));
  const auto fam = build_candidates(pair, xi, gen, default_radius(gen, xi), 20, 5, plan);
  const double e = eval_E_sup(pair, xi, gen, fam, plan).value;
  o.detail << "max|Y-c| " << ey << ", max|Z| " << ez << ", E-hat " << e;
  o.require(ey <= 1e-10 && ez <= 1e-10, "Y = c, Z = 0");
  o.require(std::abs(e) <= 1e-10, "E-hat = 0");
}

void ac3(Outcome& o) {
  const auto inst = call_instance(50, 100000, 42);
  const auto gen = inst.market.generator();
  // iterate to the discrete fixed point itself, so the pair carries no
  // leftover Picard increment
  PicardOptions opts;
  opts.tol = 1e-20;
  opts.max_iter = 100;
  auto [sol, rep] = solve_picard(gen, inst.xi, inst.plan, opts);
  const ControlPair pair(inst.xi, apply_generator(gen, sol.Y, sol.Z));
  const double radius = default_radius(gen, inst.xi);
  const auto fam = build_candidates(pair, inst.xi, gen, radius, 50, 2024, inst.plan);
  const auto sup = eval_E_sup(pair, inst.xi, gen, fam, inst.plan);
  std::size_t bad = 0;
  double worst = -1e300;
  for (std::size_t j = 1; j < sup.per_candidate.size(); ++j) {
    const auto& e = sup.per_candidate[j];
    if (e.value > 3.0 * e.se) ++bad;
    worst = std::max(worst, e.value / std::max(e.se, 1e-300));
  }
  o.detail << "Picard iterations " << rep.iterations << ", " << fam.members.size() - 1 << " candidates, K = "
           << radius << ", max E/SE " << worst << ", E-hat " << sup.value << " (3 SE = " << 3.0 * sup.se << ")";
  o.require(fam.members.size() == 51, "50 candidates");
  o.require(bad == 0, "every candidate <= 3 SE");
  o.require(sup.value >= 0.0 && sup.value <= 3.0 * sup.se, "E-hat in [0, 3 SE]");
}

void ac4(Outcome& o) {
  const auto inst = call_instance(20, 10000, 42);
  const auto gen = inst.market.generator();
  auto [pic, rep] = solve_picard(gen, inst.xi, inst.plan);
  const ControlPair ppair(inst.xi, apply_generator(gen, pic.Y, pic.Z));
  const double pic_res = driver_match_residual(ppair, gen, inst.plan);
  const auto res = minimize_E(inst.xi, gen, AdaptedProcess::zeros(inst.paths, 1, Shape::y_type), MinimizerConfig{},
                              inst.plan);
  const double min_res = driver_match_residual(res.pair, gen, inst.plan);
  const double y0 = res.solution.Y.at(0, 0)[0], p0 = pic.Y.at(0, 0)[0];
  o.detail << "outer " << res.trace.outer << ", E-hat " << res.trace.e_hat.back() << " (threshold "
           << res.trace.threshold << "), driver residual " << min_res << " vs Picard " << pic_res << ", Y0 " << y0
           << " vs " << p0;
  o.require(res.trace.reached && res.trace.e_hat.back() <= res.trace.threshold, "E-hat below threshold");
  o.require(res.trace.outer <= 25, "within 25 outer iterations");
  o.require(min_res <= 10.0 * pic_res, "driver residual <= 10x Picard");
  o.require(std::abs(y0 / p0 - 1.0) <= 0.02, "Y0 within 2%");
}

void ac5(Outcome& o) {
  const auto inst = call_instance(50, 10000, 7);
  double worst = 0.0;
  for (std::uint64_t j = 0; j < 20; ++j) {
    const double na = 0.1 + 0.5 * static_cast<double>(j);
    const auto a = random_pair(inst.paths, 1, na, 1000 + 2 * j);
    const auto b = random_pair(inst.paths, 1, 1.0, 1001 + 2 * j);
    worst = std::max(worst, energy_identity(a, b, inst.plan).residual);
  }
  o.detail << "max relative residual " << worst;
  o.require(worst <= 0.02, "residual <= 2%");
}

void ac6(Outcome& o) {
  const auto inst = call_instance(20, 10000, 8);
  const auto gen = inst.market.generator();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> scale(0.1, 20.0);
  double worst = -1e300;
  for (std::uint64_t j = 0; j < 100; ++j) {
    const auto comp = random_pair(inst.paths, 1, scale(rng), rng());
    const auto a = random_pair(inst.paths, 1, scale(rng), rng());
    const auto b = random_pair(inst.paths, 1, scale(rng), rng());
    const auto mid = ControlPair::combine(0.5, a, 0.5, b);
    const double ea = eval_E_pair(comp, a, inst.xi, gen, inst.plan).value;
    const double eb = eval_E_pair(comp, b, inst.xi, gen, inst.plan).value;
    const double em = eval_E_pair(comp, mid, inst.xi, gen, inst.plan).value;
    worst = std::max(worst, em - 0.5 * (ea + eb));
  }
  o.detail << "max E(mid) - mean(E(a), E(b)) over 100 triples: " << worst;
  o.require(worst <= 1e-8, "midpoint convexity");
}

// F(t,y,z) = -y^3 - 0.5 y + 0.3 z, monotone with M = -0.5 and L = 0.3
Generator cubic_generator() {
  DriverFn fn = [](const EvalPoint&, std::span<const double> y, std::span<const double> z, std::span<double> out) {
    out[0] = -y[0] * y[0] * y[0] - 0.5 * y[0] + 0.3 * z[0];
  };
  return Generator(1, 1, fn, -0.5, 0.3, 1.0);
}

void ac7(Outcome& o) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);

  // linear resolvent, generic inner solve against the exact formula
  const double c = 0.7;
  const Generator lin(1, 1,
                      [c](const EvalPoint&, std::span<const double> y, std::span<const double>, std::span<double> out) {
                        out[0] = -c * y[0];
                      },
                      -c, 0.0, c);
  double lin_err = 0.0;
  for (int j = 0; j < 200; ++j) {
    const double eps = 0.01 + 0.4 * std::abs(g(rng)) / 8.0;
    const double y[1] = {g(rng)}, z[1] = {g(rng)};
    const auto J = yosida_resolvent(lin, {0, 0, 0.0}, y, z, {eps, 1e-13, 200});
    lin_err = std::max(lin_err, std::abs(J[0] - y[0] / (1.0 + eps * c)));
  }
  o.require(lin_err <= 1e-12, "linear resolvent exact to 1e-12");

  // (y - J)/eps against -F(J, z)
  const auto cubic = cubic_generator();
  double cross = 0.0;
  for (int j = 0; j < 200; ++j) {
    const double y[1] = {g(rng)}, z[1] = {g(rng)};
    const EvalPoint pt{0, 0, 0.0};
    const YosidaParams params{0.1, 1e-12, 200};
    const auto J = yosida_resolvent(cubic, pt, y, z, params);
    double fj[1];
    cubic.eval(pt, J, z, fj);
    cross = std::max(cross, std::abs((y[0] - J[0]) / params.epsilon + fj[0]));
    (void)yosida_generator(cubic, pt, y, z, params); // throws on disagreement
  }
  o.require(cross <= 1e-9, "two-formula cross-check to 1e-9");

  // Theta-hat across epsilon on the cubic generator with a bounded claim
  const auto paths = simulate_brownian(TimeGrid::uniform(1.0, 20), 10000, 1, 11);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const auto xi = TerminalVariable::from_paths(paths, 1, [](const PathView& v, std::span<double> out) {
    out[0] = 1.0 + std::sin(v.terminal()[0]);
  });
  YosidaOptions yopts;
  yopts.family_count = 12;
  yopts.family_seed = 77;
  yopts.picard.tol = 1e-12;
  yopts.picard.max_iter = 200;
  std::vector<std::pair<double, double>> theta;
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto r = yosida_sequence(cubic, xi, plan, {eps, 1e-12, 200}, yopts);
    theta.emplace_back(r.theta_hat, r.theta_hat_se);
  }
  bool monotone = true;
  for (std::size_t k = 0; k + 1 < theta.size(); ++k)
    monotone = monotone && theta[k + 1].first <= theta[k].first + std::hypot(theta[k].second, theta[k + 1].second);
  o.require(monotone, "Theta-hat non-increasing within one noise band");

  // eps = 1e-4 against Picard on the linear-market call
  const auto inst = call_instance(20, 20000, 13);
  const auto gen = inst.market.generator();
  auto [pic, rep] = solve_picard(gen, inst.xi, inst.plan);
  YosidaOptions small;
  small.family_count = 0;
  const auto ys = yosida_sequence(gen, inst.xi, inst.plan, {1e-4, 1e-10, 200}, small);
  std::vector<double> v(inst.xi.num_paths());
  const auto disc = discount_factor(inst.market, *inst.paths, 0, inst.paths->num_steps());
  double mean = 0.0, var = 0.0;
  for (std::size_t m = 0; m < v.size(); ++m) mean += (v[m] = disc[m] * inst.xi.at(m)[0]);
  mean /= static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  const double gap = std::abs(ys.solution.Y.at(0, 0)[0] - pic.Y.at(0, 0)[0]);
  o.require(gap <= 2.0 * se, "eps = 1e-4 matches Picard within 2 SE");

  o.detail << "linear " << lin_err << ", cross " << cross << ", Theta-hat";
  for (const auto& [t, s] : theta) o.detail << ' ' << t << "+-" << s;
  o.detail << ", |Y0 eps - Y0 Picard| " << gap << " (2 SE = " << 2.0 * se << ")";
}

void ac8(Outcome& o) {
  DriverFn fn = [](const EvalPoint&, std::span<const double> y, std::span<const double> z, std::span<double> out) {
    out[0] = y[0] + 0.5 * z[0];
  };
  const Generator gen(1, 1, fn, 1.0, 0.5, 1.0);
  const auto paths = simulate_brownian(TimeGrid::uniform(0.5, 50), 20000, 1, 17);
  const RegressionPlan plan(paths, BasisSpec::brownian(paths));
  const auto xi = TerminalVariable::from_paths(paths, 1, [](const PathView& v, std::span<double> out) {
    out[0] = std::max(v.terminal()[0], 0.0) + 1.0;
  });
  PicardOptions direct;
  direct.auto_transform = false;
  direct.tol = 1e-14;
  direct.max_iter = 200;
  PicardOptions transformed = direct;
  transformed.auto_transform = true;
  auto [d, drep] = solve_picard(gen, xi, plan, direct);
  auto [t, trep] = solve_picard(gen, xi, plan, transformed);
  double worst = 0.0;
  for (std::size_t i = 0; i <= paths->num_steps(); i += 10) {
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < paths->num_paths(); ++m) {
      num += std::pow(t.Y.at(i, m)[0] - d.Y.at(i, m)[0], 2);
      den += std::pow(d.Y.at(i, m)[0], 2);
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  o.detail << "alpha " << trep.transform_alpha << ", Y0 " << t.Y.at(0, 0)[0] << " vs direct " << d.Y.at(0, 0)[0]
           << ", worst relative L2 gap " << worst;
  o.require(trep.transform_alpha < 0.0, "transform applied");
  o.require(worst <= 1e-2, "within 1e-2 relative");
}

void ac9(Outcome& o) {
  PricingConfig cfg;
  cfg.ensemble.M = 20000;
  cfg.grid.N = 20;
  cfg.solvers = {"closed_form", "picard", "variational", "yosida"};
  cfg.tolerances.family_size = 4;
  cfg.tolerances.theta_hat = true;
  auto strip = [](nlohmann::ordered_json j) {
    j.erase("timing");
    for (auto& r : j["results"]) r.erase("seconds");
    return j.dump(2);
  };
  const auto a = strip(report_to_json(price_claim(cfg)));
  const auto b = strip(report_to_json(price_claim(cfg)));
  o.require(a == b, "byte-identical reports");

  std::vector<std::vector<bool>> outcomes;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    VerifyOptions vo;
    vo.seed = seed;
    std::vector<bool> row;
    for (const auto& r : verify_suite(vo)) row.push_back(r.passed);
    outcomes.push_back(row);
  }
  bool same = true;
  for (const auto& row : outcomes) same = same && row == outcomes.front();
  std::size_t passing = 0;
  for (bool p : outcomes.front()) passing += p ? 1 : 0;
  o.require(same, "verify outcomes identical across 5 seeds");
  o.detail << "report " << a.size() << " bytes, identical " << (a == b ? "yes" : "no") << "; verify rows passing "
           << passing << "/" << outcomes.front().size() << " for every seed: " << (same ? "yes" : "no");
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > 60.0) {
      o.passed = false;
      o.detail << " [over the 60 s budget]";
    }
    std::printf("%s %s (%.1f s) %s\n", o.passed ? "PASS" : "FAIL", name, secs, o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
