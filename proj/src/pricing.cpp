#include "bsde/pricing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"
#include "bsde/regression.hpp"
#include "bsde/solvers.hpp"
#include "bsde/variational.hpp"

namespace bsde {

namespace {

using json = nlohmann::json;

const std::set<std::string> kSolvers{"closed_form", "picard", "variational", "yosida"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key \"" + key + "\" in " + where);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

std::size_t count(const json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw ConfigError(where + " must be a non-negative integer");
  return j.get<std::size_t>();
}

/// scalar or array of numbers
std::vector<double> vector_of(const json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a number or a non-empty array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

std::vector<std::vector<double>> matrix_of(const json& j, const std::string& where) {
  if (j.is_number()) return {{j.get<double>()}};
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a number or a matrix (array of rows)");
  std::vector<std::vector<double>> m;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array()) throw ConfigError(where + " rows must be arrays");
    m.push_back(vector_of(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return m;
}

std::string string_of(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

} // namespace

// ------------------------------------------------------------------ config

MarketModel MarketConfig::build() const {
  try {
    return MarketModel(r, b, sigma, theta, s0);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("market: ") + e.what());
  }
}

void PricingConfig::validate() const {
  const MarketModel m = market.build();
  if (!m.complete()) throw ConfigError("market: sigma must be square (one Brownian motion per asset)");
  try {
    m.sigma_transpose_inverse();
  } catch (const Error&) {
    throw ConfigError("market: sigma is singular");
  }
  if (!(grid.T > 0.0) || !std::isfinite(grid.T)) throw ConfigError("grid.T must be positive");
  if (grid.N == 0) throw ConfigError("grid.N must be at least 1");
  if (ensemble.M < 10) throw ConfigError("ensemble.M must be at least 10");
  if (solvers.empty()) throw ConfigError("solvers must list at least one solver");
  std::set<std::string> seen;
  for (const auto& s : solvers) {
    if (!kSolvers.count(s))
      throw ConfigError("unknown solver \"" + s + "\" (expected closed_form, picard, variational or yosida)");
    if (!seen.insert(s).second) throw ConfigError("solver \"" + s + "\" listed twice");
  }
  if (claim.type == ClaimType::custom) {
    if (claim.expression.empty()) throw ConfigError("claim.expression is required for custom claims");
    (void)PayoffExpression(claim.expression, m.num_assets());
  } else {
    if (!claim.expression.empty()) throw ConfigError("claim.expression is only allowed for custom claims");
    if (claim.asset >= m.num_assets()) throw ConfigError("claim.asset out of range");
  }
  if (!std::isfinite(claim.strike)) throw ConfigError("claim.strike must be finite");
  const auto& t = tolerances;
  if (!(t.picard_tol > 0.0)) throw ConfigError("tolerances.picard_tol must be positive");
  if (t.picard_max_iter == 0) throw ConfigError("tolerances.picard_max_iter must be positive");
  if (!(t.yosida_epsilon > 0.0 && t.yosida_epsilon < 1.0))
    throw ConfigError("tolerances.yosida_epsilon must lie in (0, 1)");
  if (!(t.yosida_inner_tol > 0.0)) throw ConfigError("tolerances.yosida_inner_tol must be positive");
  if (t.yosida_max_inner == 0) throw ConfigError("tolerances.yosida_max_inner must be positive");
  if (t.minimizer_max_outer == 0) throw ConfigError("tolerances.minimizer_max_outer must be positive");
  if (t.ridge && !(*t.ridge >= 0.0)) throw ConfigError("tolerances.ridge must be non-negative");
  if (basis_size(m.num_assets(), t.basis_degree) > ensemble.M / 10)
    throw ConfigError("tolerances.basis_degree too large for ensemble.M");
  if (output.format != "json" && output.format != "csv") throw ConfigError("output.format must be json or csv");
}

PricingConfig parse_config(const json& j) {
  check_keys(j, {"schema_version", "market", "claim", "grid", "ensemble", "solvers", "tolerances", "output"},
             "config");
  if (!j.contains("schema_version")) throw ConfigError("schema_version is required");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion)
    throw ConfigError("schema_version must be " + std::to_string(kSchemaVersion));

  PricingConfig c;
  if (j.contains("market")) {
    const json& m = j["market"];
    check_keys(m, {"r", "b", "sigma", "theta", "s0"}, "market");
    if (m.contains("r")) c.market.r = number(m["r"], "market.r");
    if (m.contains("b")) c.market.b = vector_of(m["b"], "market.b");
    if (m.contains("sigma")) c.market.sigma = matrix_of(m["sigma"], "market.sigma");
    if (m.contains("theta")) c.market.theta = vector_of(m["theta"], "market.theta");
    if (m.contains("s0")) c.market.s0 = vector_of(m["s0"], "market.s0");
  }
  if (j.contains("claim")) {
    const json& cl = j["claim"];
    check_keys(cl, {"type", "strike", "asset", "expression"}, "claim");
    if (cl.contains("type")) c.claim.type = claim_type_from_string(string_of(cl["type"], "claim.type"));
    if (cl.contains("strike")) c.claim.strike = number(cl["strike"], "claim.strike");
    if (cl.contains("asset")) c.claim.asset = count(cl["asset"], "claim.asset");
    if (cl.contains("expression")) c.claim.expression = string_of(cl["expression"], "claim.expression");
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"T", "N"}, "grid");
    if (g.contains("T")) c.grid.T = number(g["T"], "grid.T");
    if (g.contains("N")) c.grid.N = count(g["N"], "grid.N");
  }
  if (j.contains("ensemble")) {
    const json& e = j["ensemble"];
    check_keys(e, {"M", "seed"}, "ensemble");
    if (e.contains("M")) c.ensemble.M = count(e["M"], "ensemble.M");
    if (e.contains("seed")) c.ensemble.seed = count(e["seed"], "ensemble.seed");
  }
  if (j.contains("solvers")) {
    const json& s = j["solvers"];
    if (!s.is_array()) throw ConfigError("solvers must be an array of names");
    c.solvers.clear();
    for (const auto& x : s) c.solvers.push_back(string_of(x, "solvers[]"));
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    check_keys(t,
               {"picard_tol", "picard_max_iter", "yosida_epsilon", "yosida_inner_tol", "yosida_max_inner",
                "minimizer_max_outer", "family_size", "basis_degree", "ridge", "theta_hat"},
               "tolerances");
    auto& o = c.tolerances;
    if (t.contains("picard_tol")) o.picard_tol = number(t["picard_tol"], "tolerances.picard_tol");
    if (t.contains("picard_max_iter")) o.picard_max_iter = count(t["picard_max_iter"], "tolerances.picard_max_iter");
    if (t.contains("yosida_epsilon")) o.yosida_epsilon = number(t["yosida_epsilon"], "tolerances.yosida_epsilon");
    if (t.contains("yosida_inner_tol"))
      o.yosida_inner_tol = number(t["yosida_inner_tol"], "tolerances.yosida_inner_tol");
    if (t.contains("yosida_max_inner"))
      o.yosida_max_inner = count(t["yosida_max_inner"], "tolerances.yosida_max_inner");
    if (t.contains("minimizer_max_outer"))
      o.minimizer_max_outer = count(t["minimizer_max_outer"], "tolerances.minimizer_max_outer");
    if (t.contains("family_size")) o.family_size = count(t["family_size"], "tolerances.family_size");
    if (t.contains("basis_degree")) o.basis_degree = count(t["basis_degree"], "tolerances.basis_degree");
    if (t.contains("ridge")) o.ridge = number(t["ridge"], "tolerances.ridge");
    if (t.contains("theta_hat")) {
      if (!t["theta_hat"].is_boolean()) throw ConfigError("tolerances.theta_hat must be a boolean");
      o.theta_hat = t["theta_hat"].get<bool>();
    }
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, {"path", "format"}, "output");
    if (o.contains("path")) c.output.path = string_of(o["path"], "output.path");
    if (o.contains("format")) c.output.format = string_of(o["format"], "output.format");
  }
  return c;
}

PricingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json config_to_json(const PricingConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  auto& m = j["market"];
  m["r"] = c.market.r;
  if (c.market.b) m["b"] = *c.market.b;
  m["sigma"] = c.market.sigma;
  if (c.market.theta) m["theta"] = *c.market.theta;
  m["s0"] = c.market.s0;
  auto& cl = j["claim"];
  cl["type"] = to_string(c.claim.type);
  cl["strike"] = c.claim.strike;
  if (c.claim.type == ClaimType::custom) cl["expression"] = c.claim.expression;
  else cl["asset"] = c.claim.asset;
  j["grid"] = {{"T", c.grid.T}, {"N", c.grid.N}};
  j["ensemble"] = {{"M", c.ensemble.M}, {"seed", c.ensemble.seed}};
  j["solvers"] = c.solvers;
  auto& t = j["tolerances"];
  const auto& o = c.tolerances;
  t["picard_tol"] = o.picard_tol;
  t["picard_max_iter"] = o.picard_max_iter;
  t["yosida_epsilon"] = o.yosida_epsilon;
  t["yosida_inner_tol"] = o.yosida_inner_tol;
  t["yosida_max_inner"] = o.yosida_max_inner;
  t["minimizer_max_outer"] = o.minimizer_max_outer;
  t["family_size"] = o.family_size;
  t["basis_degree"] = o.basis_degree;
  if (o.ridge) t["ridge"] = *o.ridge;
  t["theta_hat"] = o.theta_hat;
  auto& out = j["output"];
  if (c.output.path) out["path"] = *c.output.path;
  out["format"] = c.output.format;
  return j;
}

// ----------------------------------------------------------------- pricing

namespace {

/// Standard error of mean_m(xi + sum_i f_i dt_i), which equals Y_0 exactly.
double scheme_std_err(const TerminalVariable& xi, const AdaptedProcess& f) {
  const std::size_t m = xi.num_paths();
  const TimeGrid& grid = f.grid();
  std::vector<double> q(m);
  for (std::size_t p = 0; p < m; ++p) {
    double s = xi.at(p)[0];
    for (std::size_t i = 0; i < grid.num_steps(); ++i) s += f.at(i, p)[0] * grid.dt(i);
    q[p] = s;
  }
  const double mean = parallel::sum(m, [&](std::size_t p) { return q[p]; }) / static_cast<double>(m);
  const double var = parallel::sum(m, [&](std::size_t p) { return (q[p] - mean) * (q[p] - mean); }) /
                     static_cast<double>(m - 1);
  return std::sqrt(var / static_cast<double>(m));
}

/// Mean-zero shift alpha making M + L^2/2 <= 0, or 0 when none is needed.
double transform_shift(const Generator& gen) {
  const double excess = gen.mono_M() + 0.5 * gen.lip_L() * gen.lip_L();
  return excess > 0.0 ? -excess : 0.0;
}

/// E-hat at (xi, F(Y, Z)), evaluated in transformed variables when the
/// generator needs the exponential change of variables.
Estimate e_hat_at(const SolutionPair& sol, const TerminalVariable& xi, const Generator& gen,
                  const RegressionPlan& plan, std::size_t family, std::uint64_t seed) {
  const double alpha = transform_shift(gen);
  if (alpha == 0.0) {
    ControlPair pair(xi, apply_generator(gen, sol.Y, sol.Z));
    const auto fam = build_candidates(pair, xi, gen, default_radius(gen, xi), family, seed, plan);
    const auto sup = eval_E_sup(pair, xi, gen, fam, plan);
    return {sup.value, sup.se};
  }
  auto [tgen, txi] = exp_transform(gen, xi, alpha);
  const SolutionPair tsol = undo_exp_transform(sol, -alpha);
  ControlPair pair(txi, apply_generator(tgen, tsol.Y, tsol.Z));
  const auto fam = build_candidates(pair, txi, tgen, default_radius(tgen, txi), family, seed, plan);
  const auto sup = eval_E_sup(pair, txi, tgen, fam, plan);
  return {sup.value, sup.se};
}

void fill_diagnostics(SolverRun& run, const MarketModel& market, const SolutionPair& sol,
                      const TerminalVariable& xi, const Generator& gen, const RegressionPlan& plan,
                      const PricingConfig& cfg) {
  run.price = sol.Y.at(0, 0)[0];
  const auto hedge = hedge_portfolio(market, sol);
  const auto h0 = hedge.at(0, 0);
  run.hedge0.assign(h0.begin(), h0.end());
  run.delta0.resize(run.hedge0.size());
  for (std::size_t a = 0; a < run.hedge0.size(); ++a) run.delta0[a] = run.hedge0[a] / market.s0()[a];
  ControlPair pair(xi, apply_generator(gen, sol.Y, sol.Z));
  run.diag_driver_match = driver_match_residual(pair, gen, plan);
  run.diag_energy = energy_identity(pair, ControlPair::zeros(xi.paths(), 1), plan).residual;
  const auto e = e_hat_at(sol, xi, gen, plan, cfg.tolerances.family_size, cfg.ensemble.seed ^ 0xE11A7ULL);
  run.diag_E = e.value;
  run.diag_E_se = e.se;
  if (run.std_err == 0.0) run.std_err = scheme_std_err(xi, pair.f);
}

} // namespace

PricingReport price_claim(const PricingConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  PricingReport rep;
  rep.config = cfg;

  const MarketModel market = cfg.market.build();
  const TimeGrid grid = TimeGrid::uniform(cfg.grid.T, cfg.grid.N);
  const PathsPtr paths = simulate_brownian(grid, cfg.ensemble.M, market.noise_dim(), cfg.ensemble.seed);
  AdaptedProcess assets = simulate_assets(market, paths);
  const TerminalVariable xi = make_terminal(cfg.claim, assets);
  rep.seconds_simulation = elapsed(t_start);

  const std::size_t negative =
      static_cast<std::size_t>(std::count_if(xi.values().begin(), xi.values().end(), [](double v) { return v < 0.0; }));
  if (negative > 0)
    rep.warnings.push_back("payoff is negative on " + std::to_string(negative) + " of " + std::to_string(xi.num_paths()) +
                           " paths; claims are expected to be non-negative");

  const auto t_plan = std::chrono::steady_clock::now();
  BasisSpec basis = BasisSpec::on_process(std::move(assets), cfg.tolerances.basis_degree);
  basis.ridge = cfg.tolerances.ridge;
  const RegressionPlan plan(paths, basis);
  rep.seconds_regression = elapsed(t_plan);

  const Generator gen = market.generator(1);
  const auto& tol = cfg.tolerances;
  PicardOptions popts;
  popts.tol = tol.picard_tol;
  popts.max_iter = tol.picard_max_iter;

  for (const auto& name : cfg.solvers) {
    const auto t0 = std::chrono::steady_clock::now();
    SolverRun run;
    run.solver = name;
    if (name == "closed_form") {
      const SolutionPair sol = solve_linear_closed_form(market, xi, plan);
      const auto disc = discount_factor(market, *paths, 0, grid.num_steps());
      std::vector<double> v(disc.size());
      for (std::size_t p = 0; p < v.size(); ++p) v[p] = disc[p] * xi.at(p)[0];
      const double mean = parallel::sum(v.size(), [&](std::size_t p) { return v[p]; }) / static_cast<double>(v.size());
      const double var = parallel::sum(v.size(), [&](std::size_t p) { return (v[p] - mean) * (v[p] - mean); }) /
                         static_cast<double>(v.size() - 1);
      run.std_err = std::sqrt(var / static_cast<double>(v.size()));
      fill_diagnostics(run, market, sol, xi, gen, plan, cfg);
    } else if (name == "picard") {
      auto [sol, report] = solve_picard(gen, xi, plan, popts);
      run.trace = report.residuals;
      run.iterations = report.iterations;
      run.transform_alpha = report.transform_alpha;
      fill_diagnostics(run, market, sol, xi, gen, plan, cfg);
    } else if (name == "variational") {
      MinimizerConfig mcfg;
      mcfg.max_outer = tol.minimizer_max_outer;
      mcfg.family_count = tol.family_size;
      mcfg.family_seed = cfg.ensemble.seed ^ 0xF00DULL;
      const double alpha = transform_shift(gen);
      auto [tgen, txi] = exp_transform(gen, xi, alpha);
      const auto res = minimize_E(txi, tgen, AdaptedProcess::zeros(paths, 1, Shape::y_type), mcfg, plan);
      const SolutionPair sol = undo_exp_transform(res.solution, alpha);
      run.trace = res.trace.e_hat;
      run.iterations = res.trace.outer;
      run.transform_alpha = alpha;
      run.std_err = scheme_std_err(txi, res.pair.f); // Y~_0 = Y_0
      fill_diagnostics(run, market, sol, xi, gen, plan, cfg);
    } else if (name == "yosida") {
      YosidaParams params{tol.yosida_epsilon, tol.yosida_inner_tol, tol.yosida_max_inner};
      YosidaOptions yopts;
      yopts.picard = popts;
      yopts.family_count = tol.theta_hat ? tol.family_size : 0;
      yopts.family_seed = cfg.ensemble.seed ^ 0x7E7AULL;
      const auto res = yosida_sequence(gen, xi, plan, params, yopts);
      run.trace = res.picard.residuals;
      run.iterations = res.picard.iterations;
      run.transform_alpha = res.picard.transform_alpha;
      run.std_err = scheme_std_err(xi, res.pair.f);
      if (tol.theta_hat) {
        run.theta_hat = res.theta_hat;
        run.theta_hat_se = res.theta_hat_se;
      }
      fill_diagnostics(run, market, res.solution, xi, gen, plan, cfg);
    }
    run.seconds = elapsed(t0);
    rep.runs.push_back(std::move(run));
  }

  for (std::size_t a = 0; a < rep.runs.size(); ++a)
    for (std::size_t b = a + 1; b < rep.runs.size(); ++b) {
      const auto& x = rep.runs[a];
      const auto& y = rep.runs[b];
      rep.cross.push_back({x.solver, y.solver, x.price - y.price, std::hypot(x.std_err, y.std_err)});
    }
  rep.seconds_total = elapsed(t_start);
  return rep;
}

// ------------------------------------------------------------------ output

nlohmann::ordered_json report_to_json(const PricingReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = config_to_json(r.config);
  j["notes"] = {"diag_E is the maximum of the functional over a finite candidate family and is therefore a lower "
                "bound on the functional itself"};
  j["warnings"] = r.warnings;
  auto& results = j["results"];
  results = nlohmann::ordered_json::array();
  for (const auto& run : r.runs) {
    nlohmann::ordered_json o;
    o["solver"] = run.solver;
    o["price"] = run.price;
    o["std_err"] = run.std_err;
    o["hedge0"] = run.hedge0;
    o["delta0"] = run.delta0;
    auto& d = o["diagnostics"];
    d["E_hat"] = run.diag_E;
    d["E_hat_se"] = run.diag_E_se;
    d["energy_residual"] = run.diag_energy;
    d["driver_match"] = run.diag_driver_match;
    d["iterations"] = run.iterations;
    d["trace"] = run.trace;
    d["transform_alpha"] = run.transform_alpha;
    if (run.theta_hat) {
      d["theta_hat"] = *run.theta_hat;
      d["theta_hat_se"] = *run.theta_hat_se;
    }
    o["seconds"] = run.seconds;
    results.push_back(std::move(o));
  }
  auto& cross = j["cross_solver"];
  cross = nlohmann::ordered_json::array();
  for (const auto& c : r.cross)
    cross.push_back(nlohmann::ordered_json{{"a", c.a}, {"b", c.b}, {"delta", c.delta}, {"combined_se", c.combined_se}});
  j["timing"] = {{"simulation", r.seconds_simulation},
                 {"regression_plan", r.seconds_regression},
                 {"total", r.seconds_total}};
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

std::string report_to_csv(const PricingReport& r) {
  std::ostringstream os;
  os << "solver,price,std_err,hedge0,diag_E,diag_energy,diag_driver_match,seconds\r\n";
  for (const auto& run : r.runs) {
    std::string hedge;
    for (std::size_t i = 0; i < run.hedge0.size(); ++i) hedge += (i ? ";" : "") + num(run.hedge0[i]);
    os << csv_field(run.solver) << ',' << num(run.price) << ',' << num(run.std_err) << ',' << csv_field(hedge) << ','
       << num(run.diag_E) << ',' << num(run.diag_energy) << ',' << num(run.diag_driver_match) << ','
       << num(run.seconds) << "\r\n";
  }
  return os.str();
}

} // namespace bsde
