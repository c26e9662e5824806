#include "bsde/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"
#include "bsde/philox.hpp"

namespace bsde {

// ---------------------------------------------------------------- TimeGrid

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw InvalidArgument("time grid needs at least two points");
  if (times_.front() != 0.0) throw InvalidArgument("time grid must start at 0");
  for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
    if (!(times_[i + 1] > times_[i]))
      throw InvalidArgument("time grid must be strictly increasing");
  }
  if (!std::isfinite(times_.back())) throw InvalidArgument("time grid horizon must be finite");
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t num_steps) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  if (num_steps == 0) throw InvalidArgument("grid needs at least one step");
  std::vector<double> t(num_steps + 1);
  for (std::size_t i = 0; i <= num_steps; ++i)
    t[i] = horizon * static_cast<double>(i) / static_cast<double>(num_steps);
  t.back() = horizon;
  return TimeGrid(std::move(t));
}

// ------------------------------------------------------------ PathEnsemble

PathEnsemble::PathEnsemble(TimeGrid grid, std::size_t num_paths, std::size_t dim,
                           std::uint64_t seed, std::vector<double> increments)
    : grid_(std::move(grid)), num_paths_(num_paths), dim_(dim), seed_(seed),
      increments_(std::move(increments)) {
  if (num_paths_ == 0 || dim_ == 0) throw InvalidArgument("ensemble needs M >= 1 and k >= 1");
  const std::size_t n = grid_.num_steps();
  const std::size_t slab = num_paths_ * dim_;
  if (increments_.size() != n * slab) throw DimensionError("increment buffer has wrong size");
  values_.assign((n + 1) * slab, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* prev = values_.data() + i * slab;
    const double* inc = increments_.data() + i * slab;
    double* next = values_.data() + (i + 1) * slab;
    for (std::size_t j = 0; j < slab; ++j) next[j] = prev[j] + inc[j];
  }
}

PathEnsemble PathEnsemble::perturbed(std::size_t path, std::size_t step, std::size_t component,
                                     double delta) const {
  if (path >= num_paths_ || component >= dim_ || step == 0 || step > num_steps())
    throw RangeError("perturbation index out of range");
  std::vector<double> inc = increments_;
  inc[((step - 1) * num_paths_ + path) * dim_ + component] += delta;
  return PathEnsemble(grid_, num_paths_, dim_, seed_, std::move(inc));
}

bool PathEnsemble::identical(const PathEnsemble& other) const {
  return grid_ == other.grid_ && num_paths_ == other.num_paths_ && dim_ == other.dim_ &&
         seed_ == other.seed_ && increments_ == other.increments_ && values_ == other.values_;
}

void require_same_paths(const PathsPtr& a, const PathsPtr& b, const char* what) {
  if (!a || !b || a != b)
    throw DimensionError(std::string(what) + ": operands live on different ensembles");
}

// -------------------------------------------------------- TerminalVariable

TerminalVariable::TerminalVariable(PathsPtr paths, std::size_t d, std::vector<double> values)
    : paths_(std::move(paths)), d_(d), values_(std::move(values)) {
  if (!paths_) throw DimensionError("terminal variable needs an ensemble");
  if (d_ == 0) throw InvalidArgument("terminal dimension must be positive");
  if (values_.size() != paths_->num_paths() * d_)
    throw DimensionError("terminal variable buffer has wrong size");
  for (double v : values_)
    if (!std::isfinite(v)) throw InvalidArgument("terminal variable has a non-finite entry");
}

TerminalVariable TerminalVariable::constant(PathsPtr paths, std::span<const double> value) {
  const std::size_t m = paths->num_paths();
  std::vector<double> v(m * value.size());
  for (std::size_t p = 0; p < m; ++p) std::copy(value.begin(), value.end(), v.begin() + p * value.size());
  return TerminalVariable(std::move(paths), value.size(), std::move(v));
}

TerminalVariable TerminalVariable::zeros(PathsPtr paths, std::size_t d) {
  const std::size_t m = paths->num_paths();
  return TerminalVariable(std::move(paths), d, std::vector<double>(m * d, 0.0));
}

TerminalVariable TerminalVariable::from_paths(
    PathsPtr paths, std::size_t d, const std::function<void(const PathView&, std::span<double>)>& fn) {
  std::vector<double> v(paths->num_paths() * d, 0.0);
  const PathEnsemble* e = paths.get();
  parallel::for_chunks(e->num_paths(), [&](std::size_t b, std::size_t en) {
    for (std::size_t m = b; m < en; ++m) fn(PathView{e, m}, std::span<double>(v.data() + m * d, d));
  });
  return TerminalVariable(std::move(paths), d, std::move(v));
}

double TerminalVariable::second_moment() const {
  const std::size_t m = num_paths();
  return parallel::sum(m, [&](std::size_t p) {
           double s = 0.0;
           for (double x : at(p)) s += x * x;
           return s;
         }) /
         static_cast<double>(m);
}

// ---------------------------------------------------------- AdaptedProcess

namespace {
std::size_t width_for(const PathsPtr& paths, std::size_t d, Shape shape) {
  return shape == Shape::y_type ? d : d * paths->dim();
}
} // namespace

AdaptedProcess::AdaptedProcess(PathsPtr paths, std::size_t d, Shape shape, std::vector<double> values)
    : paths_(std::move(paths)), d_(d), width_(0), shape_(shape), values_(std::move(values)) {
  if (!paths_) throw DimensionError("adapted process needs an ensemble");
  if (d_ == 0) throw InvalidArgument("process dimension must be positive");
  width_ = width_for(paths_, d_, shape_);
  if (values_.size() != (paths_->num_steps() + 1) * paths_->num_paths() * width_)
    throw DimensionError("adapted process buffer has wrong size");
}

AdaptedProcess AdaptedProcess::zeros(PathsPtr paths, std::size_t d, Shape shape) {
  const std::size_t n = (paths->num_steps() + 1) * paths->num_paths() * width_for(paths, d, shape);
  return AdaptedProcess(std::move(paths), d, shape, std::vector<double>(n, 0.0));
}

AdaptedProcess AdaptedProcess::constant(PathsPtr paths, std::span<const double> value, Shape shape) {
  const std::size_t w = value.size();
  const std::size_t d = shape == Shape::y_type ? w : w / paths->dim();
  if (width_for(paths, d, shape) != w) throw DimensionError("constant has wrong width for shape");
  const std::size_t points = (paths->num_steps() + 1) * paths->num_paths();
  std::vector<double> v(points * w);
  for (std::size_t p = 0; p < points; ++p) std::copy(value.begin(), value.end(), v.begin() + p * w);
  return AdaptedProcess(std::move(paths), d, shape, std::move(v));
}

AdaptedProcess AdaptedProcess::from_brownian(
    PathsPtr paths, std::size_t d, Shape shape,
    const std::function<void(double, std::span<const double>, std::span<double>)>& fn) {
  const std::size_t w = width_for(paths, d, shape);
  const std::size_t m = paths->num_paths();
  std::vector<double> v((paths->num_steps() + 1) * m * w, 0.0);
  const PathEnsemble* e = paths.get();
  for (std::size_t i = 0; i <= e->num_steps(); ++i) {
    const double t = e->grid().time(i);
    parallel::for_chunks(m, [&](std::size_t b, std::size_t en) {
      for (std::size_t p = b; p < en; ++p)
        fn(t, e->w(i, p), std::span<double>(v.data() + (i * m + p) * w, w));
    });
  }
  return AdaptedProcess(std::move(paths), d, shape, std::move(v));
}

AdaptedProcess AdaptedProcess::from_map(
    const AdaptedProcess& source, std::size_t d, Shape shape,
    const std::function<void(std::size_t, std::size_t, std::span<const double>, std::span<double>)>& fn) {
  const std::size_t w = width_for(source.paths(), d, shape);
  const std::size_t m = source.num_paths();
  std::vector<double> v((source.num_steps() + 1) * m * w, 0.0);
  for (std::size_t i = 0; i <= source.num_steps(); ++i) {
    parallel::for_chunks(m, [&](std::size_t b, std::size_t en) {
      for (std::size_t p = b; p < en; ++p)
        fn(i, p, source.at(i, p), std::span<double>(v.data() + (i * m + p) * w, w));
    });
  }
  return AdaptedProcess(source.paths(), d, shape, std::move(v));
}

AdaptedProcess AdaptedProcess::combine(double a, const AdaptedProcess& other, double b) const {
  require_same_paths(paths_, other.paths_, "AdaptedProcess::combine");
  if (width_ != other.width_ || shape_ != other.shape_)
    throw DimensionError("AdaptedProcess::combine: shape mismatch");
  std::vector<double> v(values_.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = a * values_[j] + b * other.values_[j];
  return AdaptedProcess(paths_, d_, shape_, std::move(v));
}

AdaptedProcess AdaptedProcess::scaled(double a) const {
  std::vector<double> v(values_.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = a * values_[j];
  return AdaptedProcess(paths_, d_, shape_, std::move(v));
}

TerminalVariable AdaptedProcess::terminal() const {
  if (shape_ != Shape::y_type) throw DimensionError("terminal slice needs a y-type process");
  const auto s = step_values(num_steps());
  return TerminalVariable(paths_, d_, std::vector<double>(s.begin(), s.end()));
}

// ------------------------------------------------------------ pair structs

ControlPair::ControlPair(TerminalVariable eta_, AdaptedProcess f_)
    : eta(std::move(eta_)), f(std::move(f_)) {
  require_same_paths(eta.paths(), f.paths(), "ControlPair");
  if (f.shape() != Shape::y_type || f.dim() != eta.dim())
    throw DimensionError("ControlPair: driver must be y-type with the terminal's dimension");
}

ControlPair ControlPair::zeros(PathsPtr paths, std::size_t d) {
  return ControlPair(TerminalVariable::zeros(paths, d), AdaptedProcess::zeros(paths, d, Shape::y_type));
}

ControlPair ControlPair::combine(double a, const ControlPair& lhs, double b, const ControlPair& rhs) {
  require_same_paths(lhs.paths(), rhs.paths(), "ControlPair::combine");
  if (lhs.dim() != rhs.dim()) throw DimensionError("ControlPair::combine: dimension mismatch");
  std::vector<double> eta(lhs.eta.values().size());
  for (std::size_t j = 0; j < eta.size(); ++j)
    eta[j] = a * lhs.eta.values()[j] + b * rhs.eta.values()[j];
  return ControlPair(TerminalVariable(lhs.paths(), lhs.dim(), std::move(eta)), lhs.f.combine(a, rhs.f, b));
}

SolutionPair::SolutionPair(AdaptedProcess y, AdaptedProcess z) : Y(std::move(y)), Z(std::move(z)) {
  require_same_paths(Y.paths(), Z.paths(), "SolutionPair");
  if (Y.shape() != Shape::y_type || Z.shape() != Shape::z_type || Y.dim() != Z.dim())
    throw DimensionError("SolutionPair: expects a y-type Y and a z-type Z of equal dimension");
}

// --------------------------------------------------------------- Generator

Generator::Generator(std::size_t d, std::size_t k, DriverFn fn, double mono_M, double lip_L,
                     double growth_gamma, std::function<double(const EvalPoint&)> growth_eta,
                     std::optional<LinearStructure> linear)
    : d_(d), k_(k), fn_(std::move(fn)), mono_M_(mono_M), lip_L_(lip_L), growth_gamma_(growth_gamma),
      growth_eta_(std::move(growth_eta)), linear_(std::move(linear)) {
  if (d_ == 0 || k_ == 0) throw InvalidArgument("generator dimensions must be positive");
  if (!fn_) throw InvalidArgument("generator needs a driver function");
  if (lip_L_ < 0.0) throw InvalidArgument("Lipschitz constant must be non-negative");
  if (!(growth_gamma_ > 0.0)) throw InvalidArgument("growth constant must be positive");
  if (linear_ && linear_->theta.size() != k_)
    throw DimensionError("linear structure theta must have k entries");
}

Generator Generator::zero(std::size_t d, std::size_t k) {
  auto fn = [](const EvalPoint&, std::span<const double>, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  return Generator(d, k, fn, 0.0, 0.0, 1.0, {}, LinearStructure{0.0, std::vector<double>(k, 0.0)});
}

Generator Generator::linear(std::size_t d, double r, std::vector<double> theta) {
  const std::size_t k = theta.size();
  auto fn = [d, k, r, theta](const EvalPoint&, std::span<const double> y, std::span<const double> z,
                             std::span<double> out) {
    for (std::size_t a = 0; a < d; ++a) {
      double zt = 0.0;
      for (std::size_t c = 0; c < k; ++c) zt += z[a * k + c] * theta[c];
      out[a] = -r * y[a] - zt;
    }
  };
  double theta_norm = 0.0;
  for (double x : theta) theta_norm += x * x;
  theta_norm = std::sqrt(theta_norm);
  return Generator(d, k, fn, -r, theta_norm, std::max(std::abs(r), 1e-12), {},
                   LinearStructure{r, std::move(theta)});
}

Generator Generator::with_constants(double mono_M, double lip_L, double growth_gamma) const {
  Generator g = *this;
  g.mono_M_ = mono_M;
  g.lip_L_ = lip_L;
  g.growth_gamma_ = growth_gamma;
  return g;
}

AdaptedProcess apply_generator(const Generator& gen, const AdaptedProcess& Y, const AdaptedProcess& Z) {
  require_same_paths(Y.paths(), Z.paths(), "apply_generator");
  if (Y.dim() != gen.dim() || Z.dim() != gen.dim() || Y.paths()->dim() != gen.noise_dim())
    throw DimensionError("apply_generator: generator and process dimensions disagree");
  const std::size_t d = gen.dim();
  const std::size_t m = Y.num_paths();
  const TimeGrid& grid = Y.grid();
  std::vector<double> v((Y.num_steps() + 1) * m * d, 0.0);
  for (std::size_t i = 0; i <= Y.num_steps(); ++i) {
    const double t = grid.time(i);
    parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p)
        gen.eval(EvalPoint{i, p, t}, Y.at(i, p), Z.at(i, p), std::span<double>(v.data() + (i * m + p) * d, d));
    });
  }
  return AdaptedProcess(Y.paths(), d, Shape::y_type, std::move(v));
}

// ------------------------------------------------------------------ probes

namespace {

struct ProbeDraw {
  EvalPoint pt;
  std::vector<double> y, y2, z, z2;
};

ProbeDraw draw_probe(const Generator& gen, const TimeGrid& grid, const ProbeOptions& o, std::size_t n) {
  const std::size_t d = gen.dim();
  const std::size_t dk = d * gen.noise_dim();
  const double u = philox_uniform(o.seed, n, 0, 0);
  const double up = philox_uniform(o.seed, n, 0, 1);
  const auto step = std::min(grid.num_steps(), static_cast<std::size_t>(u * static_cast<double>(grid.num_steps() + 1)));
  const auto path = std::min(o.num_paths - 1, static_cast<std::size_t>(up * static_cast<double>(o.num_paths)));
  ProbeDraw p{EvalPoint{step, path, grid.time(step)}, std::vector<double>(d), std::vector<double>(d),
              std::vector<double>(dk), std::vector<double>(dk)};
  std::uint32_t c = 0;
  for (auto* vec : {&p.y, &p.y2, &p.z, &p.z2})
    for (double& x : *vec) x = o.scale * philox_normal(o.seed, n, 1, c++);
  return p;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

} // namespace

ProbeResult probe_monotonicity(const Generator& gen, const TimeGrid& grid, const ProbeOptions& o) {
  ProbeResult r;
  const std::size_t d = gen.dim();
  std::vector<double> f1(d), f2(d);
  for (std::size_t n = 0; n < o.probes; ++n) {
    auto p = draw_probe(gen, grid, o, n);
    gen.eval(p.pt, p.y, p.z, f1);
    gen.eval(p.pt, p.y2, p.z, f2);
    double inner = 0.0, dist2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      inner += (f1[a] - f2[a]) * (p.y[a] - p.y2[a]);
      dist2 += (p.y[a] - p.y2[a]) * (p.y[a] - p.y2[a]);
    }
    const double excess = inner - gen.mono_M() * dist2;
    const double rel = excess / std::max(1.0, std::abs(inner));
    r.worst_excess = n == 0 ? rel : std::max(r.worst_excess, rel);
    ++r.probes;
  }
  r.passed = r.worst_excess <= o.tol;
  return r;
}

ProbeResult probe_lipschitz(const Generator& gen, const TimeGrid& grid, const ProbeOptions& o) {
  ProbeResult r;
  const std::size_t d = gen.dim();
  std::vector<double> f1(d), f2(d), diff(d), dz;
  for (std::size_t n = 0; n < o.probes; ++n) {
    auto p = draw_probe(gen, grid, o, n);
    gen.eval(p.pt, p.y, p.z, f1);
    gen.eval(p.pt, p.y, p.z2, f2);
    for (std::size_t a = 0; a < d; ++a) diff[a] = f1[a] - f2[a];
    dz.resize(p.z.size());
    for (std::size_t j = 0; j < dz.size(); ++j) dz[j] = p.z[j] - p.z2[j];
    const double lhs = norm(diff);
    const double excess = (lhs - gen.lip_L() * norm(dz)) / std::max(1.0, lhs);
    r.worst_excess = n == 0 ? excess : std::max(r.worst_excess, excess);
    ++r.probes;
  }
  r.passed = r.worst_excess <= o.tol;
  return r;
}

ProbeResult probe_growth(const Generator& gen, const TimeGrid& grid, const ProbeOptions& o) {
  ProbeResult r;
  const std::size_t d = gen.dim();
  std::vector<double> f(d);
  for (std::size_t n = 0; n < o.probes; ++n) {
    auto p = draw_probe(gen, grid, o, n);
    std::fill(p.z.begin(), p.z.end(), 0.0);
    gen.eval(p.pt, p.y, p.z, f);
    const double lhs = norm(f);
    const double excess = (lhs - gen.growth_eta(p.pt) - gen.growth_gamma() * norm(p.y)) / std::max(1.0, lhs);
    r.worst_excess = n == 0 ? excess : std::max(r.worst_excess, excess);
    ++r.probes;
  }
  r.passed = r.worst_excess <= o.tol;
  return r;
}

ProbeResult probe_linear_structure(const Generator& gen, const TimeGrid& grid, const ProbeOptions& o) {
  ProbeResult r;
  if (!gen.linear_structure()) return r;
  const auto& lin = *gen.linear_structure();
  const std::size_t d = gen.dim();
  const std::size_t k = gen.noise_dim();
  std::vector<double> f(d);
  for (std::size_t n = 0; n < o.probes; ++n) {
    auto p = draw_probe(gen, grid, o, n);
    gen.eval(p.pt, p.y, p.z, f);
    double worst = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      double expect = -lin.r * p.y[a];
      for (std::size_t c = 0; c < k; ++c) expect -= p.z[a * k + c] * lin.theta[c];
      worst = std::max(worst, std::abs(f[a] - expect) / std::max(1.0, std::abs(expect)));
    }
    r.worst_excess = std::max(r.worst_excess, worst);
    ++r.probes;
  }
  r.passed = r.worst_excess <= o.tol;
  return r;
}

// ------------------------------------------------------------------- norms

double time_integral_sq(const AdaptedProcess& p) {
  const std::size_t m = p.num_paths();
  const TimeGrid& grid = p.grid();
  double total = 0.0;
  for (std::size_t i = 0; i < p.num_steps(); ++i) {
    const double dt = grid.dt(i);
    total += dt * parallel::sum(m, [&](std::size_t path) {
               double s = 0.0;
               for (double x : p.at(i, path)) s += x * x;
               return s;
             });
  }
  return total / static_cast<double>(m);
}

double b_norm(const ControlPair& pair) {
  return std::sqrt(pair.eta.second_moment() + time_integral_sq(pair.f));
}

bool in_ball(const ControlPair& pair, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("ball radius must be positive");
  return b_norm(pair) <= radius;
}

} // namespace bsde
