#pragma once

// Domain types shared by every solver: the time grid, the Brownian ensemble,
// terminal variables, adapted processes, control pairs (elements of the space
// of terminal value / driver pairs) and generators.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace bsde {

class TimeGrid {
public:
  /// times must start at 0 and be strictly increasing with a positive horizon.
  explicit TimeGrid(std::vector<double> times);
  static TimeGrid uniform(double horizon, std::size_t num_steps);

  std::size_t num_steps() const noexcept { return times_.size() - 1; }
  double horizon() const noexcept { return times_.back(); }
  double time(std::size_t i) const { return times_.at(i); }
  double dt(std::size_t i) const { return times_.at(i + 1) - times_.at(i); }
  std::span<const double> times() const noexcept { return times_; }

  bool operator==(const TimeGrid&) const = default;

private:
  std::vector<double> times_;
};

/// M simulated k-dimensional Brownian paths. Storage is time-major: the values
/// of all paths at one grid time are contiguous.
class PathEnsemble {
public:
  /// increments holds N*M*k entries laid out as [step][path][component].
  PathEnsemble(TimeGrid grid, std::size_t num_paths, std::size_t dim, std::uint64_t seed,
               std::vector<double> increments);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t num_paths() const noexcept { return num_paths_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_steps() const noexcept { return grid_.num_steps(); }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<const double> w(std::size_t step, std::size_t path) const {
    return {values_.data() + (step * num_paths_ + path) * dim_, dim_};
  }
  std::span<const double> dw(std::size_t step, std::size_t path) const {
    return {increments_.data() + (step * num_paths_ + path) * dim_, dim_};
  }
  std::span<const double> w_step(std::size_t step) const {
    return {values_.data() + step * num_paths_ * dim_, num_paths_ * dim_};
  }
  std::span<const double> dw_step(std::size_t step) const {
    return {increments_.data() + step * num_paths_ * dim_, num_paths_ * dim_};
  }

  /// Copy with W[path][step'] shifted by delta in one component for every
  /// step' >= step (the increment entering `step` absorbs the shift).
  PathEnsemble perturbed(std::size_t path, std::size_t step, std::size_t component,
                         double delta) const;

  /// Bitwise equality of grid, shape, seed and all sampled values.
  bool identical(const PathEnsemble& other) const;

private:
  TimeGrid grid_;
  std::size_t num_paths_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::vector<double> increments_;
  std::vector<double> values_;
};

using PathsPtr = std::shared_ptr<const PathEnsemble>;

/// Read-only view of one path's history, handed to terminal-variable maps.
struct PathView {
  const PathEnsemble* ensemble;
  std::size_t path;

  std::span<const double> w(std::size_t step) const { return ensemble->w(step, path); }
  std::span<const double> terminal() const { return w(ensemble->num_steps()); }
  double time(std::size_t step) const { return ensemble->grid().time(step); }
};

class TerminalVariable {
public:
  /// values holds M*d entries laid out as [path][component].
  TerminalVariable(PathsPtr paths, std::size_t d, std::vector<double> values);

  static TerminalVariable constant(PathsPtr paths, std::span<const double> value);
  static TerminalVariable zeros(PathsPtr paths, std::size_t d);
  /// The value on path m is fn(view of path m, out).
  static TerminalVariable from_paths(PathsPtr paths, std::size_t d,
                                     const std::function<void(const PathView&, std::span<double>)>& fn);

  const PathsPtr& paths() const noexcept { return paths_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t num_paths() const noexcept { return paths_->num_paths(); }
  std::span<const double> at(std::size_t path) const { return {values_.data() + path * d_, d_}; }
  std::span<const double> values() const noexcept { return values_; }

  /// mean over paths of |value|^2
  double second_moment() const;

private:
  PathsPtr paths_;
  std::size_t d_;
  std::vector<double> values_;
};

enum class Shape { y_type, z_type };

/// Process sampled on every grid time of every path. y-type entries are
/// d-vectors; z-type entries are d x k matrices stored row-major.
class AdaptedProcess {
public:
  /// values holds (N+1)*M*width entries laid out as [step][path][entry].
  AdaptedProcess(PathsPtr paths, std::size_t d, Shape shape, std::vector<double> values);

  static AdaptedProcess zeros(PathsPtr paths, std::size_t d, Shape shape);
  static AdaptedProcess constant(PathsPtr paths, std::span<const double> value, Shape shape);
  /// Pointwise map of the time-t_i Brownian value: out = fn(t_i, W_{t_i}).
  static AdaptedProcess from_brownian(
      PathsPtr paths, std::size_t d, Shape shape,
      const std::function<void(double, std::span<const double>, std::span<double>)>& fn);
  /// Pointwise map of the time-t_i value of another adapted process.
  static AdaptedProcess from_map(
      const AdaptedProcess& source, std::size_t d, Shape shape,
      const std::function<void(std::size_t, std::size_t, std::span<const double>,
                               std::span<double>)>& fn);

  const PathsPtr& paths() const noexcept { return paths_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t width() const noexcept { return width_; }
  Shape shape() const noexcept { return shape_; }
  std::size_t num_paths() const noexcept { return paths_->num_paths(); }
  std::size_t num_steps() const noexcept { return paths_->num_steps(); }
  const TimeGrid& grid() const noexcept { return paths_->grid(); }

  std::span<const double> at(std::size_t step, std::size_t path) const {
    return {values_.data() + (step * num_paths() + path) * width_, width_};
  }
  std::span<const double> step_values(std::size_t step) const {
    return {values_.data() + step * num_paths() * width_, num_paths() * width_};
  }
  std::span<const double> values() const noexcept { return values_; }

  /// a*this + b*other
  AdaptedProcess combine(double a, const AdaptedProcess& other, double b) const;
  AdaptedProcess scaled(double a) const;

  /// Terminal slice (step N) as a terminal variable.
  TerminalVariable terminal() const;

private:
  PathsPtr paths_;
  std::size_t d_;
  std::size_t width_;
  Shape shape_;
  std::vector<double> values_;
};

/// An element (eta, f) of the pair space: terminal value plus adapted driver.
struct ControlPair {
  TerminalVariable eta;
  AdaptedProcess f;

  ControlPair(TerminalVariable eta_, AdaptedProcess f_);

  static ControlPair zeros(PathsPtr paths, std::size_t d);
  /// a*lhs + b*rhs
  static ControlPair combine(double a, const ControlPair& lhs, double b, const ControlPair& rhs);
  std::size_t dim() const noexcept { return eta.dim(); }
  const PathsPtr& paths() const noexcept { return eta.paths(); }
};

struct SolutionPair {
  AdaptedProcess Y;
  AdaptedProcess Z;

  SolutionPair(AdaptedProcess y, AdaptedProcess z);
  const PathsPtr& paths() const noexcept { return Y.paths(); }
};

/// Where a generator is evaluated: grid index, path index and time.
struct EvalPoint {
  std::size_t step;
  std::size_t path;
  double t;
};

using DriverFn = std::function<void(const EvalPoint&, std::span<const double> y,
                                    std::span<const double> z, std::span<double> out)>;

/// Coefficients of F(t,y,z) = -r y - z theta.
struct LinearStructure {
  double r = 0.0;
  std::vector<double> theta;
};

/// The generator F(t,y,z) with its structural constants: monotonicity in y
/// (one-sided, squared form), Lipschitz constant in z, and linear growth
/// |F(t,y,0)| <= eta_t + gamma|y|.
class Generator {
public:
  Generator(std::size_t d, std::size_t k, DriverFn fn, double mono_M, double lip_L,
            double growth_gamma, std::function<double(const EvalPoint&)> growth_eta = {},
            std::optional<LinearStructure> linear = std::nullopt);

  static Generator zero(std::size_t d, std::size_t k);
  /// F(t,y,z) = -r y - z theta, componentwise in y.
  static Generator linear(std::size_t d, double r, std::vector<double> theta);

  void eval(const EvalPoint& pt, std::span<const double> y, std::span<const double> z,
            std::span<double> out) const {
    fn_(pt, y, z, out);
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t noise_dim() const noexcept { return k_; }
  double mono_M() const noexcept { return mono_M_; }
  double lip_L() const noexcept { return lip_L_; }
  double growth_gamma() const noexcept { return growth_gamma_; }
  double growth_eta(const EvalPoint& pt) const { return growth_eta_ ? growth_eta_(pt) : 0.0; }
  const std::optional<LinearStructure>& linear_structure() const noexcept { return linear_; }
  const DriverFn& fn() const noexcept { return fn_; }

  /// Copy with different declared constants (the driver itself is shared).
  Generator with_constants(double mono_M, double lip_L, double growth_gamma) const;

private:
  std::size_t d_;
  std::size_t k_;
  DriverFn fn_;
  double mono_M_;
  double lip_L_;
  double growth_gamma_;
  std::function<double(const EvalPoint&)> growth_eta_;
  std::optional<LinearStructure> linear_;
};

/// F(t_i, Y_i, Z_i) on every grid point and path.
AdaptedProcess apply_generator(const Generator& gen, const AdaptedProcess& Y,
                               const AdaptedProcess& Z);

/// Outcome of a sampled structural check on a generator.
struct ProbeResult {
  bool passed = true;
  double worst_excess = 0.0; ///< max of (observed - allowed), <= tol when passed
  std::size_t probes = 0;
};

struct ProbeOptions {
  std::size_t probes = 2000;
  std::uint64_t seed = 7;
  double scale = 2.0;      ///< y and z probes are N(0, scale^2)
  std::size_t num_paths = 1; ///< path indices sampled from [0, num_paths)
  double tol = 1e-9;
};

ProbeResult probe_monotonicity(const Generator& gen, const TimeGrid& grid,
                               const ProbeOptions& opts = {});
ProbeResult probe_lipschitz(const Generator& gen, const TimeGrid& grid,
                            const ProbeOptions& opts = {});
ProbeResult probe_growth(const Generator& gen, const TimeGrid& grid,
                         const ProbeOptions& opts = {});
/// Checks eval(t,y,z) == -r y - z theta when a linear structure is declared.
ProbeResult probe_linear_structure(const Generator& gen, const TimeGrid& grid,
                                   const ProbeOptions& opts = {});

/// sqrt(E|eta|^2 + E sum_i |f_i|^2 dt_i)
double b_norm(const ControlPair& pair);
bool in_ball(const ControlPair& pair, double radius);

/// mean_m sum_{i<N} |P[m][i]|^2 dt_i (left-endpoint time integral of |P|^2).
double time_integral_sq(const AdaptedProcess& p);

void require_same_paths(const PathsPtr& a, const PathsPtr& b, const char* what);

} // namespace bsde
