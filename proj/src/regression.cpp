#include "bsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsde/error.hpp"
#include "bsde/parallel.hpp"

namespace bsde {

BasisSpec BasisSpec::brownian(const PathsPtr& paths, std::size_t degree) {
  auto state = AdaptedProcess::from_brownian(
      paths, paths->dim(), Shape::y_type,
      [](double, std::span<const double> w, std::span<double> out) { std::copy(w.begin(), w.end(), out.begin()); });
  return BasisSpec{std::make_shared<const AdaptedProcess>(std::move(state)), degree, std::nullopt};
}

BasisSpec BasisSpec::on_process(AdaptedProcess state, std::size_t degree) {
  if (state.shape() != Shape::y_type) throw DimensionError("regression state must be y-type");
  return BasisSpec{std::make_shared<const AdaptedProcess>(std::move(state)), degree, std::nullopt};
}

std::size_t basis_size(std::size_t dim, std::size_t degree) {
  // C(dim + degree, degree)
  std::size_t c = 1;
  for (std::size_t j = 1; j <= degree; ++j) c = c * (dim + j) / j;
  return c;
}

namespace {

void enumerate_exponents(std::size_t dim, std::size_t degree, std::vector<unsigned>& cur, std::size_t pos,
                         std::size_t budget, std::vector<std::vector<unsigned>>& out) {
  if (pos == dim) {
    out.push_back(cur);
    return;
  }
  for (std::size_t e = 0; e <= budget; ++e) {
    cur[pos] = static_cast<unsigned>(e);
    enumerate_exponents(dim, degree, cur, pos + 1, budget - e, out);
  }
  cur[pos] = 0;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

StepRegressor::StepRegressor(std::span<const double> state, std::size_t num_paths, std::size_t state_dim,
                             std::size_t degree, double ridge, std::span<const double> noise,
                             std::size_t noise_dim)
    : state_(state), noise_(noise), num_paths_(num_paths), state_dim_(state_dim), noise_dim_(noise_dim) {
  if (num_paths_ == 0) throw InvalidArgument("regression needs at least one path");
  if (state_.size() != num_paths_ * state_dim_) throw DimensionError("regression state has wrong size");
  if (noise_dim_ > 0 && noise_.size() != num_paths_ * noise_dim_)
    throw DimensionError("regression noise has wrong size");
  if (ridge < 0.0) throw InvalidArgument("ridge parameter must be non-negative");

  // Standardize each state component; components without spread carry no
  // information beyond the constant and are dropped.
  const double inv_m = 1.0 / static_cast<double>(num_paths_);
  for (std::size_t s = 0; s < state_dim_; ++s) {
    const double mu = parallel::sum(num_paths_, [&](std::size_t m) { return state_[m * state_dim_ + s]; }) * inv_m;
    const double var = parallel::sum(num_paths_, [&](std::size_t m) {
                         const double x = state_[m * state_dim_ + s] - mu;
                         return x * x;
                       }) * inv_m;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(mu))) {
      active_.push_back(s);
      mean_.push_back(mu);
      scale_.push_back(1.0 / sd);
    }
  }
  std::vector<unsigned> cur(active_.size(), 0);
  enumerate_exponents(active_.size(), degree, cur, 0, degree, exponents_);
  // constant first
  std::stable_sort(exponents_.begin(), exponents_.end(), [](const auto& a, const auto& b) {
    unsigned sa = 0, sb = 0;
    for (unsigned e : a) sa += e;
    for (unsigned e : b) sb += e;
    return sa < sb;
  });
  max_degree_ = active_.empty() ? 0 : degree;

  const std::size_t J = num_features();
  if (J > std::max<std::size_t>(1, num_paths_ / 10))
    throw InvalidArgument("regression basis has " + std::to_string(J) + " functions, more than M/10 for M = " +
                          std::to_string(num_paths_));

  // Gram matrix with a fixed chunk order.
  const std::size_t chunks = parallel::num_chunks(num_paths_);
  std::vector<Eigen::MatrixXd> partial(chunks, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J)));
  parallel::for_chunks(num_paths_, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd phi(static_cast<Eigen::Index>(J));
    Eigen::MatrixXd& g = partial[b / parallel::kChunk];
    for (std::size_t m = b; m < e; ++m) {
      features(m, std::span<double>(phi.data(), J));
      g.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    }
  });
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
  for (const auto& g : partial) gram += g;
  gram = gram.selfadjointView<Eigen::Lower>();

  const std::size_t per_state = std::max<std::size_t>(noise_dim_, 1);
  for (std::size_t j = per_state; j < J; ++j) gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += ridge;

  const auto I = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const auto pivots = ldlt.vectorD().cwiseAbs();
  const bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && pivots.minCoeff() > 1e-13 * pivots.maxCoeff() &&
                  ldlt.rcond() > 1e-13;
  if (ok) {
    solve_ = ldlt.solve(I);
  } else if (ridge == 0.0) {
    throw SingularRegression("rank-deficient regression design with zero ridge; set a positive ridge");
  } else {
    solve_ = gram.completeOrthogonalDecomposition().pseudoInverse();
  }
}

void StepRegressor::state_features(std::size_t path, std::span<double> out) const {
  const std::size_t a = active_.size();
  // powers[s][e] = x_s^e
  double powers[16][16];
  double* pw = &powers[0][0];
  std::vector<double> heap;
  if (a > 16 || max_degree_ >= 16) {
    heap.assign(a * (max_degree_ + 1), 0.0);
    pw = heap.data();
  }
  const std::size_t stride = (a > 16 || max_degree_ >= 16) ? max_degree_ + 1 : 16;
  for (std::size_t s = 0; s < a; ++s) {
    const double x = (state_[path * state_dim_ + active_[s]] - mean_[s]) * scale_[s];
    pw[s * stride] = 1.0;
    for (std::size_t e = 1; e <= max_degree_; ++e) pw[s * stride + e] = pw[s * stride + e - 1] * x;
  }
  for (std::size_t j = 0; j < exponents_.size(); ++j) {
    double v = 1.0;
    for (std::size_t s = 0; s < a; ++s) v *= pw[s * stride + exponents_[j][s]];
    out[j] = v;
  }
}

void StepRegressor::features(std::size_t path, std::span<double> out) const {
  if (noise_dim_ == 0) {
    state_features(path, out);
    return;
  }
  const std::size_t J = exponents_.size();
  double local[64];
  std::vector<double> heap;
  double* phi = local;
  if (J > 64) {
    heap.resize(J);
    phi = heap.data();
  }
  state_features(path, std::span<double>(phi, J));
  const double* dw = noise_.data() + path * noise_dim_;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t c = 0; c < noise_dim_; ++c) out[j * noise_dim_ + c] = phi[j] * dw[c];
}

Eigen::MatrixXd StepRegressor::fit(std::span<const double> targets, std::size_t width) const {
  if (targets.size() != num_paths_ * width) throw DimensionError("regression target has wrong size");
  for (double t : targets)
    if (!std::isfinite(t)) throw InvalidArgument("regression target has a non-finite entry");
  const auto J = static_cast<Eigen::Index>(num_features());
  const auto W = static_cast<Eigen::Index>(width);
  const std::size_t chunks = parallel::num_chunks(num_paths_);
  std::vector<Eigen::MatrixXd> partial(chunks, Eigen::MatrixXd::Zero(J, W));
  parallel::for_chunks(num_paths_, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd phi(J);
    Eigen::MatrixXd& acc = partial[b / parallel::kChunk];
    for (std::size_t m = b; m < e; ++m) {
      features(m, std::span<double>(phi.data(), static_cast<std::size_t>(J)));
      const Eigen::Map<const Eigen::RowVectorXd> t(targets.data() + m * width, W);
      acc.noalias() += phi * t;
    }
  });
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(J, W);
  for (const auto& p : partial) rhs += p;
  return solve_ * rhs;
}

std::vector<double> StepRegressor::predict(const Eigen::MatrixXd& beta) const {
  const std::size_t J = exponents_.size();
  if (noise_dim_ != 0 || static_cast<std::size_t>(beta.rows()) != J)
    throw DimensionError("predict expects value-basis coefficients");
  const std::size_t width = static_cast<std::size_t>(beta.cols());
  std::vector<double> out(num_paths_ * width);
  parallel::for_chunks(num_paths_, [&](std::size_t b, std::size_t e) {
    Eigen::RowVectorXd phi(static_cast<Eigen::Index>(J));
    for (std::size_t m = b; m < e; ++m) {
      state_features(m, std::span<double>(phi.data(), J));
      Eigen::Map<Eigen::RowVectorXd> o(out.data() + m * width, static_cast<Eigen::Index>(width));
      o.noalias() = phi * beta;
    }
  });
  return out;
}

std::vector<double> StepRegressor::predict_noise_loadings(const Eigen::MatrixXd& beta) const {
  const std::size_t J = exponents_.size();
  const std::size_t k = noise_dim_;
  if (k == 0 || static_cast<std::size_t>(beta.rows()) != J * k)
    throw DimensionError("predict_noise_loadings expects noise-basis coefficients");
  const std::size_t d = static_cast<std::size_t>(beta.cols());
  std::vector<double> out(num_paths_ * d * k, 0.0);
  parallel::for_chunks(num_paths_, [&](std::size_t b, std::size_t e) {
    std::vector<double> phi(J);
    for (std::size_t m = b; m < e; ++m) {
      state_features(m, phi);
      double* o = out.data() + m * d * k;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t c = 0; c < k; ++c) {
          double v = 0.0;
          for (std::size_t j = 0; j < J; ++j)
            v += phi[j] * beta(static_cast<Eigen::Index>(j * k + c), static_cast<Eigen::Index>(a));
          o[a * k + c] = v;
        }
    }
  });
  return out;
}

// ---------------------------------------------------------- RegressionPlan

RegressionPlan::RegressionPlan(PathsPtr paths, BasisSpec basis) : paths_(std::move(paths)), basis_(std::move(basis)) {
  if (!basis_.state) throw InvalidArgument("basis has no state process");
  require_same_paths(paths_, basis_.state->paths(), "RegressionPlan");
  const std::size_t m = paths_->num_paths();
  const std::size_t k = paths_->dim();
  const std::size_t s = basis_.state->width();
  const double ridge = basis_.ridge_for(m);
  value_.reserve(paths_->num_steps());
  noise_.reserve(paths_->num_steps());
  cross_.reserve(paths_->num_steps());
  for (std::size_t i = 0; i < paths_->num_steps(); ++i) {
    const auto st = basis_.state->step_values(i);
    value_.emplace_back(st, m, s, basis_.degree, ridge);
    noise_.emplace_back(st, m, s, basis_.degree, ridge * paths_->grid().dt(i), paths_->dw_step(i), k);

    const StepRegressor& reg = value_.back();
    const std::size_t J = reg.num_state_features();
    const auto dw = paths_->dw_step(i);
    std::vector<double> feats(m * J);
    parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) reg.state_features(p, std::span<double>(feats.data() + p * J, J));
    });
    std::vector<std::vector<double>> partial(parallel::num_chunks(m), std::vector<double>(J * k * J, 0.0));
    parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
      auto& acc = partial[b / parallel::kChunk];
      for (std::size_t p = b; p < e; ++p) {
        const double* phi = feats.data() + p * J;
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t c = 0; c < k; ++c) {
            const double u = phi[j] * dw[p * k + c];
            double* row = acc.data() + (j * k + c) * J;
            for (std::size_t l = 0; l < J; ++l) row[l] += u * phi[l];
          }
      }
    });
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J * k), static_cast<Eigen::Index>(J));
    for (const auto& acc : partial)
      for (std::size_t r = 0; r < J * k; ++r)
        for (std::size_t l = 0; l < J; ++l)
          x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) += acc[r * J + l];
    cross_.push_back(std::move(x));
    phi_.push_back(std::move(feats));
  }
}

RegressionPlan::StepResult RegressionPlan::backward_step(std::size_t step, std::span<const double> y_next,
                                                         std::span<const double> f, std::size_t d) const {
  const double dt = paths_->grid().dt(step);
  if (!(dt > 0.0)) throw DegenerateStep("martingale_z: zero-length step");
  const std::size_t m = paths_->num_paths();
  const std::size_t k = paths_->dim();
  if (y_next.size() != m * d || (!f.empty() && f.size() != m * d))
    throw DimensionError("backward_step: target has wrong size");
  for (double t : y_next)
    if (!std::isfinite(t)) throw InvalidArgument("regression target has a non-finite entry");
  for (double t : f)
    if (!std::isfinite(t)) throw InvalidArgument("regression target has a non-finite entry");
  const StepRegressor& reg = value_.at(step);
  const std::size_t J = reg.num_state_features();
  const auto dw = paths_->dw_step(step);
  const bool has_f = !f.empty();

  // moments: [Phi^T y | Phi^T f | (Phi dW)^T y]
  const std::size_t ny = J * d, nf = J * d, nb = J * k * d;
  std::vector<std::vector<double>> partial(parallel::num_chunks(m), std::vector<double>(ny + nf + nb, 0.0));
  const std::vector<double>& feats = phi_.at(step);
  parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
    double* ay = partial[b / parallel::kChunk].data();
    double* af = ay + ny;
    double* ab = af + nf;
    for (std::size_t p = b; p < e; ++p) {
      const double* phi = feats.data() + p * J;
      const double* yp = y_next.data() + p * d;
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t a = 0; a < d; ++a) ay[j * d + a] += phi[j] * yp[a];
        if (has_f)
          for (std::size_t a = 0; a < d; ++a) af[j * d + a] += phi[j] * f[p * d + a];
        for (std::size_t c = 0; c < k; ++c) {
          const double u = phi[j] * dw[p * k + c];
          for (std::size_t a = 0; a < d; ++a) ab[(j * k + c) * d + a] += u * yp[a];
        }
      }
    }
  });
  const auto Ji = static_cast<Eigen::Index>(J), di = static_cast<Eigen::Index>(d);
  const auto Jk = static_cast<Eigen::Index>(J * k);
  Eigen::MatrixXd ay = Eigen::MatrixXd::Zero(Ji, di), af = Eigen::MatrixXd::Zero(Ji, di),
                  ab = Eigen::MatrixXd::Zero(Jk, di);
  for (const auto& part : partial) {
    for (std::size_t r = 0; r < J; ++r)
      for (std::size_t a = 0; a < d; ++a) {
        ay(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) += part[r * d + a];
        af(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) += part[ny + r * d + a];
      }
    for (std::size_t r = 0; r < J * k; ++r)
      for (std::size_t a = 0; a < d; ++a)
        ab(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) += part[ny + nf + r * d + a];
  }
  const Eigen::MatrixXd beta_y = reg.inverse_gram() * ay;
  const Eigen::MatrixXd beta_t = reg.inverse_gram() * (ay + dt * af);
  // noise regression of the centered target y - phi^T beta_y
  const Eigen::MatrixXd gamma = noise_.at(step).inverse_gram() * (ab - cross_.at(step) * beta_y);

  StepResult out{std::vector<double>(m * d), std::vector<double>(m * d * k)};
  parallel::for_chunks(m, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const double* phi = feats.data() + p * J;
      for (std::size_t a = 0; a < d; ++a) {
        double v = 0.0;
        for (std::size_t j = 0; j < J; ++j) v += phi[j] * beta_t(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a));
        out.y[p * d + a] = v;
        for (std::size_t c = 0; c < k; ++c) {
          double w = 0.0;
          for (std::size_t j = 0; j < J; ++j)
            w += phi[j] * gamma(static_cast<Eigen::Index>(j * k + c), static_cast<Eigen::Index>(a));
          out.z[(p * d + a) * k + c] = w;
        }
      }
    }
  });
  return out;
}

std::vector<double> RegressionPlan::cond_expect(std::size_t step, std::span<const double> target,
                                                std::size_t width) const {
  const auto& reg = value_.at(step);
  return reg.predict(reg.fit(target, width));
}

std::vector<double> RegressionPlan::martingale_z(std::size_t step, std::span<const double> y_next,
                                                 std::size_t d) const {
  // Removing the conditional mean first leaves the estimand unchanged and
  // cuts the estimator variance from O(|y|^2 / dt) to O(|z|^2).
  return backward_step(step, y_next, {}, d).z;
}

std::vector<double> cond_expect(std::span<const double> target, std::size_t width, const BasisSpec& basis,
                                std::size_t step) {
  if (!basis.state) throw InvalidArgument("basis has no state process");
  const std::size_t m = basis.state->num_paths();
  StepRegressor reg(basis.state->step_values(step), m, basis.state->width(), basis.degree, basis.ridge_for(m));
  return reg.predict(reg.fit(target, width));
}

std::vector<double> martingale_z(std::span<const double> y_next, std::size_t d, std::span<const double> dw,
                                 std::size_t k, double dt, const BasisSpec& basis, std::size_t step) {
  if (!(dt > 0.0)) throw DegenerateStep("martingale_z: zero-length step");
  if (!basis.state) throw InvalidArgument("basis has no state process");
  const std::size_t m = basis.state->num_paths();
  const double ridge = basis.ridge_for(m);
  const auto mean = cond_expect(y_next, d, basis, step);
  std::vector<double> centered(y_next.size());
  for (std::size_t j = 0; j < centered.size(); ++j) centered[j] = y_next[j] - mean[j];
  StepRegressor reg(basis.state->step_values(step), m, basis.state->width(), basis.degree, ridge * dt, dw, k);
  return reg.predict_noise_loadings(reg.fit(centered, d));
}

} // namespace bsde
