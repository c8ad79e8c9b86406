#pragma once

// Exponential Euler time stepping for the K-mode problem, the spectral
// Galerkin variant, and the coupled Monte Carlo estimators built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/parallel.hpp"
#include "spdelab/problem.hpp"
#include "spdelab/stats.hpp"

namespace spdelab {

class DivergenceRateExceeded : public std::runtime_error {
 public:
  DivergenceRateExceeded(std::size_t aborted, std::size_t samples)
      : std::runtime_error("divergence rate exceeded: " + std::to_string(aborted) + " of " +
                           std::to_string(samples) + " samples aborted"),
        aborted_(aborted) {}
  std::size_t aborted() const noexcept { return aborted_; }

 private:
  std::size_t aborted_;
};

/// Uniform grid t_n = n T/m on [0, T].
class TimeGrid {
 public:
  TimeGrid(double T, Index m) : T_(T), m_(m) {
    detail::require(T > 0.0 && std::isfinite(T), "TimeGrid: T must be positive");
    detail::require(m >= 1, "TimeGrid: m must be >= 1");
  }
  double horizon() const { return T_; }
  Index steps() const { return m_; }
  double tau() const { return T_ / static_cast<double>(m_); }
  double t(Index n) const { return T_ * static_cast<double>(n) / static_cast<double>(m_); }

  /// kappa_m(s) = floor(s/tau) tau, the grid point at or below s.
  double kappa(double s) const {
    detail::require(s >= 0.0 && s <= T_, "kappa: s outside [0, T]");
    const auto n = static_cast<Index>(std::floor(s * static_cast<double>(m_) / T_));
    return t(std::min(n, m_));
  }

  /// Index n with t_n == t (within 1e-12 relative); throws otherwise.
  Index index_of(double t) const {
    const double x = t * static_cast<double>(m_) / T_;
    const double n = std::round(x);
    detail::require(std::abs(x - n) <= 1e-9 && n >= 0 && n <= static_cast<double>(m_),
                    "TimeGrid: t=" + std::to_string(t) + " is not a grid point");
    return static_cast<Index>(n);
  }

 private:
  double T_;
  Index m_;
};

struct SchemePath {
  TimeGrid grid;
  std::vector<SpectralField> states;
};

/// One exponential Euler step X <- E(tau) P_N (X + tau F(X) + G(X) dW).
/// With N = K the projection is skipped, so the Galerkin stepper at full
/// resolution is the plain scheme.
class ExpEulerStepper {
 public:
  ExpEulerStepper(const ProblemSpec& prob, double tau, Index galerkin_modes)
      : prob_(&prob), tau_(tau), N_(galerkin_modes), decay_(prob.K()) {
    detail::require(galerkin_modes >= 1 && galerkin_modes <= prob.K(),
                    "stepper: Galerkin dimension must satisfy 1 <= N <= K");
    for (Index i = 0; i < prob.K(); ++i) decay_[i] = std::exp(-laplacian_eigenvalue(i + 1) * tau);
  }

  Index galerkin_modes() const { return N_; }

  /// Spectral coefficients of G-ready noise from per-mode Brownian increments.
  Vector noise_coeffs(const Vector& dbeta) const {
    Vector w = Vector::Zero(prob_->K());
    const Index kn = prob_->qspec().noise_modes();
    w.head(kn) = prob_->qspec().sqrt_q().cwiseProduct(dbeta.head(kn));
    return w;
  }

  void step(Vector& x, const Vector& dw, Index step_index) const {
    const auto& plan = prob_->plan();
    const auto& nem = prob_->nemytskii();
    const Vector xv = plan.synthesis() * x;
    const Vector wv = plan.synthesis() * dw;
    Vector val(xv.size());
    for (Index j = 0; j < xv.size(); ++j) {
      const double xi = plan.node(j);
      const double fj = nem.f(xi, xv[j]);
      const double gj = nem.g(xi, xv[j]);
      if (!std::isfinite(fj) || !std::isfinite(gj))
        throw EvaluationError("Nemytskii map returned a non-finite value", static_cast<std::size_t>(j));
      val[j] = tau_ * fj + gj * wv[j];
    }
    x.noalias() += plan.analysis() * val;
    if (N_ < x.size()) x.tail(x.size() - N_).setZero();
    x.array() *= decay_.array();
    if (!x.allFinite()) throw DivergenceError("non-finite scheme state", static_cast<std::size_t>(step_index));
  }

 private:
  const ProblemSpec* prob_;
  double tau_;
  Index N_;
  Vector decay_;
};

/// A scheme run on `m` steps with Galerkin dimension `galerkin_modes`.
struct CoupledLevel {
  Index m;
  Index galerkin_modes;
};

/// Marches several schemes on one noise path simultaneously. Each fine
/// Brownian increment is generated once; coarse increments are exact sums
/// of fine ones. After every fine step, observer(level, k, states) is
/// called for each level that just completed its step k (and once per
/// level with k = 0 at the start). Marching stops after `fine_limit` fine
/// steps (default: all).
template <class Observer>
void march_coupled(const ProblemSpec& prob, const NoisePath& noise,
                   std::span<const CoupledLevel> levels, Observer&& observer,
                   std::optional<Index> fine_limit = std::nullopt) {
  detail::require(std::abs(noise.horizon() - prob.horizon()) <= 1e-12 * prob.horizon(),
                  "march: noise horizon differs from problem horizon");
  const Index m_fine = noise.m_fine();
  const Index limit = fine_limit.value_or(m_fine);
  detail::require(limit >= 0 && limit <= m_fine, "march: fine step limit out of range");
  const Index kn = prob.qspec().noise_modes();

  std::vector<ExpEulerStepper> steppers;
  std::vector<Index> ratio;
  std::vector<Vector> states;
  std::vector<Vector> acc;
  for (const auto& lv : levels) {
    detail::require(lv.m >= 1 && m_fine % lv.m == 0,
                    "march: m=" + std::to_string(lv.m) + " must divide m_fine=" + std::to_string(m_fine));
    steppers.emplace_back(prob, prob.horizon() / static_cast<double>(lv.m), lv.galerkin_modes);
    ratio.push_back(m_fine / lv.m);
    Vector x0 = prob.x0().coeffs();
    if (lv.galerkin_modes < prob.K()) x0.tail(prob.K() - lv.galerkin_modes).setZero();
    states.push_back(std::move(x0));
    acc.push_back(Vector::Zero(kn));
  }
  for (std::size_t l = 0; l < levels.size(); ++l) observer(l, Index{0}, std::as_const(states));

  constexpr Index kBlock = 256;
  std::vector<std::size_t> completed;
  for (Index b0 = 0; b0 < limit; b0 += kBlock) {
    const Index b1 = std::min(limit, b0 + kBlock);
    const Matrix block = noise.increment_block(NoiseRole::driving(), kn, b0, b1);
    for (Index n = b0; n < b1; ++n) {
      completed.clear();
      for (std::size_t l = 0; l < levels.size(); ++l) {
        acc[l] += block.col(n - b0);
        if ((n + 1) % ratio[l] == 0) {
          const Index k = (n + 1) / ratio[l];
          steppers[l].step(states[l], steppers[l].noise_coeffs(acc[l]), k);
          acc[l].setZero();
          completed.push_back(l);
        }
      }
      for (auto l : completed) observer(l, (n + 1) / ratio[l], std::as_const(states));
    }
  }
}

namespace detail {

inline SchemePath run_single(const ProblemSpec& prob, const TimeGrid& grid, const NoisePath& noise,
                             Index galerkin_modes) {
  detail::require(noise.m_fine() % grid.steps() == 0,
                  "scheme: noise m_fine must be divisible by the grid step count");
  detail::require(std::abs(grid.horizon() - prob.horizon()) <= 1e-12 * prob.horizon(),
                  "scheme: grid horizon differs from problem horizon");
  SchemePath path{grid, {}};
  path.states.reserve(static_cast<std::size_t>(grid.steps() + 1));
  const CoupledLevel lv{grid.steps(), galerkin_modes};
  march_coupled(prob, noise, std::span<const CoupledLevel>(&lv, 1),
                [&](std::size_t, Index, const std::vector<Vector>& xs) {
                  path.states.emplace_back(xs[0]);
                });
  return path;
}

}  // namespace detail

/// Exponential Euler path on `grid` driven by the coarse view of `noise`.
inline SchemePath exp_euler_path(const ProblemSpec& prob, const TimeGrid& grid, const NoisePath& noise) {
  return detail::run_single(prob, grid, noise, prob.K());
}

/// Spectral Galerkin approximation in span{e_1..e_N}, stepped by the same
/// exponential Euler recursion on `grid`.
inline SchemePath galerkin_path(const ProblemSpec& prob, Index N, const TimeGrid& grid,
                                const NoisePath& noise) {
  detail::require(N >= 1 && N <= prob.K(), "galerkin_path: N must satisfy 1 <= N <= K");
  return detail::run_single(prob, grid, noise, N);
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators.

struct MonteCarloOptions {
  std::uint64_t seed = 0;
  std::uint64_t first_stream = 0;
  unsigned workers = 1;
  double max_abort_fraction = 1e-3;
};

struct ErrorRow {
  double x = 0.0;  // m, N or h
  double error = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

struct ErrorTable {
  std::vector<ErrorRow> rows;
  std::size_t aborted = 0;
};

namespace detail {

inline void check_abort_rate(std::size_t aborted, std::size_t samples, double max_fraction) {
  if (static_cast<double>(aborted) > max_fraction * static_cast<double>(samples))
    throw DivergenceRateExceeded(aborted, samples);
}

inline Vector sobolev_weights(Index K, double r) {
  Vector w(K);
  for (Index i = 0; i < K; ++i) w[i] = r == 0.0 ? 1.0 : eigen_power(i + 1, r);
  return w;
}

/// (E Z^p)^{1/p} from per-sample values Z^p, with a delta-method standard error.
inline ErrorRow pth_moment_row(double x, const std::vector<double>& powered, int p) {
  const auto est = moment_summary(powered, {1}).front();
  ErrorRow row;
  row.x = x;
  row.samples = powered.size();
  row.error = std::pow(est.value, 1.0 / p);
  row.stderr_ = est.value > 0.0 ? est.stderr_ * row.error / (p * est.value) : 0.0;
  return row;
}

}  // namespace detail

/// (E max_{t_k} ||X^m(t_k) - X^{m_ref}(t_k)||_r^p)^{1/p} for each m, the
/// maximum taken over the coarse grid of m and X^{m_ref} computed on the
/// same noise path.
inline ErrorTable coupled_strong_error(const ProblemSpec& prob, std::span<const Index> m_list, Index m_ref,
                                       std::size_t samples, double r, const MonteCarloOptions& opt) {
  detail::require(!m_list.empty() && samples >= 2, "coupled_strong_error: need m values and >= 2 samples");
  for (Index m : m_list)
    detail::require(m >= 1 && m_ref % m == 0,
                    "coupled_strong_error: m=" + std::to_string(m) + " must divide m_ref=" + std::to_string(m_ref));
  const int p = prob.analysis().p;
  const Vector w = detail::sobolev_weights(prob.K(), r);

  std::vector<CoupledLevel> levels{{m_ref, prob.K()}};
  for (Index m : m_list) levels.push_back({m, prob.K()});
  const std::size_t L = m_list.size();

  std::vector<std::vector<double>> per_sample(samples, std::vector<double>(L, 0.0));
  std::vector<char> ok(samples, 1);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m_ref, prob.horizon());
    std::vector<double> worst(L, 0.0);
    try {
      march_coupled(prob, noise, levels, [&](std::size_t l, Index, const std::vector<Vector>& xs) {
        if (l == 0) return;
        const double d = std::sqrt((xs[l] - xs[0]).array().square().matrix().dot(w));
        worst[l - 1] = std::max(worst[l - 1], d);
      });
      for (std::size_t j = 0; j < L; ++j) per_sample[s][j] = std::pow(worst[j], p);
    } catch (const DivergenceError&) {
      ok[s] = 0;
    }
  });

  ErrorTable out;
  for (std::size_t s = 0; s < samples; ++s) out.aborted += ok[s] ? 0 : 1;
  detail::check_abort_rate(out.aborted, samples, opt.max_abort_fraction);
  for (std::size_t j = 0; j < L; ++j) {
    std::vector<double> col;
    for (std::size_t s = 0; s < samples; ++s)
      if (ok[s]) col.push_back(per_sample[s][j]);
    out.rows.push_back(detail::pth_moment_row(static_cast<double>(m_list[j]), col, p));
  }
  return out;
}

struct SampleResult {
  std::vector<double> values;
  std::size_t aborted = 0;
};

/// Samples of sqrt(m) (X^m(t, x) - X^{m_ref}(t, x)), one per noise stream.
inline SampleResult normalized_error_samples(const ProblemSpec& prob, Index m, Index m_ref, double t_eval,
                                             double x_eval, std::size_t samples, const MonteCarloOptions& opt) {
  detail::require(m >= 1 && m_ref % m == 0, "normalized_error_samples: m must divide m_ref");
  detail::require(x_eval > 0.0 && x_eval < 1.0, "normalized_error_samples: x_eval must lie in (0,1)");
  const TimeGrid coarse(prob.horizon(), m);
  const Index k_eval = coarse.index_of(t_eval);
  const Index fine_limit = k_eval * (m_ref / m);
  const std::vector<CoupledLevel> levels{{m, prob.K()}, {m_ref, prob.K()}};

  std::vector<double> vals(samples, 0.0);
  std::vector<char> ok(samples, 1);
  const double scale = std::sqrt(static_cast<double>(m));
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m_ref, prob.horizon());
    Vector xm, xref;
    try {
      march_coupled(
          prob, noise, levels,
          [&](std::size_t l, Index k, const std::vector<Vector>& xs) {
            if (l == 0 && k == k_eval) xm = xs[0];
            if (l == 1 && k == fine_limit) xref = xs[1];
          },
          fine_limit);
      vals[s] = scale * (eval_at(SpectralField(xm), x_eval) - eval_at(SpectralField(xref), x_eval));
    } catch (const DivergenceError&) {
      ok[s] = 0;
    }
  });

  SampleResult out;
  for (std::size_t s = 0; s < samples; ++s) {
    if (ok[s])
      out.values.push_back(vals[s]);
    else
      ++out.aborted;
  }
  detail::check_abort_rate(out.aborted, samples, opt.max_abort_fraction);
  return out;
}

/// (E max_{t_n} ||Y^N(t_n) - X(t_n)||^p)^{1/p} for each N, with Y^N and the
/// K-mode reference X stepped on the same m_fine grid and noise.
inline ErrorTable galerkin_strong_error(const ProblemSpec& prob, std::span<const Index> N_list, Index m_fine,
                                        std::size_t samples, const MonteCarloOptions& opt) {
  detail::require(!N_list.empty() && samples >= 2, "galerkin_strong_error: need N values and >= 2 samples");
  const int p = prob.analysis().p;
  std::vector<CoupledLevel> levels{{m_fine, prob.K()}};
  for (Index N : N_list) {
    detail::require(N >= 1 && N <= prob.K(), "galerkin_strong_error: N must satisfy 1 <= N <= K");
    levels.push_back({m_fine, N});
  }
  const std::size_t L = N_list.size();
  std::vector<std::vector<double>> per_sample(samples, std::vector<double>(L, 0.0));
  std::vector<char> ok(samples, 1);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m_fine, prob.horizon());
    std::vector<double> worst(L, 0.0);
    try {
      march_coupled(prob, noise, levels, [&](std::size_t l, Index, const std::vector<Vector>& xs) {
        if (l == 0) return;
        worst[l - 1] = std::max(worst[l - 1], (xs[l] - xs[0]).norm());
      });
      for (std::size_t j = 0; j < L; ++j) per_sample[s][j] = std::pow(worst[j], p);
    } catch (const DivergenceError&) {
      ok[s] = 0;
    }
  });
  ErrorTable out;
  for (std::size_t s = 0; s < samples; ++s) out.aborted += ok[s] ? 0 : 1;
  detail::check_abort_rate(out.aborted, samples, opt.max_abort_fraction);
  for (std::size_t j = 0; j < L; ++j) {
    std::vector<double> col;
    for (std::size_t s = 0; s < samples; ++s)
      if (ok[s]) col.push_back(per_sample[s][j]);
    out.rows.push_back(detail::pth_moment_row(static_cast<double>(N_list[j]), col, p));
  }
  return out;
}

}  // namespace spdelab
