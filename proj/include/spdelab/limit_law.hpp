#pragma once

// Simulators for the limit laws of the normalized exponential Euler error:
// the linear SPDE for U driven by W and the auxiliary family {W~_l}, and
// its finite-dimensional counterpart M.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdelab/parallel.hpp"
#include "spdelab/schemes.hpp"
#include "spdelab/sode.hpp"

namespace spdelab {

/// How the auxiliary driver sum_{l<=L} DG(X)(G(X) Q^{1/2} e_l) dW~_l is sampled.
///  - explicit_modes: one Brownian motion per (k, l) pair, role auxiliary(l);
///    L * K_noise normals per step.
///  - covariance_factor: the driver only enters through its collocation
///    values dg(X) g(X) Z with Z_j = sum_l sqrt(q_l) e_l(xi_j) dW~_l(xi_j),
///    a centred Gaussian vector with covariance tau (C_L o C_Knoise)_{ij},
///    C_n(xi, eta) = sum_{k<=n} q_k e_k(xi) e_k(eta). Z is drawn as R zeta
///    with R R^T = C_L o C_Knoise; same law, K normals per step.
enum class AuxiliaryScheme { covariance_factor, explicit_modes };

struct LimitConfig {
  Index L = 0;       // auxiliary processes retained
  Index m_sim = 0;   // time steps of the limit simulation
  bool reuse_driving = true;
  AuxiliaryScheme scheme = AuxiliaryScheme::covariance_factor;
};

/// Square root of the collocation covariance of the combined auxiliary field.
class AuxiliaryFactor {
 public:
  AuxiliaryFactor(const CollocationPlan& plan, const QSpec& q, Index L) {
    detail::require(L >= 1 && L <= q.noise_modes(), "AuxiliaryFactor: need 1 <= L <= K_noise");
    const Matrix& S = plan.synthesis();
    const Index kn = q.noise_modes();
    const Vector q2 = q.sqrt_q().array().square();
    const Matrix cl = S.leftCols(L) * q2.head(L).asDiagonal() * S.leftCols(L).transpose();
    const Matrix ck = S.leftCols(kn) * q2.asDiagonal() * S.leftCols(kn).transpose();
    cov_ = cl.cwiseProduct(ck);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov_);
    const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    root_ = es.eigenvectors() * d.asDiagonal();
  }

  const Matrix& covariance() const { return cov_; }
  const Matrix& root() const { return root_; }

 private:
  Matrix cov_;
  Matrix root_;
};

/// U(T) from exponential Euler on the limit equation
///   dU = (AU + DF(X)U) dt + DG(X)U dW - sqrt(T/2) sum_{l<=L} DG(X)(G(X) sqrt(q_l) e_l) dW~_l,
/// U(0) = 0, with X frozen to `xpath` (held constant between its grid
/// points, subsampled if finer) and W taken from the same noise path that produced X.
inline SpectralField simulate_limit_spde(const ProblemSpec& prob, const SchemePath& xpath, const NoisePath& noise,
                                         const LimitConfig& cfg,
                                         const AuxiliaryFactor* factor = nullptr) {
  const Index K = prob.K();
  const Index kn = prob.qspec().noise_modes();
  const Index m_x = xpath.grid.steps();
  detail::require(cfg.reuse_driving, "simulate_limit_spde: the limit equation must reuse the driving noise of X");
  detail::require(cfg.L >= 1 && cfg.L <= kn, "simulate_limit_spde: need 1 <= L <= K_noise");
  detail::require(cfg.m_sim >= 1 && (cfg.m_sim % m_x == 0 || m_x % cfg.m_sim == 0),
                  "simulate_limit_spde: m_sim and the frozen path's step count must be nested");
  detail::require(noise.m_fine() % cfg.m_sim == 0, "simulate_limit_spde: m_sim must divide the noise m_fine");
  detail::require(static_cast<Index>(xpath.states.size()) == m_x + 1, "simulate_limit_spde: incomplete frozen path");
  detail::require(std::abs(noise.horizon() - prob.horizon()) <= 1e-12 * prob.horizon(),
                  "simulate_limit_spde: noise horizon differs from problem horizon");

  const auto& plan = prob.plan();
  const auto& nem = prob.nemytskii();
  const bool factored = cfg.scheme == AuxiliaryScheme::covariance_factor;
  std::optional<AuxiliaryFactor> own;
  if (factored) {
    detail::require(!plan.dealiased(), "simulate_limit_spde: covariance-factored sampling needs the exact K-node grid");
    if (!factor) factor = &own.emplace(plan, prob.qspec(), cfg.L);
  }

  const double T = prob.horizon();
  const double tau = T / static_cast<double>(cfg.m_sim);
  const double aux_coeff = std::sqrt(T / 2.0);
  Vector decay(K);
  for (Index i = 0; i < K; ++i) decay[i] = std::exp(-laplacian_eigenvalue(i + 1) * tau);
  // X is held between its grid points when coarser, subsampled when finer.
  const Index hold = cfg.m_sim >= m_x ? cfg.m_sim / m_x : 1;
  const Index skip = cfg.m_sim >= m_x ? 1 : m_x / cfg.m_sim;
  const Index ratio = noise.m_fine() / cfg.m_sim;
  const Index nodes = plan.nodes();

  Vector U = Vector::Zero(K);
  Vector xv, dgv, auxv(nodes);
  Index cached_kx = -1;
  Vector dbeta = Vector::Zero(kn);
  Vector dzeta = Vector::Zero(nodes);
  std::vector<Vector> dtilde;
  if (!factored) dtilde.assign(static_cast<std::size_t>(cfg.L), Vector::Zero(kn));
  const Vector& sq = prob.qspec().sqrt_q();

  constexpr Index kBlock = 256;
  for (Index b0 = 0; b0 < noise.m_fine(); b0 += kBlock) {
    const Index b1 = std::min(noise.m_fine(), b0 + kBlock);
    const Matrix drive = noise.increment_block(NoiseRole::driving(), kn, b0, b1);
    Matrix zeta;
    std::vector<Matrix> tilde;
    if (factored) {
      zeta = noise.increment_block(NoiseRole::auxiliary_combined(), nodes, b0, b1);
    } else {
      for (Index l = 1; l <= cfg.L; ++l) tilde.push_back(noise.increment_block(NoiseRole::auxiliary(l), kn, b0, b1));
    }
    for (Index f = b0; f < b1; ++f) {
      dbeta += drive.col(f - b0);
      if (factored)
        dzeta += zeta.col(f - b0);
      else
        for (Index l = 0; l < cfg.L; ++l) dtilde[static_cast<std::size_t>(l)] += tilde[static_cast<std::size_t>(l)].col(f - b0);
      if ((f + 1) % ratio != 0) continue;

      const Index n = (f + 1) / ratio - 1;  // sim step just completed: [t_n, t_{n+1})
      const Index kx = n / hold * skip;
      if (kx != cached_kx) {
        xv = plan.synthesis() * xpath.states[static_cast<std::size_t>(kx)].coeffs();
        dgv.resize(nodes);
        for (Index j = 0; j < nodes; ++j) {
          dgv[j] = nem.dg_dy(plan.node(j), xv[j]);
          if (!std::isfinite(dgv[j])) throw EvaluationError("dg_dy returned a non-finite value", static_cast<std::size_t>(j));
        }
        if (factored)
          for (Index j = 0; j < nodes; ++j) auxv[j] = dgv[j] * nem.g(plan.node(j), xv[j]);
        cached_kx = kx;
      }
      Vector w = Vector::Zero(K);
      w.head(kn) = sq.cwiseProduct(dbeta);
      const Vector uv = plan.synthesis() * U;
      const Vector wv = plan.synthesis() * w;
      Vector val(nodes);
      for (Index j = 0; j < nodes; ++j) {
        const double xi = plan.node(j);
        val[j] = tau * nem.df_dy(xi, xv[j]) * uv[j] + dgv[j] * uv[j] * wv[j];
      }
      if (factored) {
        const Vector z = factor->root() * dzeta;
        val.array() -= aux_coeff * auxv.array() * z.array();
        U.noalias() += plan.analysis() * val;
      } else {
        U.noalias() += plan.analysis() * val;
        const SpectralField X(xpath.states[static_cast<std::size_t>(kx)]);
        for (Index l = 1; l <= cfg.L; ++l) {
          const SpectralField gl = apply_G(plan, nem, X, SpectralField::basis(K, l, sq[l - 1]));
          Vector wl = Vector::Zero(K);
          wl.head(kn) = sq.cwiseProduct(dtilde[static_cast<std::size_t>(l - 1)]);
          U.noalias() -= aux_coeff * apply_DG(plan, nem, X, gl, SpectralField(wl)).coeffs();
          dtilde[static_cast<std::size_t>(l - 1)].setZero();
        }
      }
      U.array() *= decay.array();
      if (!U.allFinite()) throw DivergenceError("non-finite limit state", static_cast<std::size_t>(n + 1));
      dbeta.setZero();
      dzeta.setZero();
    }
  }
  return SpectralField(std::move(U));
}

/// Samples of U(T, x_eval): per stream, X on m_x steps and U on cfg.m_sim
/// steps, both driven by the same noise path of cfg.m_sim fine steps.
inline SampleResult limit_point_samples(const ProblemSpec& prob, Index m_x, const LimitConfig& cfg, double x_eval,
                                        std::size_t samples, const MonteCarloOptions& opt) {
  detail::require(x_eval > 0.0 && x_eval < 1.0, "limit_point_samples: x_eval must lie in (0,1)");
  std::optional<AuxiliaryFactor> factor;
  if (cfg.scheme == AuxiliaryScheme::covariance_factor && !prob.plan().dealiased())
    factor.emplace(prob.plan(), prob.qspec(), cfg.L);
  std::vector<double> vals(samples, 0.0);
  std::vector<char> ok(samples, 1);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, cfg.m_sim, prob.horizon());
    try {
      const SchemePath x = exp_euler_path(prob, TimeGrid(prob.horizon(), m_x), noise);
      const SpectralField u = simulate_limit_spde(prob, x, noise, cfg, factor ? &*factor : nullptr);
      vals[s] = eval_at(u, x_eval);
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

/// M(T) by exponential Euler on
///   dM = (LM + Df(Y)M) dt + Dg(Y)M dB - sqrt(T/2) sum_j Dg(Y) g_j(Y) dB~_j,  M(0) = 0.
/// `ypath` holds Y on m_y + 1 grid points with m_y dividing m_sim = dB.cols();
/// aux[j] holds the increments of the m-dimensional B~_j.
inline Eigen::VectorXd simulate_limit_sode(const SodeProblem& prob, std::span<const Eigen::VectorXd> ypath,
                                           const Eigen::MatrixXd& dB, std::span<const Eigen::MatrixXd> aux) {
  const Index d = prob.dim();
  const Index mn = prob.noise_dim;
  const Index m_sim = dB.cols();
  detail::require(!ypath.empty(), "simulate_limit_sode: empty Y path");
  const Index m_y = static_cast<Index>(ypath.size()) - 1;
  detail::require(m_y >= 1 && m_sim % m_y == 0, "simulate_limit_sode: Y grid must divide the simulation grid");
  detail::require(dB.rows() == mn, "simulate_limit_sode: driving increments must have noise_dim rows");
  detail::require(static_cast<Index>(aux.size()) == mn, "simulate_limit_sode: need one auxiliary motion per noise component");
  for (const auto& a : aux)
    detail::require(a.rows() == mn && a.cols() == m_sim, "simulate_limit_sode: auxiliary increments have the wrong shape");
  for (const auto& y : ypath) detail::require(y.size() == d, "simulate_limit_sode: Y dimension mismatch");

  const double tau = prob.T / static_cast<double>(m_sim);
  const double c = std::sqrt(prob.T / 2.0);
  const Eigen::MatrixXd E = matrix_exp(prob.L, tau);
  const Index hold = m_sim / m_y;
  Eigen::VectorXd M = Eigen::VectorXd::Zero(d);
  for (Index n = 0; n < m_sim; ++n) {
    const Eigen::VectorXd& y = ypath[static_cast<std::size_t>(n / hold)];
    Eigen::VectorXd inc = M + tau * (prob.Df(y) * M) + prob.Dg(y, M) * dB.col(n);
    const Eigen::MatrixXd gy = prob.g(y);
    for (Index j = 0; j < mn; ++j) inc -= c * (prob.Dg(y, gy.col(j)) * aux[static_cast<std::size_t>(j)].col(n));
    M = E * inc;
    if (!M.allFinite()) throw DivergenceError("non-finite SODE limit state", static_cast<std::size_t>(n + 1));
  }
  return M;
}

/// Samples of sqrt(m)(Y^m(T) - Y(T)) for scalar GBM with the exact solution on the same increments.
inline SampleResult gbm_normalized_error_samples(double lambda, double mu, double y0, double T, Index m,
                                                 std::size_t samples, const MonteCarloOptions& opt) {
  const SodeProblem prob = gbm_problem(lambda, mu, y0, T);
  std::vector<double> vals(samples, 0.0);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m, T);
    const Eigen::MatrixXd inc = noise.increment_block(NoiseRole::driving(), 1, 0, m);
    const auto path = sode_exp_euler(prob, m, inc);
    const double exact = gbm_exact(lambda, mu, y0, T, std::span<const double>(inc.data(), static_cast<std::size_t>(m)));
    vals[s] = std::sqrt(static_cast<double>(m)) * (path.back()[0] - exact);
  });
  return {std::move(vals), 0};
}

/// Samples of M(T) for scalar GBM, with Y the exact solution on the m_sim grid.
inline SampleResult gbm_limit_samples(double lambda, double mu, double y0, double T, Index m_sim,
                                      std::size_t samples, const MonteCarloOptions& opt) {
  const SodeProblem prob = gbm_problem(lambda, mu, y0, T);
  std::vector<double> vals(samples, 0.0);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m_sim, T);
    const Eigen::MatrixXd dB = noise.increment_block(NoiseRole::driving(), 1, 0, m_sim);
    const std::vector<Eigen::MatrixXd> aux{noise.increment_block(NoiseRole::auxiliary(1), 1, 0, m_sim)};
    const auto exact = gbm_exact_path(lambda, mu, y0, T, std::span<const double>(dB.data(), static_cast<std::size_t>(m_sim)));
    std::vector<Eigen::VectorXd> ypath;
    ypath.reserve(exact.size());
    for (double v : exact) ypath.push_back(Eigen::VectorXd::Constant(1, v));
    vals[s] = simulate_limit_sode(prob, ypath, dB, aux)[0];
  });
  return {std::move(vals), 0};
}

}  // namespace spdelab
