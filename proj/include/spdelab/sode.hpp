#pragma once

// Finite-dimensional counterpart: dY = (LY + f(Y)) dt + g(Y) dB with L
// symmetric negative definite, its exponential Euler scheme, and the exact
// geometric Brownian motion used as an oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/errors.hpp"

namespace spdelab {

using Eigen::Index;

/// e^{tL} for symmetric L via eigendecomposition.
inline Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& L, double t) {
  detail::require(L.rows() == L.cols(), "matrix_exp: L must be square");
  const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
  detail::require((L - L.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
                  "matrix_exp: L must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  const Eigen::VectorXd ex = (es.eigenvalues() * t).array().exp();
  return es.eigenvectors() * ex.asDiagonal() * es.eigenvectors().transpose();
}

struct SodeProblem {
  using VecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using MatFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
  /// (y, v) -> Dg(y)v, a d x m matrix.
  using DirFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

  Eigen::MatrixXd L;
  VecFn f;
  MatFn g;
  MatFn Df;
  DirFn Dg;
  Eigen::VectorXd y0;
  double T = 1.0;
  Index noise_dim = 1;

  Index dim() const { return y0.size(); }

  /// Checks shapes and that L is symmetric with all eigenvalues < 0.
  void validate() const {
    detail::require(L.rows() == dim() && L.cols() == dim(), "SodeProblem: L must be d x d");
    detail::require(noise_dim >= 1, "SodeProblem: noise dimension must be >= 1");
    detail::require(T > 0.0, "SodeProblem: T must be positive");
    detail::require(f && g && Df && Dg, "SodeProblem: f, g, Df, Dg are required");
    const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
    detail::require((L - L.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
                    "SodeProblem: L must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().maxCoeff() < 0.0, "SodeProblem: L must be negative definite");
  }
};

/// Scalar GBM dY = lambda Y dt + mu Y dB.
inline SodeProblem gbm_problem(double lambda, double mu, double y0, double T) {
  SodeProblem p;
  p.L = Eigen::MatrixXd::Constant(1, 1, lambda);
  p.f = [](const Eigen::VectorXd& y) { return Eigen::VectorXd::Zero(y.size()); };
  p.g = [mu](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, mu * y[0]); };
  p.Df = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); };
  p.Dg = [mu](const Eigen::VectorXd&, const Eigen::VectorXd& v) {
    return Eigen::MatrixXd::Constant(1, 1, mu * v[0]);
  };
  p.y0 = Eigen::VectorXd::Constant(1, y0);
  p.T = T;
  p.noise_dim = 1;
  return p;
}

/// Y_{n+1} = e^{tau L}(Y_n + tau f(Y_n) + g(Y_n) dB_n) on m steps.
/// `increments` is noise_dim x m_inc with m dividing m_inc; coarse
/// increments are summed left to right.
inline std::vector<Eigen::VectorXd> sode_exp_euler(const SodeProblem& prob, Index m,
                                                   const Eigen::MatrixXd& increments) {
  detail::require(m >= 1, "sode_exp_euler: m must be >= 1");
  detail::require(increments.rows() == prob.noise_dim, "sode_exp_euler: increment rows must equal noise dimension");
  detail::require(increments.cols() % m == 0, "sode_exp_euler: m must divide the increment count");
  const Index r = increments.cols() / m;
  const double tau = prob.T / static_cast<double>(m);
  const Eigen::MatrixXd E = matrix_exp(prob.L, tau);
  std::vector<Eigen::VectorXd> path;
  path.reserve(static_cast<std::size_t>(m + 1));
  path.push_back(prob.y0);
  Eigen::VectorXd y = prob.y0;
  Eigen::VectorXd db(prob.noise_dim);
  for (Index n = 0; n < m; ++n) {
    db.setZero();
    for (Index c = n * r; c < (n + 1) * r; ++c) db += increments.col(c);
    y = E * (y + tau * prob.f(y) + prob.g(y) * db);
    if (!y.allFinite()) throw DivergenceError("non-finite SODE state", static_cast<std::size_t>(n + 1));
    path.push_back(y);
  }
  return path;
}

/// Y(T) = Y0 exp((lambda - mu^2/2) T + mu B(T)), B(T) the left-to-right sum of increments.
inline double gbm_exact(double lambda, double mu, double y0, double T, std::span<const double> increments) {
  double b = 0.0;
  for (double d : increments) b += d;
  return y0 * std::exp((lambda - 0.5 * mu * mu) * T + mu * b);
}

/// Y(t_n) of the exact GBM on the grid of the given increments.
inline std::vector<double> gbm_exact_path(double lambda, double mu, double y0, double T,
                                          std::span<const double> increments) {
  const double tau = T / static_cast<double>(increments.size());
  std::vector<double> path(increments.size() + 1);
  double b = 0.0;
  path[0] = y0;
  for (std::size_t n = 0; n < increments.size(); ++n) {
    b += increments[n];
    path[n + 1] = y0 * std::exp((lambda - 0.5 * mu * mu) * tau * static_cast<double>(n + 1) + mu * b);
  }
  return path;
}

/// E[M(T)^2] of the scalar GBM limit: (T^2/2) mu^4 Y0^2 exp((2 lambda + mu^2) T).
inline double gbm_limit_second_moment(double lambda, double mu, double y0, double T) {
  return 0.5 * T * T * std::pow(mu, 4) * y0 * y0 * std::exp((2.0 * lambda + mu * mu) * T);
}

}  // namespace spdelab
