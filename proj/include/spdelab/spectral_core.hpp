#pragma once

// Spectral calculus of the 1D Dirichlet Laplacian on (0,1):
// eigenpairs lambda_i = i^2 pi^2, e_i(xi) = sqrt(2) sin(i pi xi).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "spdelab/errors.hpp"

namespace spdelab {

using Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Eigenvalue of -A for the (1-based) mode index i.
inline double laplacian_eigenvalue(Index i) {
  const double k = static_cast<double>(i) * std::numbers::pi;
  return k * k;
}

/// A function on (0,1) stored by its first K coefficients in the sine basis.
/// Entry 0 holds the coefficient of e_1.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(Index K) : coeffs_(Vector::Zero(K)) {}
  explicit SpectralField(Vector coeffs) : coeffs_(std::move(coeffs)) {}

  /// amplitude * e_mode, with mode 1-based.
  static SpectralField basis(Index K, Index mode, double amplitude = 1.0) {
    detail::require(mode >= 1 && mode <= K, "basis: mode out of range");
    SpectralField f(K);
    f.coeffs_[mode - 1] = amplitude;
    return f;
  }

  Index size() const { return coeffs_.size(); }
  const Vector& coeffs() const { return coeffs_; }
  double operator[](Index i) const { return coeffs_[i]; }
  bool all_finite() const { return coeffs_.allFinite(); }

  friend SpectralField operator+(const SpectralField& a, const SpectralField& b) {
    detail::require(a.size() == b.size(), "SpectralField: size mismatch");
    return SpectralField(Vector(a.coeffs_ + b.coeffs_));
  }
  friend SpectralField operator-(const SpectralField& a, const SpectralField& b) {
    detail::require(a.size() == b.size(), "SpectralField: size mismatch");
    return SpectralField(Vector(a.coeffs_ - b.coeffs_));
  }
  friend SpectralField operator*(double s, const SpectralField& a) {
    return SpectralField(Vector(s * a.coeffs_));
  }
  friend bool operator==(const SpectralField& a, const SpectralField& b) {
    return a.coeffs_.size() == b.coeffs_.size() && a.coeffs_ == b.coeffs_;
  }

 private:
  Vector coeffs_;
};

/// Parameters tying a problem instance to the regularity theory
/// (sigma, alpha, beta1, beta2, eta, p).
struct AnalysisParams {
  double sigma = 0.9;
  double alpha = 0.25;
  double beta1 = 0.5;
  double beta2 = 0.5;
  double eta = 0.0;
  int p = 4;

  void validate() const {
    if (!(sigma > 0.0 && sigma < 1.0)) throw InvalidSpec("analysis: sigma must lie in (0,1)");
    if (!(alpha >= 0.0)) throw InvalidSpec("analysis: alpha must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw InvalidSpec("analysis: beta1 must lie in (0,1)");
    if (!(beta2 > 0.0)) throw InvalidSpec("analysis: beta2 must be > 0");
    if (!(eta >= 0.0)) throw InvalidSpec("analysis: eta must be >= 0");
    if (p < 4 || p % 2 != 0) throw InvalidSpec("analysis: p must be an even integer >= 4");
    if (!(alpha < sigma + 0.5)) throw InvalidSpec("analysis: alpha must be < sigma + 1/2");
    if (!(eta < std::min(sigma, 1.0 - beta1)))
      throw InvalidSpec("analysis: eta must be < min(sigma, 1 - beta1)");
  }
};

namespace detail {

inline void require_finite(const SpectralField& x, const char* op) {
  if (!x.all_finite()) throw InvalidInput(std::string(op) + ": non-finite coefficients");
}

// lambda_i^r evaluated as exp(r ln lambda_i).
inline double eigen_power(Index i, double r) {
  return std::exp(r * std::log(laplacian_eigenvalue(i)));
}

}  // namespace detail

/// ||x||_r = ||(-A)^{r/2} x|| over the stored modes.
inline double sobolev_norm(const SpectralField& x, double r) {
  detail::require_finite(x, "sobolev_norm");
  double acc = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double c = x[i];
    acc += (r == 0.0 ? 1.0 : detail::eigen_power(i + 1, r)) * c * c;
  }
  return std::sqrt(acc);
}

/// E(t) x = sum exp(-lambda_i t) x_i e_i.
inline SpectralField apply_semigroup(const SpectralField& x, double t) {
  detail::require(t >= 0.0, "apply_semigroup: t must be >= 0");
  Vector c = x.coeffs();
  for (Index i = 0; i < c.size(); ++i) c[i] *= std::exp(-laplacian_eigenvalue(i + 1) * t);
  return SpectralField(std::move(c));
}

/// (-A)^{r/2} x.
inline SpectralField apply_fractional_power(const SpectralField& x, double r) {
  detail::require_finite(x, "apply_fractional_power");
  Vector c = x.coeffs();
  if (r != 0.0)
    for (Index i = 0; i < c.size(); ++i) c[i] *= detail::eigen_power(i + 1, r / 2.0);
  return SpectralField(std::move(c));
}

/// P_N x: keep the first N modes.
inline SpectralField project(const SpectralField& x, Index N) {
  detail::require(N >= 1 && N <= x.size(), "project: N must satisfy 1 <= N <= K");
  Vector c = x.coeffs();
  c.tail(c.size() - N).setZero();
  return SpectralField(std::move(c));
}

/// Pointwise value sum_i x_i sqrt(2) sin(i pi xi) for xi in (0,1).
inline double eval_at(const SpectralField& x, double xi) {
  detail::require(xi > 0.0 && xi < 1.0, "eval_at: xi must lie in (0,1)");
  double acc = 0.0;
  for (Index i = 0; i < x.size(); ++i)
    acc += x[i] * std::sin(static_cast<double>(i + 1) * std::numbers::pi * xi);
  return std::numbers::sqrt2 * acc;
}

/// max_i lambda_i^r exp(-lambda_i t) over the first K modes: the operator
/// norm of (-A)^r E(t) restricted to K modes.
inline double smoothing_supremum(Index K, double r, double t) {
  detail::require(K >= 1 && t > 0.0, "smoothing_supremum: need K >= 1 and t > 0");
  double best = 0.0;
  for (Index i = 1; i <= K; ++i)
    best = std::max(best, detail::eigen_power(i, r) * std::exp(-laplacian_eigenvalue(i) * t));
  return best;
}

/// sup_{lambda > 0} lambda^r e^{-lambda t} = (r/e)^r t^{-r}.
inline double smoothing_constant(double r, double t) {
  if (r == 0.0) return 1.0;
  return std::pow(r / std::numbers::e, r) * std::pow(t, -r);
}

/// Field with coefficients n^{-3/2} (ln n)^{-gamma}, n >= 2: it lies in H^1
/// but in no H^{1+r}, r > 0. Tail norms are summed far beyond any
/// practical mode cutoff with an integral remainder bound.
class BorderlineH1Series {
 public:
  explicit BorderlineH1Series(double gamma) : gamma_(gamma) {
    if (!(gamma > 0.5)) throw InvalidSpec("BorderlineH1Series: gamma must exceed 1/2");
  }

  double gamma() const { return gamma_; }

  double coefficient(long n) const {
    if (n < 2) return 0.0;
    const double dn = static_cast<double>(n);
    return std::pow(dn, -1.5) * std::pow(std::log(dn), -gamma_);
  }

  SpectralField truncated(Index K) const {
    Vector c(K);
    for (Index i = 0; i < K; ++i) c[i] = coefficient(static_cast<long>(i + 1));
    return SpectralField(std::move(c));
  }

  /// Upper bound of sum_{n > n_max} x_n^2 by the integral of x^{-3} (ln x)^{-2 gamma}.
  double squared_remainder(long n_max) const {
    const double n = static_cast<double>(n_max);
    return std::pow(std::log(n), -2.0 * gamma_) / (2.0 * n * n);
  }

  /// ||P_N x - x|| for each N (strictly increasing), summing squares from
  /// n_max down to N+1 and adding the remainder bound.
  std::vector<double> tail_norms(std::span<const long> Ns, long n_max) const {
    detail::require(!Ns.empty(), "tail_norms: empty N list");
    detail::require(std::is_sorted(Ns.begin(), Ns.end()) && Ns.front() >= 1 && Ns.back() < n_max,
                    "tail_norms: N list must be increasing within [1, n_max)");
    std::vector<double> out(Ns.size());
    double acc = squared_remainder(n_max);
    long n = n_max;
    for (std::size_t k = Ns.size(); k-- > 0;) {
      for (; n > Ns[k]; --n) {
        const double c = coefficient(n);
        acc += c * c;
      }
      out[k] = std::sqrt(acc);
    }
    return out;
  }

  /// pi / sqrt(2 gamma - 1) (ln N)^{-(2 gamma - 1)/2}: the bound on
  /// lambda_{N+1}^{1/2} ||P_N x - x||.
  double decay_bound(long N) const {
    return std::numbers::pi / std::sqrt(2.0 * gamma_ - 1.0) *
           std::pow(std::log(static_cast<double>(N)), -(2.0 * gamma_ - 1.0) / 2.0);
  }

 private:
  double gamma_;
};

}  // namespace spdelab
