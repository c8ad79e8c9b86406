#pragma once

// Piecewise linear Dirichlet elements on a uniform mesh of [0, 1].

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spdelab/parallel.hpp"
#include "spdelab/schemes.hpp"

namespace spdelab {

struct FemMesh {
  Index interior = 1;  // M_h

  explicit FemMesh(Index m_h) : interior(m_h) { detail::require(m_h >= 1, "FemMesh: need at least one interior node"); }

  Index cells() const { return interior + 1; }
  double h() const { return 1.0 / static_cast<double>(cells()); }
  /// Interior node j = 0..M_h-1 sits at (j+1) h.
  double node(Index j) const { return static_cast<double>(j + 1) / static_cast<double>(cells()); }
};

struct FemField {
  Vector values;  // interior nodal values; zero at both ends
};

struct FemOperators {
  FemMesh mesh{1};
  Matrix mass;
  Matrix stiffness;
  Vector mu;  // generalized eigenvalues, increasing
  Matrix V;   // columns M-orthonormal: V^T M V = I
};

namespace detail {

/// Solves the constant symmetric tridiagonal system tridiag(off, diag, off) x = rhs.
inline Vector solve_tridiagonal(double diag, double off, const Vector& rhs) {
  const Index n = rhs.size();
  Vector c(n), d(n);
  c[0] = off / diag;
  d[0] = rhs[0] / diag;
  for (Index i = 1; i < n; ++i) {
    const double den = diag - off * c[i - 1];
    c[i] = off / den;
    d[i] = (rhs[i] - off * d[i - 1]) / den;
  }
  Vector x(n);
  x[n - 1] = d[n - 1];
  for (Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

}  // namespace detail

inline FemOperators assemble(const FemMesh& mesh) {
  const Index n = mesh.interior;
  const double h = mesh.h();
  FemOperators ops;
  ops.mesh = mesh;
  ops.mass = Matrix::Zero(n, n);
  ops.stiffness = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    ops.mass(j, j) = 4.0 * h / 6.0;
    ops.stiffness(j, j) = 2.0 / h;
    if (j + 1 < n) {
      ops.mass(j, j + 1) = ops.mass(j + 1, j) = h / 6.0;
      ops.stiffness(j, j + 1) = ops.stiffness(j + 1, j) = -1.0 / h;
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(ops.stiffness, ops.mass);
  if (es.info() != Eigen::Success) throw std::runtime_error("assemble: generalized eigensolver failed");
  ops.mu = es.eigenvalues();
  ops.V = es.eigenvectors();
  return ops;
}

/// Closed form of the j-th generalized eigenvalue, (6/h^2)(1 - cos j pi h)/(2 + cos j pi h).
inline double fem_eigenvalue(const FemMesh& mesh, Index j) {
  const double h = mesh.h();
  const double c = std::cos(static_cast<double>(j) * std::numbers::pi * h);
  return 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
}

/// Values of x at the interior nodes.
inline Vector nodal_values(const FemMesh& mesh, const SpectralField& x) {
  Vector v(mesh.interior);
  for (Index j = 0; j < mesh.interior; ++j) v[j] = eval_at(x, mesh.node(j));
  return v;
}

/// R_h x: <x', phi_j'> integrates exactly to (2x(x_j) - x(x_{j-1}) - x(x_{j+1}))/h.
inline FemField ritz_project(const FemOperators& ops, const SpectralField& x) {
  detail::require(x.all_finite(), "ritz_project: non-finite input");
  const FemMesh& mesh = ops.mesh;
  const double h = mesh.h();
  const Vector v = nodal_values(mesh, x);
  Vector load(mesh.interior);
  for (Index j = 0; j < mesh.interior; ++j) {
    const double left = j > 0 ? v[j - 1] : 0.0;
    const double right = j + 1 < mesh.interior ? v[j + 1] : 0.0;
    load[j] = (2.0 * v[j] - left - right) / h;
  }
  return {detail::solve_tridiagonal(2.0 / h, -1.0 / h, load)};
}

/// <x, phi_j> for every interior hat function, exact per sine mode.
inline Vector hat_load(const FemMesh& mesh, const SpectralField& x) {
  const double h = mesh.h();
  Vector load = Vector::Zero(mesh.interior);
  for (Index i = 1; i <= x.size(); ++i) {
    const double a = x[i - 1];
    if (a == 0.0) continue;
    const double w = static_cast<double>(i) * std::numbers::pi;
    const double factor = std::numbers::sqrt2 * a * 2.0 * (1.0 - std::cos(w * h)) / (w * w * h);
    for (Index j = 0; j < mesh.interior; ++j) load[j] += factor * std::sin(w * mesh.node(j));
  }
  return load;
}

/// P~_h x: L2-orthogonal projection onto the element space.
inline FemField l2_project(const FemOperators& ops, const SpectralField& x) {
  detail::require(x.all_finite(), "l2_project: non-finite input");
  const double h = ops.mesh.h();
  return {detail::solve_tridiagonal(4.0 * h / 6.0, h / 6.0, hat_load(ops.mesh, x))};
}

/// E~_h(t) v via the generalized eigenpairs.
inline FemField fem_semigroup(const FemOperators& ops, const FemField& v, double t) {
  detail::require(t >= 0.0, "fem_semigroup: t must be >= 0");
  detail::require(v.values.size() == ops.mesh.interior, "fem_semigroup: field size mismatch");
  const Vector c = ops.V.transpose() * (ops.mass * v.values);
  const Vector damp = (-t * ops.mu).array().exp();
  return {ops.V * damp.cwiseProduct(c)};
}

inline double fem_mass_norm(const FemOperators& ops, const FemField& v) {
  return std::sqrt(v.values.dot(ops.mass * v.values));
}

/// Mass-matrix norm of v minus the nodal values of x.
inline double fem_nodal_distance(const FemOperators& ops, const FemField& v, const SpectralField& x) {
  const Vector d = v.values - nodal_values(ops.mesh, x);
  return std::sqrt(d.dot(ops.mass * d));
}

/// sqrt(h sum_j d_j^2), the trapezoid rule on the nodal difference.
inline double fem_trapezoid_distance(const FemOperators& ops, const FemField& v, const SpectralField& x) {
  const Vector d = v.values - nodal_values(ops.mesh, x);
  return std::sqrt(ops.mesh.h() * d.squaredNorm());
}

/// Exact L2 distance between the piecewise linear v and the sine series x.
inline double fem_l2_distance(const FemOperators& ops, const FemField& v, const SpectralField& x) {
  const double sq = v.values.dot(ops.mass * v.values) - 2.0 * v.values.dot(hat_load(ops.mesh, x)) +
                    x.coeffs().squaredNorm();
  return std::sqrt(std::max(sq, 0.0));
}

/// X_{n+1} = E~_h(tau)(X_n + tau f(X_n) + g(X_n) dW_n) with the Nemytskii
/// terms and the noise taken at the nodes, started from P~_h X_0.
class FemStepper {
 public:
  FemStepper(const ProblemSpec& prob, const FemOperators& ops, double tau) : prob_(&prob), ops_(&ops), tau_(tau) {
    const Index n = ops.mesh.interior;
    const Vector damp = (-tau * ops.mu).array().exp();
    prop_ = ops.V * damp.asDiagonal() * ops.V.transpose() * ops.mass;
    const Index kn = prob.qspec().noise_modes();
    noise_basis_.resize(n, kn);
    for (Index j = 0; j < n; ++j)
      for (Index i = 1; i <= kn; ++i)
        noise_basis_(j, i - 1) = prob.qspec().sqrt_q()[i - 1] * std::numbers::sqrt2 *
                                 std::sin(static_cast<double>(i) * std::numbers::pi * ops.mesh.node(j));
  }

  Vector initial() const { return l2_project(*ops_, prob_->x0()).values; }

  void step(Vector& x, const Vector& dbeta, Index step_index) const {
    const auto& nem = prob_->nemytskii();
    const Vector wv = noise_basis_ * dbeta;
    Vector val(x.size());
    for (Index j = 0; j < x.size(); ++j) {
      const double xi = ops_->mesh.node(j);
      const double fj = nem.f(xi, x[j]);
      const double gj = nem.g(xi, x[j]);
      if (!std::isfinite(fj) || !std::isfinite(gj))
        throw EvaluationError("Nemytskii map returned a non-finite value", static_cast<std::size_t>(j));
      val[j] = x[j] + tau_ * fj + gj * wv[j];
    }
    x = prop_ * val;
    if (!x.allFinite()) throw DivergenceError("non-finite finite element state", static_cast<std::size_t>(step_index));
  }

 private:
  const ProblemSpec* prob_;
  const FemOperators* ops_;
  double tau_;
  Matrix prop_;
  Matrix noise_basis_;  // sqrt(q_i) e_i(x_j)
};

inline std::vector<FemField> fem_exp_euler_path(const ProblemSpec& prob, const FemOperators& ops,
                                                const TimeGrid& grid, const NoisePath& noise) {
  detail::require(noise.m_fine() % grid.steps() == 0, "fem path: noise m_fine must be divisible by the step count");
  detail::require(std::abs(grid.horizon() - prob.horizon()) <= 1e-12 * prob.horizon(),
                  "fem path: grid horizon differs from problem horizon");
  const FemStepper stepper(prob, ops, grid.tau());
  const CoarseView view(noise, grid.steps());
  const Index kn = prob.qspec().noise_modes();
  std::vector<FemField> path;
  path.reserve(static_cast<std::size_t>(grid.steps() + 1));
  Vector x = stepper.initial();
  path.push_back({x});
  for (Index n = 0; n < grid.steps(); ++n) {
    stepper.step(x, view.mode_increments(NoiseRole::driving(), kn, n), n + 1);
    path.push_back({x});
  }
  return path;
}

/// Interior node count with h = m^{-iota}, rounded up to the next mesh.
inline Index fem_nodes_for(Index m, double iota) {
  detail::require(m >= 1 && iota > 0.0, "fem_nodes_for: need m >= 1 and iota > 0");
  const double cells = std::pow(static_cast<double>(m), iota);
  return std::max<Index>(1, static_cast<Index>(std::ceil(cells - 1e-9)) - 1);
}

/// (E ||X^m_h(T) - X^{m_ref}(T)||^p)^{1/p} per mesh, all on one noise path
/// per sample. `meshes[i]` pairs with `m_list[i]`; the distance is the
/// mass norm of the nodal difference.
inline ErrorTable fem_strong_error(const ProblemSpec& prob, std::span<const Index> m_list,
                                   std::span<const Index> meshes, Index m_ref, std::size_t samples,
                                   const MonteCarloOptions& opt) {
  detail::require(!m_list.empty() && m_list.size() == meshes.size() && samples >= 2,
                  "fem_strong_error: need matching m and mesh lists and >= 2 samples");
  for (Index m : m_list)
    detail::require(m >= 1 && m_ref % m == 0,
                    "fem_strong_error: m=" + std::to_string(m) + " must divide m_ref=" + std::to_string(m_ref));
  const int p = prob.analysis().p;
  std::vector<FemOperators> ops;
  for (Index mh : meshes) ops.push_back(assemble(FemMesh(mh)));
  const std::size_t L = m_list.size();
  std::vector<std::vector<double>> per_sample(samples, std::vector<double>(L, 0.0));
  std::vector<char> ok(samples, 1);
  parallel_for(samples, opt.workers, [&](std::size_t s) {
    NoisePath noise(opt.seed, opt.first_stream + s, m_ref, prob.horizon());
    try {
      const SchemePath ref = exp_euler_path(prob, TimeGrid(prob.horizon(), m_ref), noise);
      for (std::size_t j = 0; j < L; ++j) {
        const auto path = fem_exp_euler_path(prob, ops[j], TimeGrid(prob.horizon(), m_list[j]), noise);
        per_sample[s][j] = std::pow(fem_nodal_distance(ops[j], path.back(), ref.states.back()), p);
      }
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
    out.rows.push_back(detail::pth_moment_row(ops[j].mesh.h(), col, p));
  }
  return out;
}

}  // namespace spdelab
