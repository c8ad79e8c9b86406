#include <catch_amalgamated.hpp>

#include "common.hpp"
#include "fixture.hpp"
#include "spdelab/limit_law.hpp"

using namespace spdelab;
using namespace testing_support;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

double basis_at(Index i, double s) { return std::sqrt(2.0) * std::sin(i * kPi * s); }

// Coefficients of nodal values on the K-node grid j/(K+1), by the discrete sine sum.
Vector nodal_to_modes(const Vector& v) {
  const Index K = v.size();
  Vector c = Vector::Zero(K);
  for (Index i = 1; i <= K; ++i)
    for (Index j = 1; j <= K; ++j) c[i - 1] += std::sqrt(2.0) / (K + 1) * v[j - 1] * std::sin(i * kPi * j / (K + 1.0));
  return c;
}

MomentEstimate second_moment_estimate(const std::vector<double>& v) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  return moment_summary(sq, {1}).front();
}

}  // namespace

TEST_CASE("auxiliary covariance factor") {
  const Index K = 8;
  const QSpec q = QSpec::exponential(0.1, K);
  const CollocationPlan plan(K);
  for (Index L : {1, 3, 8}) {
    const AuxiliaryFactor f(plan, q, L);
    const Matrix& c = f.covariance();
    for (Index i = 0; i < K; ++i)
      for (Index j = 0; j < K; ++j) {
        const double a = plan.node(i), b = plan.node(j);
        double cl = 0.0, ck = 0.0;
        for (Index l = 1; l <= L; ++l) cl += q.eigenvalue(l) * basis_at(l, a) * basis_at(l, b);
        for (Index k = 1; k <= K; ++k) ck += q.eigenvalue(k) * basis_at(k, a) * basis_at(k, b);
        CHECK_THAT(c(i, j), WithinAbs(cl * ck, 1e-12));
      }
    CHECK((f.root() * f.root().transpose() - c).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(AuxiliaryFactor(plan, q, 0), InvalidInput);
  CHECK_THROWS_AS(AuxiliaryFactor(plan, q, 9), InvalidInput);
}

TEST_CASE("derivative-free diffusion gives a vanishing limit") {
  const ProblemSpec p = default_problem(16, 1.0, "sin", "constant");
  const NoisePath noise(3, 0, 64, 1.0);
  const SchemePath x = exp_euler_path(p, TimeGrid(1.0, 16), noise);
  for (auto scheme : {AuxiliaryScheme::covariance_factor, AuxiliaryScheme::explicit_modes}) {
    const SpectralField u = simulate_limit_spde(p, x, noise, {8, 64, true, scheme});
    CHECK(u.coeffs().isZero(0.0));
  }
  MonteCarloOptions opt;
  opt.seed = 4;
  for (double v : limit_point_samples(p, 16, {16, 32, true, {}}, 0.5, 20, opt).values) CHECK(v == 0.0);
}

TEST_CASE("zero diffusion values keep both drivers at zero") {
  // g = 0 with a nonzero derivative: the auxiliary driver vanishes and U stays at its zero start.
  auto zero = [](double, double) { return 0.0; };
  auto one = [](double, double) { return 1.0; };
  auto cosy = [](double, double y) { return std::cos(y); };
  const ProblemSpec p(8, 1.0, smooth_x0(8), {zero, cosy, zero, one}, QSpec::exponential(0.1, 8));
  const NoisePath noise(5, 1, 32, 1.0);
  const SchemePath x = exp_euler_path(p, TimeGrid(1.0, 32), noise);
  for (auto scheme : {AuxiliaryScheme::covariance_factor, AuxiliaryScheme::explicit_modes})
    CHECK(simulate_limit_spde(p, x, noise, {8, 32, true, scheme}).coeffs().isZero(0.0));
}

TEST_CASE("one step in the affine case matches the hand expansion") {
  const double a1 = 0.5, a2 = 1.0, T = 0.7;
  const Index K = 6;
  const ProblemSpec p = default_problem(K, T);
  const QSpec& q = p.qspec();
  const NoisePath noise(11, 2, 4, T);
  const SchemePath x = exp_euler_path(p, TimeGrid(T, 1), noise);
  const Vector x0 = p.x0().coeffs();
  auto x_at = [&](double s) {
    double v = 0.0;
    for (Index i = 1; i <= K; ++i) v += x0[i - 1] * basis_at(i, s);
    return v;
  };
  Vector decay(K);
  for (Index i = 1; i <= K; ++i) decay[i - 1] = std::exp(-i * i * kPi * kPi * T);

  // Explicit modes: a1 (a1 X + a2) sqrt(q_l) e_l sum_k sqrt(q_k) e_k dW~_{k,l} at every node.
  Vector nodal = Vector::Zero(K);
  for (Index j = 1; j <= K; ++j) {
    const double s = j / (K + 1.0);
    for (Index l = 1; l <= K; ++l) {
      double w = 0.0;
      for (Index k = 1; k <= K; ++k)
        w += std::sqrt(q.eigenvalue(k)) * basis_at(k, s) * noise.increment_sum(NoiseRole::auxiliary(l), k, 0, 4);
      nodal[j - 1] += a1 * (a1 * x_at(s) + a2) * std::sqrt(q.eigenvalue(l)) * basis_at(l, s) * w;
    }
  }
  Vector expected = -std::sqrt(T / 2.0) * decay.cwiseProduct(nodal_to_modes(nodal));
  const SpectralField ue = simulate_limit_spde(p, x, noise, {K, 1, true, AuxiliaryScheme::explicit_modes});
  CHECK((ue.coeffs() - expected).cwiseAbs().maxCoeff() <= 1e-12);

  // Factored: a1 (a1 X + a2) (R zeta) at every node.
  const AuxiliaryFactor f(p.plan(), q, K);
  Vector zeta(K);
  for (Index j = 1; j <= K; ++j) zeta[j - 1] = noise.increment_sum(NoiseRole::auxiliary_combined(), j, 0, 4);
  const Vector z = f.root() * zeta;
  for (Index j = 1; j <= K; ++j) {
    const double s = j / (K + 1.0);
    nodal[j - 1] = a1 * (a1 * x_at(s) + a2) * z[j - 1];
  }
  expected = -std::sqrt(T / 2.0) * decay.cwiseProduct(nodal_to_modes(nodal));
  const SpectralField uf = simulate_limit_spde(p, x, noise, {K, 1, true, AuxiliaryScheme::covariance_factor});
  CHECK((uf.coeffs() - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("limit simulation preconditions") {
  const ProblemSpec p = default_problem(8);
  const NoisePath noise(1, 0, 48, 1.0);
  const SchemePath x = exp_euler_path(p, TimeGrid(1.0, 16), noise);
  CHECK_THROWS_AS(simulate_limit_spde(p, x, noise, {8, 48, false, {}}), InvalidInput);
  CHECK_THROWS_AS(simulate_limit_spde(p, x, noise, {0, 48, true, {}}), InvalidInput);
  CHECK_THROWS_AS(simulate_limit_spde(p, x, noise, {9, 48, true, {}}), InvalidInput);
  CHECK_THROWS_AS(simulate_limit_spde(p, x, noise, {8, 24, true, {}}), InvalidInput);  // 16 and 24 not nested
  CHECK_THROWS_AS(simulate_limit_spde(p, x, noise, {8, 96, true, {}}), InvalidInput);  // beyond the noise grid
  CHECK_NOTHROW(simulate_limit_spde(p, x, noise, {8, 48 / 3, true, {}}));
  const ProblemSpec d(8, 1.0, smooth_x0(8), p.nemytskii(), p.qspec(), {}, true);
  CHECK_THROWS_AS(simulate_limit_spde(d, exp_euler_path(d, TimeGrid(1.0, 16), noise), noise, {8, 16, true, {}}),
                  InvalidInput);
  CHECK_NOTHROW(simulate_limit_spde(d, exp_euler_path(d, TimeGrid(1.0, 16), noise), noise,
                                    {8, 16, true, AuxiliaryScheme::explicit_modes}));
}

TEST_CASE("limit fixed-seed fixture") {
  const ProblemSpec p = default_problem(8);
  const NoisePath noise(42, 0, 64, 1.0);
  const SchemePath x = exp_euler_path(p, TimeGrid(1.0, 64), noise);
  const SpectralField u = simulate_limit_spde(p, x, noise, {8, 64, true, {}});
  std::vector<double> v(u.coeffs().data(), u.coeffs().data() + 8);
  v.push_back(eval_at(u, 0.5));
  fixture::check("limit_K8_L8_m64_seed42", v, 1e-11);
}

TEST_CASE("factored and explicit auxiliary sampling agree in law") {
  const ProblemSpec p = default_problem(8);
  MonteCarloOptions a;
  a.seed = 61;
  MonteCarloOptions b = a;
  b.first_stream = 5000;
  const std::size_t n = 3000;
  const auto fa = limit_point_samples(p, 32, {8, 32, true, AuxiliaryScheme::covariance_factor}, 0.5, n, a);
  const auto fb = limit_point_samples(p, 32, {8, 32, true, AuxiliaryScheme::explicit_modes}, 0.5, n, b);
  const auto ks = ks_two_sample(fa.values, fb.values);
  INFO("KS D = " << ks.statistic << " threshold " << ks.threshold);
  CHECK(ks.statistic <= ks.threshold);
  const auto ma = second_moment_estimate(fa.values), mb = second_moment_estimate(fb.values);
  CHECK(std::abs(ma.value - mb.value) <= 3.0 * std::hypot(ma.stderr_, mb.stderr_));
}

TEST_CASE("truncation stability when L doubles") {
  // Explicit modes share each W~_l between the two runs, so the difference is the l > 64 tail only.
  const Index K = 128;
  const ProblemSpec p = default_problem(K, 0.25);
  const std::size_t n = 24;
  double base = 0.0, doubled = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const NoisePath noise(13, s, 8, 0.25);
    const SchemePath x = exp_euler_path(p, TimeGrid(0.25, 8), noise);
    base += simulate_limit_spde(p, x, noise, {64, 8, true, AuxiliaryScheme::explicit_modes}).coeffs().squaredNorm();
    doubled += simulate_limit_spde(p, x, noise, {128, 8, true, AuxiliaryScheme::explicit_modes}).coeffs().squaredNorm();
  }
  INFO("mean square L=64: " << base / n << ", L=128: " << doubled / n);
  CHECK(std::abs(doubled - base) <= 0.02 * base);
}

TEST_CASE("grid stability under m_sim refinement") {
  const ProblemSpec p = default_problem(16);
  MonteCarloOptions a;
  a.seed = 71;
  MonteCarloOptions b = a;
  b.first_stream = 10000;
  const std::size_t n = 4000;
  // Coarse m_sim carries the stepper's own bias on the stiff modes; compare on resolved grids.
  const auto coarse = limit_point_samples(p, 64, {16, 512, true, {}}, 0.5, n, a);
  const auto fine = limit_point_samples(p, 64, {16, 1024, true, {}}, 0.5, n, b);
  const auto mc = second_moment_estimate(coarse.values), mf = second_moment_estimate(fine.values);
  INFO("E[U^2]: " << mc.value << " +- " << mc.stderr_ << " vs " << mf.value << " +- " << mf.stderr_);
  CHECK(std::abs(mc.value - mf.value) <= 3.0 * std::hypot(mc.stderr_, mf.stderr_));
}

TEST_CASE("SODE limit: zero drivers, constant diffusion and linearity") {
  const SodeProblem g = gbm_problem(-1.0, 0.5, 1.0, 1.0);
  const NoisePath noise(8, 0, 32, 1.0);
  const Eigen::MatrixXd dB = noise.increment_block(NoiseRole::driving(), 1, 0, 32);
  const std::vector<double> y(dB.data(), dB.data() + 32);
  std::vector<Eigen::VectorXd> ypath;
  for (double v : gbm_exact_path(-1.0, 0.5, 1.0, 1.0, y)) ypath.push_back(Eigen::VectorXd::Constant(1, v));

  const std::vector<Eigen::MatrixXd> none{Eigen::MatrixXd::Zero(1, 32)};
  CHECK(simulate_limit_sode(g, ypath, Eigen::MatrixXd::Zero(1, 32), none)[0] == 0.0);
  CHECK(simulate_limit_sode(g, ypath, dB, none)[0] == 0.0);

  const std::vector<Eigen::MatrixXd> aux{noise.increment_block(NoiseRole::auxiliary(1), 1, 0, 32)};
  const std::vector<Eigen::MatrixXd> aux2{2.0 * aux[0]};
  const double m1 = simulate_limit_sode(g, ypath, dB, aux)[0];
  CHECK(m1 != 0.0);
  CHECK(simulate_limit_sode(g, ypath, dB, aux2)[0] == 2.0 * m1);

  SodeProblem c = g;
  c.g = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 0.5); };
  c.Dg = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); };
  CHECK(simulate_limit_sode(c, ypath, dB, aux)[0] == 0.0);

  // Y on a coarser grid is held between its points.
  const std::span<const Eigen::VectorXd> half(ypath.data(), 17);
  CHECK_NOTHROW(simulate_limit_sode(g, half, dB, aux));
  CHECK_THROWS_AS(simulate_limit_sode(g, std::span<const Eigen::VectorXd>(ypath.data(), 6), dB, aux), InvalidInput);
  CHECK_THROWS_AS(simulate_limit_sode(g, ypath, Eigen::MatrixXd::Zero(2, 32), aux), InvalidInput);
  CHECK_THROWS_AS(simulate_limit_sode(g, ypath, dB, std::vector<Eigen::MatrixXd>{}), InvalidInput);
  const std::vector<Eigen::MatrixXd> wide{Eigen::MatrixXd::Zero(1, 16)};
  CHECK_THROWS_AS(simulate_limit_sode(g, ypath, dB, wide), InvalidInput);
}

TEST_CASE("GBM limit second moment") {
  const double lambda = -1.0, mu = 0.5, y0 = 1.0, T = 1.0;
  const double target = T * T / 2.0 * std::pow(mu, 4) * y0 * y0 * std::exp((2.0 * lambda + mu * mu) * T);
  CHECK_THAT(target, WithinRel(5.4304e-3, 1e-4));
  MonteCarloOptions opt;
  opt.seed = 91;
  const auto m = gbm_limit_samples(lambda, mu, y0, T, 256, 100000, opt);
  const auto est = second_moment_estimate(m.values);
  INFO("E[M^2] = " << est.value << " +- " << est.stderr_ << ", target " << target);
  CHECK(std::abs(est.value - target) <= 3.0 * est.stderr_);
  // Centred, as a stochastic integral.
  CHECK(std::abs(mean(m.values)) <= 3.0 * std::sqrt(variance(m.values) / 100000.0));
}
