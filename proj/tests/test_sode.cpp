#include <catch_amalgamated.hpp>

#include "fixture.hpp"
#include "spdelab/limit_law.hpp"
#include "spdelab/sode.hpp"

using namespace spdelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("matrix exponential") {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK(matrix_exp(zero, 2.0).isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-15));

  Eigen::MatrixXd d(2, 2);
  d << -1, 0, 0, -2;
  const Eigen::MatrixXd ed = matrix_exp(d, 1.0);
  CHECK_THAT(ed(0, 0), WithinRel(std::exp(-1.0), 1e-14));
  CHECK_THAT(ed(1, 1), WithinRel(std::exp(-2.0), 1e-14));
  CHECK_THAT(ed(0, 1), WithinAbs(0.0, 1e-15));

  Eigen::MatrixXd l(2, 2);
  l << -2, 1, 1, -2;
  // Eigenvalues -1, -3 with eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2.
  const double a = std::exp(-0.5), b = std::exp(-1.5);
  const Eigen::MatrixXd e = matrix_exp(l, 0.5);
  CHECK_THAT(e(0, 0), WithinRel(0.5 * (a + b), 1e-14));
  CHECK_THAT(e(0, 1), WithinRel(0.5 * (a - b), 1e-14));
  CHECK_THAT(e(1, 0), WithinRel(0.5 * (a - b), 1e-14));
  CHECK_THAT(e(1, 1), WithinRel(0.5 * (a + b), 1e-14));

  Eigen::MatrixXd asym(2, 2);
  asym << -1, 0.5, 0, -1;
  CHECK_THROWS_AS(matrix_exp(asym, 1.0), InvalidInput);
}

TEST_CASE("problem validation rejects non-negative-definite drift matrices") {
  SodeProblem p = gbm_problem(-1.0, 0.5, 1.0, 1.0);
  CHECK_NOTHROW(p.validate());
  p.L(0, 0) = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p.L(0, 0) = 0.3;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("deterministic flow and a single GBM step") {
  SodeProblem p;
  p.L.resize(2, 2);
  p.L << -2, 1, 1, -2;
  p.f = [](const Eigen::VectorXd& y) { return Eigen::VectorXd::Zero(y.size()); };
  p.g = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 1); };
  p.Df = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2); };
  p.Dg = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 1); };
  p.y0 = Eigen::Vector2d(1.0, -0.5);
  p.T = 1.0;
  const Eigen::MatrixXd inc = Eigen::MatrixXd::Constant(1, 8, 0.3);
  const auto path = sode_exp_euler(p, 8, inc);
  for (Index n = 0; n <= 8; ++n) CHECK(path[n].isApprox(matrix_exp(p.L, n / 8.0) * p.y0, 1e-13));

  const SodeProblem g = gbm_problem(-1.0, 0.5, 2.0, 1.0);
  const Eigen::MatrixXd db = Eigen::MatrixXd::Constant(1, 1, 0.17);
  const auto one = sode_exp_euler(g, 1, db);
  CHECK_THAT(one[1][0], WithinRel(std::exp(-1.0) * (2.0 + 0.5 * 2.0 * 0.17), 1e-14));

  CHECK_THROWS_AS(sode_exp_euler(g, 3, Eigen::MatrixXd::Zero(1, 8)), InvalidInput);
}

TEST_CASE("exact GBM special cases") {
  const std::vector<double> inc{0.1, -0.3, 0.2};
  CHECK_THAT(gbm_exact(-1.0, 0.0, 2.0, 1.0, inc), WithinRel(2.0 * std::exp(-1.0), 1e-15));
  const std::vector<double> zero{0.1, -0.1, 0.0};
  CHECK_THAT(gbm_exact(-1.0, 0.5, 2.0, 1.0, zero), WithinRel(2.0 * std::exp(-1.125), 1e-15));
  const auto path = gbm_exact_path(-1.0, 0.5, 2.0, 1.0, inc);
  CHECK(path.size() == 4);
  CHECK(path.back() == gbm_exact(-1.0, 0.5, 2.0, 1.0, inc));
}

TEST_CASE("lognormal second moment of the exact GBM") {
  const double lambda = -1.0, mu = 0.5, y0 = 1.0, T = 1.0;
  const std::size_t n = 100000;
  std::vector<double> sq(n);
  for (std::size_t s = 0; s < n; ++s) {
    const NoisePath path(17, s, 4, T);
    const Eigen::MatrixXd inc = path.increment_block(NoiseRole::driving(), 1, 0, 4);
    const double y = gbm_exact(lambda, mu, y0, T, std::span<const double>(inc.data(), 4));
    sq[s] = y * y;
  }
  const auto est = moment_summary(sq, {1}).front();
  CHECK(std::abs(est.value - y0 * y0 * std::exp((2 * lambda + mu * mu) * T)) <= 3.0 * est.stderr_);
}

TEST_CASE("strong order one half for GBM") {
  const double lambda = -1.0, mu = 0.5, y0 = 1.0, T = 1.0;
  const SodeProblem p = gbm_problem(lambda, mu, y0, T);
  const std::vector<Index> ms{16, 32, 64, 128, 256, 512, 1024};
  const std::size_t n = 10000;
  std::vector<double> rms(ms.size(), 0.0), xs(ms.begin(), ms.end());
  std::vector<std::vector<double>> sq(ms.size(), std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const NoisePath path(23, s, 1024, T);
    const Eigen::MatrixXd inc = path.increment_block(NoiseRole::driving(), 1, 0, 1024);
    const double exact = gbm_exact(lambda, mu, y0, T, std::span<const double>(inc.data(), 1024));
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const double e = sode_exp_euler(p, ms[k], inc).back()[0] - exact;
      sq[k][s] = e * e;
    }
  }
  for (std::size_t k = 0; k < ms.size(); ++k) rms[k] = std::sqrt(mean(sq[k]));
  const RateFit fit = fit_rate(xs, rms);
  CHECK(fit.slope >= -0.6);
  CHECK(fit.slope <= -0.4);
}

TEST_CASE("constant diffusion gives a vanishing normalized error") {
  SodeProblem p = gbm_problem(-1.0, 0.5, 1.0, 1.0);
  p.g = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 0.5); };
  p.Dg = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); };
  // Exact solution of the additive OU equation on the fine grid, via the same increments.
  const std::size_t n = 2000;
  const Index fine = 4096;
  double prev = std::numeric_limits<double>::infinity();
  for (Index m : {16, 64, 256}) {
    std::vector<double> sq(n);
    for (std::size_t s = 0; s < n; ++s) {
      const NoisePath path(31, s, fine, 1.0);
      const Eigen::MatrixXd inc = path.increment_block(NoiseRole::driving(), 1, 0, fine);
      const double ref = sode_exp_euler(p, fine, inc).back()[0];
      const double e = sode_exp_euler(p, m, inc).back()[0] - ref;
      sq[s] = static_cast<double>(m) * e * e;
    }
    const double ms = mean(sq);
    CHECK(ms < prev);
    prev = ms;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("fixed-seed two-dimensional path") {
  SodeProblem p;
  p.L.resize(2, 2);
  p.L << -2, 0.5, 0.5, -1;
  p.f = [](const Eigen::VectorXd& y) { return Eigen::Vector2d(std::sin(y[1]), -0.1 * y[0]); };
  p.g = [](const Eigen::VectorXd& y) {
    Eigen::MatrixXd g(2, 2);
    g << 0.3 * y[0], 0.1, 0.0, 0.2 * y[1] + 0.05;
    return g;
  };
  p.Df = [](const Eigen::VectorXd& y) {
    Eigen::MatrixXd d(2, 2);
    d << 0, std::cos(y[1]), -0.1, 0;
    return d;
  };
  p.Dg = [](const Eigen::VectorXd&, const Eigen::VectorXd& v) {
    Eigen::MatrixXd d(2, 2);
    d << 0.3 * v[0], 0, 0, 0.2 * v[1];
    return d;
  };
  p.y0 = Eigen::Vector2d(1.0, 0.5);
  p.T = 1.0;
  p.noise_dim = 2;
  CHECK_NOTHROW(p.validate());
  const NoisePath path(42, 0, 64, 1.0);
  const Eigen::MatrixXd inc = path.increment_block(NoiseRole::driving(), 2, 0, 64);
  const auto y = sode_exp_euler(p, 16, inc);
  fixture::check("sode_d2_seed42", {y.back()[0], y.back()[1], y[8][0], y[8][1]}, 1e-13);
}
