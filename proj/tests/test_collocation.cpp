#include <catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "spdelab/collocation.hpp"

using namespace spdelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

SpectralField random_field(std::mt19937_64& rng, Index K, double decay = 1.0) {
  std::normal_distribution<double> nd;
  Vector c(K);
  for (Index i = 0; i < K; ++i) c[i] = nd(rng) / std::pow(static_cast<double>(i + 1), decay);
  return SpectralField(c);
}

NemytskiiCoeffs identity_f() {
  auto id = [](double, double y) { return y; };
  auto one = [](double, double) { return 1.0; };
  return {id, one, id, one};
}

double max_abs_diff(const SpectralField& a, const SpectralField& b) {
  return (a.coeffs() - b.coeffs()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("synthesis of the first mode on three nodes") {
  const PhysicalField v = to_physical(SpectralField::basis(3, 1));
  REQUIRE(v.size() == 3);
  CHECK_THAT(v.values[0], WithinRel(1.0, 1e-14));
  CHECK_THAT(v.values[1], WithinRel(std::sqrt(2.0), 1e-14));
  CHECK_THAT(v.values[2], WithinRel(1.0, 1e-14));
  CHECK(to_physical(SpectralField(5)).values.isZero(0.0));
  CHECK(to_spectral(PhysicalField{Vector::Zero(6)}).coeffs().isZero(0.0));
}

TEST_CASE("round trip and discrete Parseval") {
  std::mt19937_64 rng(1);
  for (Index K : {3, 15, 63, 255}) {
    const CollocationPlan plan(K);
    for (int t = 0; t < 5; ++t) {
      const SpectralField x = random_field(rng, K, 0.0);
      const PhysicalField v = to_physical(plan, x);
      CHECK(max_abs_diff(to_spectral(plan, v), x) <= 1e-12);
      const double lhs = v.values.squaredNorm() / static_cast<double>(K + 1);
      CHECK_THAT(lhs, WithinRel(x.coeffs().squaredNorm(), 1e-12));
    }
  }
  const CollocationPlan wide(31, true);
  CHECK(wide.nodes() == 63);
  const SpectralField x = random_field(rng, 31, 0.0);
  CHECK(max_abs_diff(to_spectral(wide, to_physical(wide, x)), x) <= 1e-12);
}

TEST_CASE("analysis of sampled modes and of the constant function") {
  const Index K = 63;
  const CollocationPlan plan(K);
  const SpectralField back = to_spectral(plan, to_physical(plan, SpectralField::basis(K, 2)));
  CHECK(max_abs_diff(back, SpectralField::basis(K, 2)) <= 1e-13);

  const SpectralField c = to_spectral(plan, PhysicalField{Vector::Ones(K)});
  for (Index n = 1; n <= 5; ++n) {
    const double exact = n % 2 ? 2.0 * std::sqrt(2.0) / (static_cast<double>(n) * kPi) : 0.0;
    CHECK_THAT(c[n - 1], WithinAbs(exact, 2e-2));
  }
}

TEST_CASE("apply_F basic cases") {
  std::mt19937_64 rng(2);
  const Index K = 63;
  const CollocationPlan plan(K);
  const SpectralField x = random_field(rng, K);
  CHECK(max_abs_diff(apply_F(plan, identity_f(), x), x) <= 1e-12);

  NemytskiiCoeffs sinf = identity_f();
  sinf.f = [](double, double y) { return std::sin(y); };
  CHECK(apply_F(plan, sinf, SpectralField(K)).coeffs().isZero(0.0));

  NemytskiiCoeffs one = identity_f();
  one.f = [](double, double) { return 1.0; };
  const SpectralField c = apply_F(plan, one, SpectralField(K));
  for (Index n = 1; n <= 5; n += 2) CHECK_THAT(c[n - 1], WithinAbs(2.0 * std::sqrt(2.0) / (n * kPi), 2e-2));

  NemytskiiCoeffs bad = identity_f();
  bad.f = [](double xi, double) { return xi > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0; };
  try {
    apply_F(plan, bad, x);
    FAIL("expected an evaluation error");
  } catch (const EvaluationError& e) {
    CHECK(plan.node(static_cast<Index>(e.grid_index())) > 0.5);
    CHECK(e.grid_index() == 32);
  }
}

TEST_CASE("apply_G with g = y on the first mode") {
  const Index K = 63;
  const CollocationPlan plan(K);
  const SpectralField e1 = SpectralField::basis(K, 1);
  const SpectralField r = apply_G(plan, identity_f(), e1, e1);
  const double h = 1.0 / (K + 1);
  for (Index n = 1; n <= K; ++n) {
    // Independent grid quadrature of <1 - cos(2 pi xi), e_n>.
    double q = 0.0;
    for (Index j = 1; j <= K; ++j) q += (1.0 - std::cos(2.0 * kPi * j * h)) * std::sqrt(2.0) * std::sin(n * kPi * j * h);
    CHECK_THAT(r[n - 1], WithinAbs(q * h, 1e-10));
  }
  // Against the exact integral, up to aliasing.
  for (Index n = 1; n <= 5; ++n) {
    const double dn = static_cast<double>(n);
    const double exact = n % 2 ? -8.0 * std::sqrt(2.0) / (kPi * dn * (dn * dn - 4.0)) : 0.0;
    CHECK_THAT(r[n - 1], WithinAbs(exact, 1e-3));
  }
  NemytskiiCoeffs unit = identity_f();
  unit.g = [](double, double) { return 1.0; };
  std::mt19937_64 rng(3);
  const SpectralField u = random_field(rng, K);
  CHECK(max_abs_diff(apply_G(plan, unit, e1, u), u) <= 1e-12);
  CHECK(apply_G(plan, identity_f(), e1, SpectralField(K)).coeffs().isZero(0.0));
}

TEST_CASE("derivative operators") {
  std::mt19937_64 rng(4);
  const Index K = 31;
  const CollocationPlan plan(K);
  const SpectralField x = random_field(rng, K, 1.5);
  const SpectralField u = random_field(rng, K, 1.5);
  const SpectralField w = random_field(rng, K, 1.5);
  CHECK(max_abs_diff(apply_DF(plan, identity_f(), x, u), u) <= 1e-12);
  CHECK(apply_DF(plan, identity_f(), x, SpectralField(K)).coeffs().isZero(0.0));

  NemytskiiCoeffs constg = identity_f();
  constg.g = [](double, double) { return 2.0; };
  constg.dg_dy = [](double, double) { return 0.0; };
  CHECK(apply_DG(plan, constg, x, u, w).coeffs().isZero(0.0));

  // Affine g: the result is a1 (u w) whatever x is.
  NemytskiiCoeffs affine = identity_f();
  affine.g = [](double, double y) { return 0.5 * y + 1.0; };
  affine.dg_dy = [](double, double) { return 0.5; };
  NemytskiiCoeffs prod = identity_f();
  const SpectralField a = apply_DG(plan, affine, x, u, w);
  const SpectralField b = apply_DG(plan, affine, random_field(rng, K), u, w);
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK(max_abs_diff(a, 0.5 * apply_DG(plan, prod, x, u, w)) <= 1e-14);
}

TEST_CASE("central differences converge at second order") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(0.5, 1.5);
  const Index K = 31;
  const CollocationPlan plan(K);
  for (int trial = 0; trial < 3; ++trial) {
    const double a = ud(rng), b = ud(rng);
    NemytskiiCoeffs nem;
    nem.f = [a, b](double xi, double y) { return std::sin(a * y + b * xi); };
    nem.df_dy = [a, b](double xi, double y) { return a * std::cos(a * y + b * xi); };
    nem.g = [a, b](double xi, double y) { return std::exp(-0.1 * a * y * y) + b * xi; };
    nem.dg_dy = [a](double, double y) { return -0.2 * a * y * std::exp(-0.1 * a * y * y); };
    const SpectralField x = random_field(rng, K, 1.5);
    const SpectralField u = random_field(rng, K, 1.5);
    const SpectralField w = random_field(rng, K, 1.5);
    auto fd_error = [&](double eps) {
      const SpectralField fd = (1.0 / (2.0 * eps)) * (apply_F(plan, nem, x + eps * u) - apply_F(plan, nem, x - eps * u));
      return (fd - apply_DF(plan, nem, x, u)).coeffs().norm();
    };
    auto fd_error_g = [&](double eps) {
      const SpectralField fd =
          (1.0 / (2.0 * eps)) * (apply_G(plan, nem, x + eps * u, w) - apply_G(plan, nem, x - eps * u, w));
      return (fd - apply_DG(plan, nem, x, u, w)).coeffs().norm();
    };
    const double rf = fd_error(2e-2) / fd_error(1e-2);
    const double rg = fd_error_g(2e-2) / fd_error_g(1e-2);
    CHECK(rf > 3.5);
    CHECK(rf < 4.5);
    CHECK(rg > 3.5);
    CHECK(rg < 4.5);
  }
}

TEST_CASE("DG is linear in each direction") {
  std::mt19937_64 rng(6);
  const Index K = 31;
  const CollocationPlan plan(K);
  NemytskiiCoeffs nem = identity_f();
  nem.dg_dy = [](double xi, double y) { return std::cos(y) + xi; };
  for (int trial = 0; trial < 10; ++trial) {
    const SpectralField x = random_field(rng, K), u1 = random_field(rng, K), u2 = random_field(rng, K),
                        w = random_field(rng, K);
    const double s = 1.7;
    const SpectralField lhs = apply_DG(plan, nem, x, u1 + s * u2, w);
    const SpectralField rhs = apply_DG(plan, nem, x, u1, w) + s * apply_DG(plan, nem, x, u2, w);
    CHECK((lhs - rhs).coeffs().norm() <= 1e-12 * rhs.coeffs().norm());
    const SpectralField lw = apply_DG(plan, nem, x, w, u1 + s * u2);
    const SpectralField rw = apply_DG(plan, nem, x, w, u1) + s * apply_DG(plan, nem, x, w, u2);
    CHECK((lw - rw).coeffs().norm() <= 1e-12 * rw.coeffs().norm());
  }
}

TEST_CASE("affine g decomposes into its linear and constant parts") {
  std::mt19937_64 rng(7);
  const Index K = 63;
  const CollocationPlan plan(K);
  const double a1 = 0.5, a2 = 1.0;
  NemytskiiCoeffs affine = identity_f();
  affine.g = [=](double, double y) { return a1 * y + a2; };
  const SpectralField x = random_field(rng, K), u = random_field(rng, K);
  const SpectralField lhs = apply_G(plan, affine, x, u);
  const SpectralField rhs = a1 * apply_G(plan, identity_f(), x, u) + a2 * u;
  CHECK(max_abs_diff(lhs, rhs) <= 1e-13);
}
